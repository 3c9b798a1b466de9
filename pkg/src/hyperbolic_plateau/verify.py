"""Independent oracles and hypothesis checks.

Barrier spheres with constant curvature sigma, the sphere non-intersection
test, the structure conditions on ubar and psi, the almost-round search, a
radial shooting oracle and the property suite behind ``hyperbolic-plateau verify``.
"""

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.spatial.distance import pdist

from .families import CapPsi, CapSubsolution
from .grid import GridDomain, ScalarField, SubsolutionSpec, build_domain, field_jets
from .hypgeo import GraphJet, check_identities, curvature_frame, curvature_matrix_batch
from .models import (
    ArgumentError,
    DomainError,
    OracleError,
    Orientation,
    RunConfig,
    Verdict,
)
from .solver import ProblemSpec, solve_dirichlet
from .symfunc import f_batch
from .voper import (
    VJet,
    assemble_G,
    assemble_G_batch,
    finite_difference_derivatives,
    jacobian_mismatch,
)

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8
MARGINAL_BAND = 1e-6
SIGMA_GRID = 50
CONDITION_SLICES = 5


@dataclass(frozen=True)
class BarrierSphere:
    """Euclidean sphere of radius R whose centre sits at height +sigma R (inward) or -sigma R (outward)."""

    center_horizontal: Tuple[float, ...]
    sigma: float
    R: float
    orientation: Orientation = Orientation.INWARD

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_horizontal", tuple(float(c) for c in self.center_horizontal))
        if not 0.0 < self.sigma < 1.0:
            raise ArgumentError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.R > 0:
            raise ArgumentError(f"radius must be positive, got {self.R}")

    @property
    def n(self) -> int:
        return len(self.center_horizontal)

    @property
    def euclidean_center(self) -> np.ndarray:
        sign = 1.0 if self.orientation is Orientation.INWARD else -1.0
        return np.append(self.center_horizontal, sign * self.sigma * self.R)

    def contains(self, points: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
        """Strict membership of points (..., n + 1) in the open ball."""
        d = np.linalg.norm(np.asarray(points, dtype=float) - self.euclidean_center, axis=-1)
        return d < self.R * (1.0 - rtol)


def cap_field(sphere: BarrierSphere, x: Sequence[float]) -> Tuple[float, np.ndarray, np.ndarray]:
    """Height, gradient and Hessian of the cap of ``sphere`` with curvature sigma.

    OUTWARD spheres give the upper cap u = -sigma R + sqrt(R^2 - |x - b'|^2),
    INWARD spheres the lower cap u = sigma R - sqrt(R^2 - |x - b'|^2).

    Raises:
        DomainError: If x is outside the footprint where the cap is a positive graph
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (sphere.n,):
        raise ArgumentError(f"point must have {sphere.n} coordinates, got shape {x.shape}")
    d = x - np.asarray(sphere.center_horizontal)
    S2 = sphere.R**2 - d @ d
    if S2 <= 0:
        raise DomainError(f"x={x.tolist()} lies outside the sphere's horizontal extent")
    S = np.sqrt(S2)
    sR = sphere.sigma * sphere.R
    eye = np.eye(sphere.n)
    if sphere.orientation is Orientation.OUTWARD:
        u, du, d2u = -sR + S, -d / S, -eye / S - np.outer(d, d) / S**3
    else:
        u, du, d2u = sR - S, d / S, eye / S + np.outer(d, d) / S**3
    if u <= 0:
        raise DomainError(f"cap is not above the ideal boundary at x={x.tolist()}")
    return float(u), du, d2u


def cap_through_circle(
    sigma: float, rho: float, eps: float, center: Optional[Sequence[float]] = None, n: int = 2
) -> BarrierSphere:
    """OUTWARD sphere of curvature sigma passing through the circle |x - c| = rho at height eps."""
    if not 0.0 < sigma < 1.0 or rho <= 0 or eps < 0:
        raise ArgumentError(f"need 0 < sigma < 1, rho > 0, eps >= 0; got {sigma}, {rho}, {eps}")
    R = (eps * sigma + np.sqrt(eps**2 + (1.0 - sigma**2) * rho**2)) / (1.0 - sigma**2)
    c = tuple(center) if center is not None else (0.0,) * n
    return BarrierSphere(c, sigma, float(R), Orientation.OUTWARD)


def _inward_radius(sigma: float, eps: float, d: float) -> float:
    # (sigma R - eps)^2 + d^2 = R^2, positive root
    return float((-sigma * eps + np.sqrt(eps**2 + (1.0 - sigma**2) * d**2)) / (1.0 - sigma**2))


def lemma_b_sphere(
    x0: Sequence[float], inward_normal: Sequence[float], r0: float, sigma: float, eps: float
) -> BarrierSphere:
    """INWARD ball whose slice at height eps is the exterior disk of radius r0 tangent at x0."""
    gamma = np.asarray(inward_normal, dtype=float)
    gamma = gamma / np.linalg.norm(gamma)
    center = np.asarray(x0, dtype=float) - r0 * gamma
    return BarrierSphere(tuple(center), sigma, _inward_radius(sigma, eps, r0), Orientation.INWARD)


def max_disjoint_radius(center: Sequence[float], sigma: float, eps: float, lift: np.ndarray) -> float:
    """Largest R with the INWARD ball at ``center`` missing every lift point (x, eps)."""
    d = float(np.min(np.linalg.norm(np.asarray(lift) - np.asarray(center), axis=-1)))
    return _inward_radius(sigma, eps, d)


def _flat_lift(domain: GridDomain) -> np.ndarray:
    return np.vstack([domain.coords, domain.crossings])


def lemma_b_test(
    solution: ScalarField, domain: GridDomain, sphere: BarrierSphere, k: int
) -> Tuple[Verdict, Dict[str, Any]]:
    """Check that no graph point (x, u(x)) lies inside an INWARD barrier ball.

    Returns NOT_APPLICABLE with the broken precondition named in the witness when the
    ball center is over the closure of the domain, too close to Gamma_eps, meets the lift
    of the domain to height eps, or the solution's curvature does not exceed sigma.
    """
    eps = domain.eps
    b = np.asarray(sphere.center_horizontal)
    if sphere.orientation is not Orientation.INWARD:
        return Verdict.NOT_APPLICABLE, {"reason": "orientation"}
    if float(domain.sub.ubar.value(b)) > eps:
        return Verdict.NOT_APPLICABLE, {"reason": "center over domain"}
    gap = float(np.min(np.linalg.norm(domain.crossings - b, axis=-1)))
    if gap <= eps / sphere.sigma:
        return Verdict.NOT_APPLICABLE, {"reason": "center too close to boundary", "distance": gap}
    lift = _flat_lift(domain)
    lifted = np.column_stack([lift, np.full(len(lift), eps)])
    if np.any(sphere.contains(lifted)):
        return Verdict.NOT_APPLICABLE, {"reason": "ball meets the boundary lift"}

    V = solution.values
    dv, d2v = field_jets(domain, V)
    G = assemble_G_batch(V, dv, d2v, k).G
    level = comb(domain.n, k) ** (1.0 / k) * sphere.sigma
    interior = domain.interior
    if interior.any() and float(G[interior].min()) <= level:
        return Verdict.NOT_APPLICABLE, {"reason": "curvature not above sigma", "min_f": float(G.min())}

    graph = np.column_stack([domain.coords, np.sqrt(V)])
    inside = sphere.contains(graph)
    if np.any(inside):
        i = int(np.argmax(inside))
        return Verdict.FAIL, {"point": graph[i].tolist()}
    return Verdict.PASS, {}


def random_lemma_b_spheres(
    solution: ScalarField, k: int, count: int, rng: np.random.Generator
) -> List[BarrierSphere]:
    """Barrier balls that satisfy the non-intersection preconditions for ``solution``.

    Half are tangent to the lift of Gamma_eps at a random crossing, the rest are
    centred further out with a radius below the largest disjoint one.
    """
    domain = solution.domain
    eps = domain.eps
    V = solution.values
    dv, d2v = field_jets(domain, V)
    G = assemble_G_batch(V, dv, d2v, k).G
    f_min = float(G[domain.interior].min()) if domain.interior.any() else float(G.min())
    sigma = min(0.9 * f_min / comb(domain.n, k) ** (1.0 / k), 0.99)
    if sigma <= 0:
        return []
    lift = _flat_lift(domain)
    spheres = []
    for i in range(count):
        j = int(rng.integers(len(domain.crossings)))
        x0, outward = domain.crossings[j], domain.crossing_normals[j]
        r0 = (eps / sigma) * (1.1 + 2.0 * rng.random())
        if i % 2 == 0:
            spheres.append(lemma_b_sphere(x0, -outward, r0, sigma, eps))
            continue
        center = x0 + (r0 + domain.diameter * rng.random()) * outward
        R = rng.uniform(0.3, 1.0) * max_disjoint_radius(center, sigma, eps, lift)
        spheres.append(BarrierSphere(tuple(center), sigma, R, Orientation.INWARD))
    return spheres


@dataclass
class HypothesisReport:
    """Outcome of the structure conditions and the almost-round search."""

    cond12: Verdict
    cond13: Verdict
    almost_round: Verdict
    cond12_min: float = float("nan")
    cond13_min: List[float] = field(default_factory=list)
    marginal: List[str] = field(default_factory=list)
    witnesses: Dict[str, Any] = field(default_factory=dict)
    almost_round_params: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cond12": self.cond12.value,
            "cond13": self.cond13.value,
            "almost_round": self.almost_round.value,
            "cond12_min": self.cond12_min,
            "cond13_min": list(self.cond13_min),
            "marginal": list(self.marginal),
            "witnesses": dict(self.witnesses),
            "almost_round_params": self.almost_round_params,
        }


def interior_samples(sub: SubsolutionSpec, eps: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of Omega_eps by rejection from the bounding box."""
    lo, hi = (np.asarray(b, dtype=float) for b in sub.domain_box)
    found: List[np.ndarray] = []
    total = 0
    for _ in range(1000):
        cand = lo + (hi - lo) * rng.random((max(4 * count, 64), lo.size))
        keep = cand[sub.ubar.value(cand) > eps]
        found.append(keep)
        total += len(keep)
        if total >= count:
            break
    pts = np.vstack(found)[:count]
    if len(pts) == 0:
        raise DomainError(f"no sample points with ubar > {eps}")
    return pts


def _subsolution_quotient(ubar, x: np.ndarray, k: int) -> np.ndarray:
    u, du, d2u = ubar.value(x), ubar.gradient(x), ubar.hessian(x)
    a, _, _ = curvature_matrix_batch(u, du, d2u)
    f, _, _ = f_batch(np.linalg.eigvalsh(a), k)
    return u / f


def _quotient_hessian(ubar, x: np.ndarray, k: int, step: float) -> np.ndarray:
    n = x.shape[-1]
    H = np.empty(x.shape[:-1] + (n, n))
    eye = np.eye(n) * step
    q0 = _subsolution_quotient(ubar, x, k)
    for a in range(n):
        for b in range(a, n):
            if a == b:
                val = (_subsolution_quotient(ubar, x + eye[a], k) - 2.0 * q0
                       + _subsolution_quotient(ubar, x - eye[a], k)) / step**2
            else:
                pp = _subsolution_quotient(ubar, x + eye[a] + eye[b], k)
                pm = _subsolution_quotient(ubar, x + eye[a] - eye[b], k)
                mp = _subsolution_quotient(ubar, x - eye[a] + eye[b], k)
                mm = _subsolution_quotient(ubar, x - eye[a] - eye[b], k)
                val = (pp - pm - mp + mm) / (4.0 * step**2)
            H[..., a, b] = H[..., b, a] = val
    return H


def condition_matrix(psi, x: np.ndarray, u: np.ndarray, k: int) -> np.ndarray:
    """The (n + 1) x (n + 1) structure matrix of psi at points (x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = x.shape[-1]
    p = psi.value(x, u)
    px, pu = psi.dx(x, u), psi.du(x, u)
    pxx, puu, pxu = psi.dxx(x, u), psi.duu(x, u), psi.dxu(x, u)
    c = (k + 1.0) / k
    M = np.empty(x.shape[:-1] + (n + 1, n + 1))
    eye = np.eye(n)
    M[..., :n, :n] = (
        c * px[..., :, None] * px[..., None, :] / p[..., None, None]
        - pxx
        + (-k * p / u**2 + pu / u)[..., None, None] * eye
    )
    off = c * px * (pu / p)[..., None] - pxu - px / u[..., None]
    M[..., :n, n] = off
    M[..., n, :n] = off
    M[..., n, n] = c * pu**2 / p - puu - k * p / u**2 - pu / u
    return M


def _boundary_samples(sub: SubsolutionSpec, center: np.ndarray, count: int) -> np.ndarray:
    """Points of {ubar = 0} along rays from ``center``."""
    n = sub.n
    if n == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        # Fibonacci sphere
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = np.pi * (1.0 + 5**0.5) * i
        r = np.sqrt(1.0 - z * z)
        dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        if n > 3:
            dirs = np.hstack([dirs, np.zeros((count, n - 3))])
    lo, hi = (np.asarray(b, dtype=float) for b in sub.domain_box)
    reach = float(np.linalg.norm(hi - lo))
    pts = []
    for d in dirs:
        g = lambda s: float(sub.ubar.value(center + s * d))  # noqa: E731
        if g(reach) >= 0:
            raise DomainError("subsolution does not vanish inside the box")
        pts.append(center + brentq(g, 0.0, reach, xtol=1e-12) * d)
    return np.array(pts)


def almost_round(
    spec: ProblemSpec, psi_min: float, rays: int = 64
) -> Tuple[Verdict, Optional[Dict[str, float]], Dict[str, Any]]:
    """Search (sigma_s, sigma_b, R_s, R_b) on a sigma grid with apex-tangent nested spheres."""
    ubar = spec.sub.ubar
    center = np.asarray(getattr(ubar, "center", np.zeros(spec.n)), dtype=float)
    try:
        gamma0 = _boundary_samples(spec.sub, center, rays)
    except DomainError as e:
        return Verdict.FAIL, None, {"reason": str(e)}
    dist = np.linalg.norm(gamma0 - center, axis=-1)
    r_in, r_out = float(dist.min()), float(dist.max())
    sigma_max = min((psi_min / comb(spec.n, spec.k)) ** (1.0 / spec.k), 1.0 - 1e-9)
    sig = sigma_max * np.arange(1, SIGMA_GRID + 1) / (SIGMA_GRID + 1)
    ratio = np.sqrt((1.0 - sig) / (1.0 + sig))
    # margin[s, b] >= 0 iff the apex-tangent pair nests Omega
    margin = r_in * ratio[:, None] - r_out * ratio[None, :]
    valid = sig[:, None] < sig[None, :]
    margin = np.where(valid, margin, -np.inf)
    s, b = np.unravel_index(int(np.argmax(margin)), margin.shape)
    if not np.isfinite(margin[s, b]) or margin[s, b] < 0:
        return Verdict.FAIL, None, {"r_in": r_in, "r_out": r_out, "sigma_max": sigma_max}
    R_s = r_in / np.sqrt(1.0 - sig[s] ** 2)
    R_b = R_s * (1.0 - sig[s]) / (1.0 - sig[b])
    params = {"sigma_s": float(sig[s]), "sigma_b": float(sig[b]), "R_s": float(R_s),
              "R_b": float(R_b), "r_in": r_in, "r_out": r_out}
    return Verdict.PASS, params, {}


def check_conditions(spec: ProblemSpec, sample_points: np.ndarray, tol: float = PSD_TOL) -> HypothesisReport:
    """Evaluate both structure conditions and the almost-round search at sample points.

    When k = n the verdicts are NOT_APPLICABLE and the values are still reported.
    Failures for k < n with n >= 3 are logged as warnings.
    """
    x = np.atleast_2d(np.asarray(sample_points, dtype=float))
    n, k = spec.n, spec.k
    ubar = spec.sub.ubar
    witnesses: Dict[str, Any] = {}
    marginal: List[str] = []

    scale = max(1.0, float(np.abs(x).max()))
    H = _quotient_hessian(ubar, x, k, 1e-4 * scale)
    eig12 = np.linalg.eigvalsh(H)[:, 0]
    cond12_min = float(eig12.min())
    cond12 = Verdict.PASS if cond12_min >= -tol else Verdict.FAIL
    if cond12 is Verdict.FAIL:
        witnesses["cond12"] = {"point": x[int(np.argmin(eig12))].tolist(), "eigenvalue": cond12_min}
    if abs(cond12_min) < MARGINAL_BAND:
        marginal.append("cond12")

    ub = ubar.value(x)
    diam = float(pdist(x).max()) if len(x) > 1 else 0.0
    heights = np.linspace(max(float(ub.min()), spec.eps), np.sqrt(spec.eps**2 + diam**2) + spec.eps,
                          CONDITION_SLICES)
    cond13_min = []
    cond13 = Verdict.PASS
    psi_min = np.inf
    for u in heights:
        uu = np.full(len(x), u)
        psi_min = min(psi_min, float(spec.psi.value(x, uu).min()))
        eig13 = np.linalg.eigvalsh(condition_matrix(spec.psi, x, uu, k))[:, 0]
        worst = float(eig13.min())
        cond13_min.append(worst)
        if worst < -tol and cond13 is Verdict.PASS:
            cond13 = Verdict.FAIL
            witnesses["cond13"] = {"point": x[int(np.argmin(eig13))].tolist(), "u": float(u),
                                   "eigenvalue": worst}
        if abs(worst) < MARGINAL_BAND and worst != 0.0 and "cond13" not in marginal:
            marginal.append("cond13")

    round_verdict, params, round_witness = almost_round(spec, psi_min)
    if round_verdict is Verdict.FAIL:
        witnesses["almost_round"] = round_witness

    if k == n:
        cond12 = cond13 = round_verdict = Verdict.NOT_APPLICABLE
    elif n >= 3:
        for name, verdict in (("cond12", cond12), ("cond13", cond13), ("almost_round", round_verdict)):
            if verdict is Verdict.FAIL:
                logger.warning("hypothesis %s fails for k=%d < n=%d: %s", name, k, n, witnesses[name])
    return HypothesisReport(
        cond12=cond12,
        cond13=cond13,
        almost_round=round_verdict,
        cond12_min=cond12_min,
        cond13_min=cond13_min,
        marginal=marginal,
        witnesses=witnesses,
        almost_round_params=params,
    )


@dataclass
class RadialProfile:
    """Radial solution u(r) on [0, radius] from the shooting oracle."""

    u0: float
    radius: float
    eps: float
    center: np.ndarray
    r_start: float
    u2_0: float
    solution: Any = field(repr=False)
    mismatch: float = 0.0

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        near = self.u0 + 0.5 * self.u2_0 * r**2
        far = self.solution.sol(np.clip(r, self.r_start, self.radius))[0]
        return np.where(r < self.r_start, near, far)

    def height(self, x: np.ndarray) -> np.ndarray:
        return self(np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1))


def radial_oracle(spec: ProblemSpec, radius: Optional[float] = None) -> RadialProfile:
    """Shoot on u(0) for the rotationally symmetric Dirichlet problem on a disk.

    The radial and tangential curvatures are computed from the profile directly:
    kappa_t = u u'/(r w) + 1/w and kappa_rad = u u''/w^3 + 1/w.

    Raises:
        ArgumentError: If psi or ubar are not radial about a common centre
        OracleError: If no bracket for u(0) is found
    """
    n, k, eps = spec.n, spec.k, spec.eps
    ubar = spec.sub.ubar
    if not spec.psi.is_radial or not getattr(ubar, "is_radial", False):
        raise ArgumentError("radial oracle needs radial psi and subsolution")
    if not np.allclose(spec.psi.center, ubar.center):
        raise ArgumentError("psi and subsolution must share a centre")
    if radius is None:
        radius = ubar.level_radius(eps)
    c_all, c_t, c_m = comb(n, k), comb(n - 1, k), comb(n - 1, k - 1)
    psi = spec.psi
    r_start = 1e-6 * radius

    def rhs(r, y):
        u, up = y
        w = np.sqrt(1.0 + up * up)
        kt = u * up / (r * w) + 1.0 / w
        kr = (psi.radial(r, u) - c_t * kt**k) / (c_m * kt ** (k - 1))
        return [up, (kr - 1.0 / w) * w**3 / u]

    def hit_ground(r, y):
        return y[0]

    def flat(r, y):
        w = np.sqrt(1.0 + y[1] ** 2)
        return y[0] * y[1] / (r * w) + 1.0 / w

    hit_ground.terminal = True
    flat.terminal = True

    def shoot(u0):
        kappa0 = (float(psi.radial(0.0, u0)) / c_all) ** (1.0 / k)
        u2 = (kappa0 - 1.0) / u0
        y0 = [u0 + 0.5 * u2 * r_start**2, u2 * r_start]
        sol = solve_ivp(rhs, (r_start, radius), y0, method="RK45", rtol=1e-12, atol=1e-14,
                        dense_output=True, events=(hit_ground, flat))
        return sol, u2

    def mismatch(u0):
        sol, _ = shoot(u0)
        if sol.status == 1 or not sol.success:
            return -1.0
        return float(sol.y[0, -1] - eps)

    lo, hi = eps, 2.0 * eps
    if mismatch(lo) >= 0:
        raise OracleError(f"no bracket: u(0)={lo} already reaches eps at r={radius}")
    for _ in range(60):
        if mismatch(hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise OracleError("no bracket for u(0) found")
    u0 = brentq(mismatch, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    sol, u2 = shoot(u0)
    if sol.status != 0:
        raise OracleError("shooting from the bracketed u(0) terminated early")
    miss = abs(float(sol.y[0, -1]) - eps)
    logger.debug("radial oracle u0=%.12g mismatch=%.3e", u0, miss)
    return RadialProfile(u0, float(radius), eps, np.asarray(ubar.center, dtype=float), r_start,
                         u2, sol, miss)


def rotation_residual(solution: ScalarField, spec: ProblemSpec, i: int = 0, j: int = 1,
                      level: Optional[float] = None) -> float:
    """Discrete residual of the linearised equation applied to the rotation field of v.

    Evaluates (L + G_v - Psi_v) phi - (x_i Psi_{x_j} - x_j Psi_{x_i}) with
    phi = x_i v_j - x_j v_i, Psi(x, v) = psi^(1/k)(x, sqrt v) and phi = 0 on Gamma_eps,
    as a max over the fixed region {ubar > level}. The region does not move with h;
    level defaults to halfway between eps and max ubar.

    Raises:
        DomainError: If no node two steps inside the domain lies above level
    """
    domain = solution.domain
    k = spec.k
    V = solution.values
    X = domain.coords - spec.psi.center
    dv, d2v = field_jets(domain, V)
    batch = assemble_G_batch(V, dv, d2v, k)
    phi = X[:, i] * dv[:, j] - X[:, j] * dv[:, i]

    u = np.sqrt(V)
    p = spec.psi.value(domain.coords, u)
    root = (1.0 / k) * p ** (1.0 / k - 1.0)
    Psi_v = root * spec.psi.du(domain.coords, u) / (2.0 * u)
    Psi_x = root[:, None] * spec.psi.dx(domain.coords, u)

    Lphi = (batch.Gv - Psi_v) * phi
    for a in range(domain.n):
        Lphi += batch.Gs[:, a] * (domain.d1[a] @ phi)
        for b in range(a, domain.n):
            weight = 1.0 if a == b else 2.0
            Lphi += weight * batch.Gst[:, a, b] * (domain.d2[(a, b)] @ phi)
    residual = Lphi - (X[:, i] * Psi_x[:, j] - X[:, j] * Psi_x[:, i])
    if level is None:
        level = 0.5 * (domain.eps + spec.sub.peak)
    region = domain.deep_interior(2) & (domain.ubar_values > level)
    if not region.any():
        raise DomainError(f"no nodes two steps inside the domain with ubar > {level}")
    return float(np.abs(residual[region]).max())


def random_convex_jet(rng: np.random.Generator, n: int) -> GraphJet:
    """A random strictly convex jet with hyperbolic curvatures in (0.2, 1.5)."""
    u = rng.uniform(0.5, 2.0)
    p = rng.normal(0.0, 0.5, n)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    a = q @ np.diag(rng.uniform(0.2, 1.5, n)) @ q.T
    w = np.sqrt(1.0 + p @ p)
    down = np.eye(n) + np.outer(p, p) / (1.0 + w)
    d2u = down @ (w * a - np.eye(n)) @ down / u
    return GraphJet(u, p, 0.5 * (d2u + d2u.T))


def jacobian_check(n: int, k: int, samples: int, rng: np.random.Generator,
                   step: float = 1e-5, gv_scale: Optional[float] = None) -> float:
    """Worst relative mismatch of analytic against finite-difference derivatives of G."""
    worst = 0.0
    for _ in range(samples):
        jet = VJet.from_graph_jet(random_convex_jet(rng, n))
        worst = max(worst, jacobian_mismatch(
            assemble_G(jet, k), finite_difference_derivatives(jet, k, step), gv_scale
        ))
    return worst


@dataclass
class PropertyResult:
    """One asserted or reported property of the verification suite."""

    name: str
    passed: bool
    value: Optional[float] = None
    bound: Optional[float] = None
    witness: Dict[str, Any] = field(default_factory=dict)


@dataclass
class PropertyResults:
    """All properties of one suite run, in evaluation order."""

    results: List[PropertyResult] = field(default_factory=list)
    hypotheses: Optional[HypothesisReport] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def first_failure(self) -> Optional[PropertyResult]:
        return next((r for r in self.results if not r.passed), None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "results": [vars(r) for r in self.results],
            "hypotheses": self.hypotheses.to_dict() if self.hypotheses is not None else None,
        }


def sphere_exactness(samples: int, rng: np.random.Generator) -> PropertyResult:
    """kappa = sigma on OUTWARD caps at random footprint points."""
    worst = 0.0
    for n in (2, 3):
        for sigma in (0.25, 0.5, 0.9):
            sphere = BarrierSphere((0.0,) * n, sigma, 1.0, Orientation.OUTWARD)
            foot = sphere.R * np.sqrt(1.0 - sigma**2)
            for _ in range(samples):
                d = rng.normal(size=n)
                x = d / np.linalg.norm(d) * foot * rng.uniform(0.0, 0.95)
                frame = curvature_frame(GraphJet(*cap_field(sphere, x)))
                worst = max(worst, float(np.abs(frame.kappa.as_array() - sigma).max()))
    return PropertyResult("sphere_exactness", worst <= 1e-8, worst, 1e-8)


def identity_suite(samples: int, rng: np.random.Generator) -> PropertyResult:
    worst = 0.0
    for n in (2, 3):
        for _ in range(samples):
            jet = random_convex_jet(rng, n)
            worst = max(worst, check_identities(jet, curvature_frame(jet)).max_residual)
    return PropertyResult("identities", worst <= 1e-8, worst, 1e-8)


def cap_oracle_agreement(sigma: float = 0.5, rho: float = 1.0, eps: float = 0.2) -> PropertyResult:
    """Shooting oracle against the closed-form dome for constant psi."""
    n = k = 2
    sub = SubsolutionSpec(CapSubsolution(n, sigma, rho), ((-2.0, -2.0), (2.0, 2.0)))
    spec = ProblemSpec(n, k, CapPsi(n, [sigma], k), sub, eps)
    try:
        profile = radial_oracle(spec)
    except OracleError as e:
        return PropertyResult("oracle_cap", False, witness={"error": str(e)})
    dome = cap_through_circle(sigma, profile.radius, eps)
    r = np.linspace(0.0, 0.99 * profile.radius, 25)
    exact = np.array([cap_field(dome, np.array([ri, 0.0]))[0] for ri in r])
    err = float(np.abs(profile(r) - exact).max())
    return PropertyResult("oracle_cap", err <= 1e-8, err, 1e-8)


def run_suite(config: RunConfig, problem: ProblemSpec, seed: Optional[int] = None,
              workers: int = 1) -> PropertyResults:
    """Run identity, exactness, Jacobian and oracle checks, plus solve-based ones when enabled."""
    seed = config.verify.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    samples = config.verify.samples
    out = PropertyResults()

    out.results.append(sphere_exactness(samples, rng))
    out.results.append(identity_suite(samples, rng))

    gv_scale = 1.01 if config.verify.fault_injection == "gv" else None
    worst = 0.0
    for n in (2, 3):
        for k in sorted({1, 2, n}):
            worst = max(worst, jacobian_check(n, k, max(samples // 10, 5), rng,
                                              config.tolerances.fd_step, gv_scale))
    out.results.append(PropertyResult("jacobian", worst <= 1e-6, worst, 1e-6))

    points = interior_samples(problem.sub, problem.eps, samples, rng)
    out.hypotheses = check_conditions(problem, points, config.tolerances.psd)
    out.results.append(PropertyResult("conditions", True, witness=out.hypotheses.to_dict()))

    out.results.append(cap_oracle_agreement())

    if config.verify.solve:
        domain = build_domain(problem.sub, problem.eps, config.grid.h)
        solution, report = solve_dirichlet(problem, domain, config.path, config.tolerances,
                                           workers=workers)
        if not report.converged:
            out.results.append(PropertyResult("solve", False, witness=report.failure or {}))
            return out
        for check in report.checks:
            out.results.append(PropertyResult(f"bound:{check.name}", check.passed, check.value,
                                              check.bound))
        spheres = random_lemma_b_spheres(solution, problem.k, config.verify.lemma_b_placements, rng)
        failures = []
        skipped: Dict[str, int] = {}
        applicable = 0
        for sphere in spheres:
            verdict, witness = lemma_b_test(solution, domain, sphere, problem.k)
            if verdict is Verdict.NOT_APPLICABLE:
                skipped[witness["reason"]] = skipped.get(witness["reason"], 0) + 1
                continue
            applicable += 1
            if verdict is Verdict.FAIL:
                failures.append(witness)
        if failures:
            witness = failures[0]
        elif not applicable:
            # no applicable placement counts as a failure
            witness = {"reason": "no applicable placement", "placements": len(spheres),
                       "not_applicable": skipped}
        else:
            witness = {"not_applicable": skipped} if skipped else {}
        out.results.append(PropertyResult("lemma_b", applicable > 0 and not failures,
                                          float(applicable), witness=witness))

    for r in out.results:
        if not r.passed:
            logger.warning("property %s failed: value=%s bound=%s", r.name, r.value, r.bound)
    return out
