"""Decreasing-eps continuation toward the asymptotic Plateau solution.

Each level is solved on its own GridDomain, warm-started from the previous one,
and measured on a fixed interior probe {ubar > eps_0}.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import griddata

from .grid import GridDomain, ScalarField, build_domain, field_jets
from .hypgeo import CurvatureFrame, curvature_matrix_batch
from .models import (
    ArgumentError,
    DomainError,
    HeightMode,
    PathConfig,
    SubsolutionError,
    ToleranceConfig,
)
from .solver import ProblemSpec, SolverReport, solve_dirichlet

logger = logging.getLogger(__name__)


@dataclass
class EpsilonSchedule:
    """Strictly decreasing positive eps values and the probe level eps_0."""

    eps_values: List[float]
    eps_floor: Optional[float] = None
    probe_eps: Optional[float] = None

    def __post_init__(self) -> None:
        self.eps_values = [float(e) for e in self.eps_values]
        if not self.eps_values:
            raise ArgumentError("eps schedule is empty")
        if any(e <= 0 for e in self.eps_values):
            raise ArgumentError(f"eps values must be positive: {self.eps_values}")
        if any(b >= a for a, b in zip(self.eps_values, self.eps_values[1:])):
            raise ArgumentError(f"eps values must be strictly decreasing: {self.eps_values}")

    @property
    def probe_level(self) -> float:
        return self.probe_eps if self.probe_eps is not None else self.eps_values[0]

    @property
    def levels(self) -> List[float]:
        """Scheduled values not below eps_floor."""
        if self.eps_floor is None:
            return list(self.eps_values)
        return [e for e in self.eps_values if e >= self.eps_floor]

    def validate(self, peak: float) -> None:
        """Raises DomainError when the schedule cannot produce a nonempty domain."""
        if self.eps_floor is not None and self.eps_floor >= peak:
            raise DomainError(f"eps_floor {self.eps_floor} is not below max ubar = {peak}")
        if self.eps_values[0] >= peak:
            raise DomainError(f"first eps {self.eps_values[0]} is not below max ubar = {peak}")
        if self.probe_level < self.eps_values[0] or self.probe_level >= peak:
            raise DomainError(
                f"probe level {self.probe_level} must lie in [{self.eps_values[0]}, {peak})"
            )


@dataclass
class StabilityDiagnostics:
    """Interior quantities tracked along the schedule."""

    m0: float
    theta_probe: float
    c2_interior: float
    cauchy_gap: Optional[float] = None


@dataclass
class EpsilonRecord:
    """One solved level."""

    eps: float
    h: float
    field: ScalarField
    report: SolverReport
    diagnostics: StabilityDiagnostics
    probe_values: np.ndarray = field(repr=False)


@dataclass
class EpsilonPathResult:
    """Records for every solved level, the failure that stopped the path, and the extrapolant."""

    records: List[EpsilonRecord]
    probe_points: np.ndarray
    failure: Optional[Dict[str, Any]] = None
    plateau_estimate: Optional[np.ndarray] = None

    @property
    def complete(self) -> bool:
        return self.failure is None

    def schedule_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for r in self.records:
            rows.append({
                "eps": r.eps,
                "h": r.h,
                "residual": r.report.final_residual,
                "m0": r.diagnostics.m0,
                "theta_probe": r.diagnostics.theta_probe,
                "c2_interior": r.diagnostics.c2_interior,
                "cauchy_gap": r.diagnostics.cauchy_gap,
                "newton_total": sum(s.iterations for s in r.report.steps),
                "warm_start": r.report.warm_start_used,
            })
        return rows


def killing_probe(frame: CurvatureFrame, point: Sequence[float]) -> Tuple[float, float]:
    """Conformal Killing field ingredients at a graph point (x, x_{n+1}).

    Returns:
        Tuple (X . nu / nu^{n+1}, phi) with X = x_{n+1} x + (x_{n+1}^2 - |x|^2)/2 e_{n+1}
        and phi = (x_{n+1}^2 + |x|^2) / (2 x_{n+1})

    Raises:
        DomainError: If nu^{n+1} <= 0 or x_{n+1} <= 0
    """
    point = np.asarray(point, dtype=float)
    x, height = point[:-1], float(point[-1])
    if frame.nu_vert <= 0:
        raise DomainError(f"normal must point upward, nu^(n+1) = {frame.nu_vert}")
    if height <= 0:
        raise DomainError(f"point must lie in the half-space, got height {height}")
    X = np.append(height * x, 0.5 * (height**2 - x @ x))
    return float(X @ frame.nu / frame.nu_vert), float((height**2 + x @ x) / (2.0 * height))


def _height_jets(domain: GridDomain, V: np.ndarray):
    u = np.sqrt(V)
    dv, d2v = field_jets(domain, V)
    du = dv / (2.0 * u[:, None])
    d2u = (0.5 * d2v - du[:, :, None] * du[:, None, :]) / u[:, None, None]
    return u, du, d2u


def _same_lattice(a: GridDomain, b: GridDomain) -> bool:
    return a.h == b.h and a.shape == b.shape and np.allclose(a.lower, b.lower)


def values_at(domain: GridDomain, values: np.ndarray, points: np.ndarray,
              reference: Optional[GridDomain] = None) -> np.ndarray:
    """Nodal values at ``points``: exact lookup on a shared lattice, linear interpolation otherwise."""
    if reference is not None and _same_lattice(domain, reference):
        multi = np.rint((points - domain.lower) / domain.h).astype(int)
        flat = np.ravel_multi_index(tuple(multi.T), domain.shape)
        idx = domain.index[flat]
        if np.all(idx >= 0):
            return values[idx]
    out = griddata(domain.coords, values, points, method="linear")
    missing = np.isnan(out)
    if missing.any():
        out[missing] = griddata(domain.coords, values, points[missing], method="nearest")
    return out


def warm_start(previous: ScalarField, domain: GridDomain) -> ScalarField:
    """vbar + max(v_prev - vbar_prev, 0), extended by zero outside the previous domain."""
    prev = previous.domain
    excess = np.maximum(previous.values - prev.ubar_values**2, 0.0)
    if _same_lattice(prev, domain):
        idx = prev.index[domain.nodes]
        mapped = np.where(idx >= 0, excess[np.maximum(idx, 0)], 0.0)
    else:
        mapped = griddata(prev.coords, excess, domain.coords, method="linear", fill_value=0.0)
    return ScalarField(domain, domain.ubar_values**2 + mapped, "v")


class _Diagnostics:
    """Holds a, alpha, beta and the probe ball fixed at the first level."""

    def __init__(self, alpha: float, beta: Optional[float]):
        self.alpha = alpha
        self.beta = beta
        self.a: Optional[float] = None
        self.center: Optional[np.ndarray] = None
        self.radius: Optional[float] = None

    def measure(self, domain: GridDomain, V: np.ndarray, probe: np.ndarray) -> StabilityDiagnostics:
        u, du, d2u = _height_jets(domain, V)
        u, du, d2u = u[probe], du[probe], d2u[probe]
        x = domain.coords[probe]
        a_mat, _, w = curvature_matrix_batch(u, du, d2u)
        kappa_max = np.linalg.eigvalsh(a_mat)[:, -1]
        nu = 1.0 / w
        if self.a is None:
            self.a = 0.5 * float(nu.min())
            self.center = x.mean(axis=0)
            self.radius = float(np.linalg.norm(x - self.center, axis=-1).max()) + domain.h
            if self.beta is None:
                self.beta = 2.0 * self.alpha * float(u.max()) * float((1.0 / nu).max()) ** 3
        gap = nu - self.a
        m0 = float((kappa_max / gap).max()) if np.all(gap > 0) else float("inf")

        rho = self.radius**2 - np.sum((x - self.center) ** 2, axis=-1)
        killing = -u * np.sum(x * du, axis=-1) + 0.5 * (u * u - np.sum(x * x, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = (2.0 * np.log(rho) + self.alpha * (u / nu) ** 2 - self.beta * killing
                     + np.log(np.log(np.maximum(kappa_max, np.e))))
        theta = theta[rho > 0]
        c2 = float(np.linalg.norm(d2u, ord=2, axis=(1, 2)).max())
        return StabilityDiagnostics(
            m0=m0,
            theta_probe=float(theta.max()) if theta.size else float("nan"),
            c2_interior=c2,
        )


def richardson(eps: Sequence[float], values: Sequence[np.ndarray]) -> np.ndarray:
    """Extrapolate probe values to eps = 0 from the last two levels, assuming linear dependence on eps."""
    if len(values) < 2:
        return np.asarray(values[-1], dtype=float)
    e0, e1 = eps[-2], eps[-1]
    v0, v1 = np.asarray(values[-2]), np.asarray(values[-1])
    return v1 + (v1 - v0) * e1 / (e0 - e1)


def run_epsilon_path(
    problem: ProblemSpec,
    schedule: EpsilonSchedule,
    h: float,
    mode: HeightMode = HeightMode.FIXED,
    path: Optional[PathConfig] = None,
    tolerances: Optional[ToleranceConfig] = None,
    theta_alpha: float = 1.0,
    theta_beta: Optional[float] = None,
    workers: int = 1,
) -> EpsilonPathResult:
    """Solve along the schedule; a failure truncates the records and is returned, not raised.

    Raises:
        DomainError: If the schedule itself is inadmissible for the subsolution
    """
    schedule.validate(problem.sub.peak)
    levels = schedule.levels
    if problem.k != 2:
        logger.info("eps path with k=%d: interior stability is tracked but not asserted", problem.k)

    diag = _Diagnostics(theta_alpha, theta_beta)
    records: List[EpsilonRecord] = []
    probe_points: Optional[np.ndarray] = None
    probe_domain: Optional[GridDomain] = None
    previous: Optional[ScalarField] = None
    failure = None

    for i, eps in enumerate(levels):
        h_i = h if mode is HeightMode.FIXED else h * eps / levels[0]
        try:
            domain = build_domain(problem.sub, eps, h_i)
            init = warm_start(previous, domain) if previous is not None else None
            solution, report = solve_dirichlet(problem.with_eps(domain.eps), domain, path,
                                               tolerances, init, workers)
        except (DomainError, SubsolutionError) as e:
            failure = {"index": i, "eps": eps, "message": str(e)}
            logger.warning("eps path stopped at eps=%g: %s", eps, e)
            break
        if not report.converged:
            failure = {"index": i, "eps": eps, **(report.failure or {})}
            logger.warning("eps path stopped at eps=%g: %s", eps, failure.get("message"))
            break

        probe = domain.ubar_values > schedule.probe_level
        if not probe.any():
            failure = {"index": i, "eps": eps,
                       "message": f"probe level {schedule.probe_level} leaves no nodes at eps={eps}"}
            logger.warning("eps path stopped at eps=%g: %s", eps, failure["message"])
            break
        if probe_points is None:
            probe_points = domain.coords[probe]
            probe_domain = domain
        u = np.sqrt(solution.values)
        probe_values = values_at(domain, u, probe_points, probe_domain)
        diagnostics = diag.measure(domain, solution.values, probe)
        if records:
            diagnostics.cauchy_gap = float(np.abs(probe_values - records[-1].probe_values).max())
        logger.info(
            "eps=%g h=%g: m0=%.4g c2=%.4g gap=%s", eps, h_i, diagnostics.m0,
            diagnostics.c2_interior, diagnostics.cauchy_gap,
        )
        records.append(EpsilonRecord(domain.eps, h_i, solution, report, diagnostics, probe_values))
        previous = solution

    estimate = None
    if records:
        estimate = richardson([r.eps for r in records], [r.probe_values for r in records])
    return EpsilonPathResult(
        records=records,
        probe_points=probe_points if probe_points is not None else np.empty((0, problem.n)),
        failure=failure,
        plateau_estimate=estimate,
    )
