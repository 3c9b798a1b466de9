"""The v = u^2 form of the curvature operator and its exact derivatives.

With s = sqrt(v), W = sqrt(4v + |Dv|^2) and
gamma^{ik} = delta_ik - v_i v_k / (W (2s + W)), the curvature matrix is
a = (2s/W) gamma (I + D^2v / 2) gamma and G(D^2v, Dv, v) = f(lambda(a)).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hypgeo import GraphJet
from .models import ArgumentError, DomainError
from .symfunc import cone_margin, spectral_derivative

logger = logging.getLogger(__name__)

# Nodes per task when assembly is spread over a thread pool.
CHUNK_SIZE = 4096


@dataclass
class VJet:
    """Second order jet of v = u^2 at one point."""

    v: float
    dv: np.ndarray
    d2v: np.ndarray

    def __post_init__(self) -> None:
        self.v = float(self.v)
        self.dv = np.asarray(self.dv, dtype=float).reshape(-1)
        self.d2v = np.asarray(self.d2v, dtype=float)
        n = self.dv.size
        if self.d2v.shape != (n, n):
            raise ArgumentError(f"d2v must be {n}x{n}, got {self.d2v.shape}")
        if not self.v > 0:
            raise DomainError(f"v must be positive, got {self.v}")
        self.d2v = 0.5 * (self.d2v + self.d2v.T)

    @classmethod
    def from_graph_jet(cls, jet: GraphJet) -> "VJet":
        """Convert (u, Du, D^2u) to (u^2, 2u Du, 2(Du Du + u D^2u))."""
        u, p = jet.u, jet.du
        return cls(v=u * u, dv=2.0 * u * p, d2v=2.0 * (np.outer(p, p) + u * jet.d2u))

    def to_graph_jet(self) -> GraphJet:
        """Invert the substitution v = u^2."""
        u = np.sqrt(self.v)
        p = self.dv / (2.0 * u)
        return GraphJet(u=u, du=p, d2u=(0.5 * self.d2v - np.outer(p, p)) / u)

    @property
    def n(self) -> int:
        return self.dv.size


@dataclass
class GOperatorState:
    """Value and derivatives of G at one point."""

    G: float
    Gst: np.ndarray
    Gs: np.ndarray
    Gv: float
    a: np.ndarray
    cone_ok: bool


@dataclass
class GOperatorBatch:
    """G and its derivatives at many points; leading axis indexes the points."""

    G: np.ndarray
    Gst: np.ndarray
    Gs: np.ndarray
    Gv: np.ndarray
    a: np.ndarray
    lam: np.ndarray
    fi: np.ndarray
    cone_ok: np.ndarray
    cone_margin: np.ndarray
    convexity_margin: np.ndarray

    def state(self, i: int) -> GOperatorState:
        return GOperatorState(
            G=float(self.G[i]),
            Gst=self.Gst[i].copy(),
            Gs=self.Gs[i].copy(),
            Gv=float(self.Gv[i]),
            a=self.a[i].copy(),
            cone_ok=bool(self.cone_ok[i]),
        )


def _assemble_chunk(v: np.ndarray, dv: np.ndarray, d2v: np.ndarray, k: int) -> tuple:
    n = dv.shape[-1]
    eye = np.eye(n)
    s = np.sqrt(v)
    W = np.sqrt(4.0 * v + np.sum(dv * dv, axis=-1))
    phi = 1.0 / (W * (2.0 * s + W))
    qq = dv[:, :, None] * dv[:, None, :]
    gamma = eye - phi[:, None, None] * qq
    gamma_inv = eye + (1.0 / (2.0 * s * (2.0 * s + W)))[:, None, None] * qq
    B = eye + 0.5 * d2v
    c = 2.0 * s / W
    a = c[:, None, None] * (gamma @ B @ gamma)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))

    G, F, lam, fi, cone_ok = spectral_derivative(a, k)
    trFa = np.einsum("nij,nji->n", F, a)

    Gst = (s / W)[:, None, None] * (gamma @ F @ gamma)
    Gst = 0.5 * (Gst + np.swapaxes(Gst, -1, -2))

    # dG = (dc/c) tr(Fa) + 2 tr(P dgamma) with P = gamma^{-1} a F
    P = gamma_inv @ a @ F
    Pq = np.einsum("nij,nj->ni", P, dv)
    PTq = np.einsum("nji,nj->ni", P, dv)
    qPq = np.einsum("ni,ni->n", dv, Pq)
    Gs = (
        -dv * (trFa / W**2)[:, None]
        - 2.0 * phi[:, None] * (Pq + PTq)
        + (2.0 * phi**2 * (2.0 * s + 2.0 * W) * qPq / W)[:, None] * dv
    )
    dphi_dv = -(phi**2) * ((2.0 * s + 2.0 * W) * 2.0 / W + W / s)
    Gv = (1.0 / (2.0 * v) - 2.0 / W**2) * trFa - 2.0 * qPq * dphi_dv

    margin = np.linalg.eigvalsh(B)[:, 0]
    return G, Gst, Gs, Gv, a, lam, fi, cone_ok, cone_margin(lam, k), margin


def assemble_G_batch(
    v: np.ndarray, dv: np.ndarray, d2v: np.ndarray, k: int, workers: int = 1
) -> GOperatorBatch:
    """Evaluate G, G^{st}, G^s and G_v at many points.

    Chunks are written to disjoint slices, so results do not depend on ``workers``.

    Args:
        v: Values of shape (N,), all positive
        dv: Gradients of shape (N, n)
        d2v: Hessians of shape (N, n, n)
        k: Curvature order
        workers: Thread pool size

    Returns:
        GOperatorBatch

    Raises:
        DomainError: If any v <= 0
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    dv = np.asarray(dv, dtype=float).reshape(v.size, -1)
    n = dv.shape[1]
    d2v = np.asarray(d2v, dtype=float).reshape(v.size, n, n)
    if np.any(~(v > 0)):
        raise DomainError(f"v must be positive, min is {v.min() if v.size else float('nan')}")

    N = v.size
    out = (
        np.empty(N), np.empty((N, n, n)), np.empty((N, n)), np.empty(N), np.empty((N, n, n)),
        np.empty((N, n)), np.empty((N, n)), np.empty(N, dtype=bool), np.empty(N), np.empty(N),
    )
    bounds = [(lo, min(lo + CHUNK_SIZE, N)) for lo in range(0, N, CHUNK_SIZE)]

    def run(span):
        lo, hi = span
        for dest, src in zip(out, _assemble_chunk(v[lo:hi], dv[lo:hi], d2v[lo:hi], k)):
            dest[lo:hi] = src

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, bounds))
    else:
        for span in bounds:
            run(span)
    return GOperatorBatch(*out)


def assemble_G(jet: VJet, k: int) -> GOperatorState:
    """Evaluate G and its derivatives at one v-jet."""
    batch = assemble_G_batch(np.array([jet.v]), jet.dv[None], jet.d2v[None], k)
    return batch.state(0)


def convexity_margin_v(jet: VJet) -> float:
    """Smallest eigenvalue of delta_ij + v_ij / 2; positive iff strictly locally convex."""
    return float(np.linalg.eigvalsh(np.eye(jet.n) + 0.5 * jet.d2v)[0])


def height_derivative_batch(v: np.ndarray, dv: np.ndarray, batch: GOperatorBatch) -> np.ndarray:
    """dG/du with Du and D^2u frozen: (sum f_i kappa_i - (1/w) sum f_i) / u."""
    s = np.sqrt(v)
    W = np.sqrt(4.0 * v + np.sum(dv * dv, axis=-1))
    inv_w = 2.0 * s / W
    return (np.sum(batch.fi * batch.lam, axis=-1) - inv_w * np.sum(batch.fi, axis=-1)) / s


def monotonicity_check(jet: VJet, psi_at_point: float, k: int) -> float:
    """Return G_u - psi in u-variables at a state with G = psi * u.

    A violated precondition is logged and the value is still returned.
    """
    batch = assemble_G_batch(np.array([jet.v]), jet.dv[None], jet.d2v[None], k)
    u = np.sqrt(jet.v)
    expected = psi_at_point * u
    if abs(batch.G[0] - expected) > 1e-8 * (1.0 + abs(expected)):
        logger.warning(
            "monotonicity check precondition G = psi*u violated: G=%.6g, psi*u=%.6g",
            batch.G[0], expected,
        )
    if convexity_margin_v(jet) <= 0:
        logger.warning("monotonicity check called at a state that is not strictly convex")
    gu = height_derivative_batch(np.array([jet.v]), jet.dv[None], batch)[0]
    return float(gu - psi_at_point)


def linearization_sign_batch(
    v: np.ndarray, dv: np.ndarray, batch: GOperatorBatch, coefficient: np.ndarray
) -> np.ndarray:
    """G_u - coefficient at every node; negative everywhere for a well-posed linearisation."""
    return height_derivative_batch(v, dv, batch) - coefficient


def finite_difference_derivatives(jet: VJet, k: int, step: float = 1e-5) -> GOperatorState:
    """Central finite differences of G in d2v, dv and v, used as the Jacobian oracle.

    Off-diagonal d2v entries are perturbed symmetrically, so the raw slope is halved.
    """
    n = jet.n

    def value(v, dv, d2v):
        return float(assemble_G_batch(np.array([v]), dv[None], d2v[None], k).G[0])

    base = assemble_G(jet, k)
    Gst = np.zeros((n, n))
    for s_ in range(n):
        for t in range(s_, n):
            e = np.zeros((n, n))
            e[s_, t] = e[t, s_] = step
            slope = (value(jet.v, jet.dv, jet.d2v + e) - value(jet.v, jet.dv, jet.d2v - e)) / (2 * step)
            Gst[s_, t] = Gst[t, s_] = slope if s_ == t else 0.5 * slope
    Gs = np.zeros(n)
    for s_ in range(n):
        e = np.zeros(n)
        e[s_] = step
        Gs[s_] = (value(jet.v, jet.dv + e, jet.d2v) - value(jet.v, jet.dv - e, jet.d2v)) / (2 * step)
    hv = step * max(1.0, jet.v)
    Gv = (value(jet.v + hv, jet.dv, jet.d2v) - value(jet.v - hv, jet.dv, jet.d2v)) / (2 * hv)
    return GOperatorState(G=base.G, Gst=Gst, Gs=Gs, Gv=Gv, a=base.a, cone_ok=base.cone_ok)


def jacobian_mismatch(
    analytic: GOperatorState, numeric: GOperatorState, gv_scale: Optional[float] = None
) -> float:
    """Largest relative disagreement between analytic and finite-difference derivatives.

    ``gv_scale`` multiplies the analytic G_v and exists only for fault injection.
    """
    gv = analytic.Gv * (gv_scale if gv_scale is not None else 1.0)
    a = np.concatenate([analytic.Gst.ravel(), analytic.Gs, [gv]])
    b = np.concatenate([numeric.Gst.ravel(), numeric.Gs, [numeric.Gv]])
    scale = max(1.0, float(np.abs(b).max()))
    return float(np.abs(a - b).max() / scale)
