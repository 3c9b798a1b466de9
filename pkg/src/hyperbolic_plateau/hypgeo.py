"""Pointwise geometry of vertical graphs in the half-space model of hyperbolic space."""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .models import ArgumentError, DomainError
from .symfunc import EigenTuple

logger = logging.getLogger(__name__)


@dataclass
class GraphJet:
    """Second order jet (u, Du, D^2u) of a height function at one point."""

    u: float
    du: np.ndarray
    d2u: np.ndarray

    def __post_init__(self) -> None:
        self.u = float(self.u)
        self.du = np.asarray(self.du, dtype=float).reshape(-1)
        self.d2u = np.asarray(self.d2u, dtype=float)
        n = self.du.size
        if self.d2u.shape != (n, n):
            raise ArgumentError(f"d2u must be {n}x{n}, got {self.d2u.shape}")
        if not self.u > 0:
            raise DomainError(f"height must be positive in the half-space, got u={self.u}")
        if np.abs(self.d2u - self.d2u.T).max() > 1e-14 * (1.0 + np.abs(self.d2u).max()):
            raise ArgumentError("d2u is not symmetric")
        self.d2u = 0.5 * (self.d2u + self.d2u.T)

    @property
    def n(self) -> int:
        return self.du.size


@dataclass
class CurvatureFrame:
    """Geometric state of a graph at one point.

    kappa is ascending; kappa_euc is matched to kappa eigenvector by eigenvector.
    """

    w: float
    nu: np.ndarray
    nu_vert: float
    gamma_up: np.ndarray
    gamma_down: np.ndarray
    a: np.ndarray
    kappa: EigenTuple
    kappa_euc: EigenTuple
    g: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    g_euc: np.ndarray = field(repr=False)
    h_euc: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)


@dataclass
class IdentityReport:
    """Residuals of the first and second order identities for a graph frame."""

    normal_unit: float
    gamma_inverse: float
    normal_projection: float
    second_form_split: float
    curvature_relation: float
    eigen_consistency: float
    hessian_normal: float
    normal_gradient: float

    @property
    def max_residual(self) -> float:
        return max(vars(self).values())

    def to_dict(self) -> dict:
        return dict(vars(self))


def _gammas(p: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """gamma^{ik} and gamma_{ik} for gradients p of shape (..., n)."""
    n = p.shape[-1]
    eye = np.eye(n)
    pp = p[..., :, None] * p[..., None, :]
    up = eye - pp / (w * (1.0 + w))[..., None, None]
    down = eye + pp / (1.0 + w)[..., None, None]
    return up, down


def curvature_matrix_batch(
    u: np.ndarray, du: np.ndarray, d2u: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched a_ij = (1/w)(delta_ij + u gamma^{ik} u_kl gamma^{lj}).

    Returns:
        Tuple (a, a_euc, w) where a_euc = (1/w) gamma D^2u gamma
    """
    u = np.asarray(u, dtype=float)
    w = np.sqrt(1.0 + np.sum(du * du, axis=-1))
    up, _ = _gammas(du, w)
    a_euc = (up @ d2u @ up) / w[..., None, None]
    n = du.shape[-1]
    a = np.eye(n) / w[..., None, None] + u[..., None, None] * a_euc
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    return a, a_euc, w


def principal_curvatures_batch(u: np.ndarray, du: np.ndarray, d2u: np.ndarray) -> np.ndarray:
    """Ascending hyperbolic principal curvatures for many jets at once."""
    a, _, _ = curvature_matrix_batch(u, du, d2u)
    return np.linalg.eigvalsh(a)


def convexity_margin_batch(u: np.ndarray, du: np.ndarray, d2u: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of delta_ij + u_i u_j + u u_ij for many jets."""
    n = du.shape[-1]
    m = np.eye(n) + du[..., :, None] * du[..., None, :] + np.asarray(u)[..., None, None] * d2u
    return np.linalg.eigvalsh(m)[..., 0]


def curvature_frame(jet: GraphJet) -> CurvatureFrame:
    """Compute the full curvature frame of a graph jet.

    Args:
        jet: Jet with u > 0

    Returns:
        CurvatureFrame with ascending kappa
    """
    u, p, d2u = jet.u, jet.du, jet.d2u
    n = jet.n
    w = float(np.sqrt(1.0 + p @ p))
    up, down = _gammas(p, np.asarray(w))
    a_euc = up @ d2u @ up / w
    a = np.eye(n) / w + u * a_euc
    a = 0.5 * (a + a.T)
    kappa, q = np.linalg.eigh(a)
    # Rayleigh quotients keep kappa_euc aligned with kappa through crossings.
    kappa_euc = np.einsum("ki,kl,li->i", q, a_euc, q)

    g_euc = np.eye(n) + np.outer(p, p)
    h_euc = d2u / w
    nu = np.append(-p / w, 1.0 / w)
    return CurvatureFrame(
        w=w,
        nu=nu,
        nu_vert=1.0 / w,
        gamma_up=up,
        gamma_down=down,
        a=a,
        kappa=EigenTuple.of(kappa),
        kappa_euc=EigenTuple.of(kappa_euc),
        g=g_euc / u**2,
        h=(g_euc + u * d2u) / (u**2 * w),
        g_euc=g_euc,
        h_euc=h_euc,
        eigenvectors=q,
    )


def is_strictly_convex(jet: GraphJet) -> Tuple[bool, float]:
    """Test positive definiteness of delta_ij + u_i u_j + u u_ij.

    Returns:
        Tuple (is_convex, margin) with margin the smallest eigenvalue
    """
    margin = float(convexity_margin_batch(np.array(jet.u), jet.du, jet.d2u))
    return margin > 0, margin


def check_identities(jet: GraphJet, frame: CurvatureFrame) -> IdentityReport:
    """Evaluate both sides of the graph identities and report the residuals.

    Covers: unit normal, gamma inverse pair, g~^{kl}u_k u_l = 1 - (nu^{n+1})^2,
    h = h~/u + nu^{n+1} g~/u^2, kappa = u kappa~ + nu^{n+1} with kappa taken from g^{-1} h
    and kappa~ matched to the eigenvectors of a, the eigenvalues of a
    against an independent solve of g~^{-1} h~, the Hessian identity
    Hess~ u = h~ nu^{n+1}, and d_i(nu^{n+1}) = -h~_ij g~^{jk} u_k.
    """
    u, p, d2u = jet.u, jet.du, jet.d2u
    n = jet.n
    g_inv = np.linalg.inv(frame.g_euc)
    nu_vert = frame.nu_vert

    normal_unit = abs(float(np.linalg.norm(frame.nu)) - 1.0)
    gamma_inverse = float(np.abs(frame.gamma_up @ frame.gamma_down - np.eye(n)).max())
    normal_projection = abs(float(p @ g_inv @ p) - (1.0 - nu_vert**2))
    split = frame.h_euc / u + nu_vert * frame.g_euc / u**2
    second_form_split = float(np.abs(frame.h - split).max())

    kappa = frame.kappa.as_array()
    kappa_euc = frame.kappa_euc.as_array()
    # kappa from the hyperbolic Weingarten map g^{-1} h, not from a
    weingarten = np.sort(np.linalg.eigvals(np.linalg.solve(frame.g, frame.h)).real)
    curvature_relation = float(np.abs(weingarten - (u * kappa_euc + nu_vert)).max())

    # independent route: Euclidean shape operator g~^{-1} h~, eigenvalues are real
    shape = np.sort(np.linalg.eigvals(g_inv @ frame.h_euc).real)
    eigen_consistency = float(np.abs(np.sort(u * shape + nu_vert) - kappa).max())

    # Christoffel symbols of g~ are Gamma^k_ij = (g~^{-1} Du)_k u_ij.
    christoffel = np.einsum("k,ij->kij", g_inv @ p, d2u)
    hess = d2u - np.einsum("kij,k->ij", christoffel, p)
    hessian_normal = float(np.abs(hess - frame.h_euc * nu_vert).max())

    dw = d2u @ p / frame.w
    lhs = -dw / frame.w**2
    rhs = -frame.h_euc @ g_inv @ p
    normal_gradient = float(np.abs(lhs - rhs).max())

    return IdentityReport(
        normal_unit=normal_unit,
        gamma_inverse=gamma_inverse,
        normal_projection=normal_projection,
        second_form_split=second_form_split,
        curvature_relation=curvature_relation,
        eigen_consistency=eigen_consistency,
        hessian_normal=hessian_normal,
        normal_gradient=normal_gradient,
    )
