"""Elementary symmetric functions, Garding cones and the curvature function sigma_k^(1/k).

All routines accept a trailing axis of length n and broadcast over any leading
axes, so the solver can evaluate every grid node in one call.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .models import ArgumentError

logger = logging.getLogger(__name__)

# Relative gap below which two eigenvalues are treated as one cluster.
CLUSTER_TOL = 1e-9

# Floor on |sigma_k| used for the derivative outside the cone.
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class EigenTuple:
    """An ordered n-tuple of principal curvatures."""

    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if len(values) < 2:
            raise ArgumentError(f"EigenTuple needs n >= 2 entries, got {len(values)}")
        if not all(np.isfinite(values)):
            raise ArgumentError(f"EigenTuple entries must be finite: {values}")
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, values: Union["EigenTuple", Sequence[float], np.ndarray]) -> "EigenTuple":
        """Coerce a sequence or array into an EigenTuple."""
        if isinstance(values, EigenTuple):
            return values
        return cls(tuple(np.asarray(values, dtype=float).ravel()))

    @property
    def n(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


@dataclass(frozen=True)
class CurvatureFunctionEval:
    """Value and gradient of f = sigma_k^(1/k) together with cone membership."""

    f: float
    grad: Tuple[float, ...]
    cone_ok: bool


def elementary_symmetric(lam: np.ndarray, order: int) -> np.ndarray:
    """Return e_0 .. e_order of the trailing axis of ``lam``.

    Uses the recurrence e_j(l_1..l_m) = e_j(l_1..l_{m-1}) + l_m e_{j-1}(l_1..l_{m-1}).

    Args:
        lam: Array of shape (..., n)
        order: Highest order wanted, 0 <= order <= n

    Returns:
        Array of shape (..., order + 1)
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if order < 0 or order > n:
        raise ArgumentError(f"order must lie in 0..{n}, got {order}")
    e = np.zeros(lam.shape[:-1] + (order + 1,))
    e[..., 0] = 1.0
    for m in range(n):
        for j in range(min(m + 1, order), 0, -1):
            e[..., j] = e[..., j] + lam[..., m] * e[..., j - 1]
    return e


def sigma(lam: Union[EigenTuple, Sequence[float], np.ndarray], j: int) -> float:
    """Evaluate the j-th elementary symmetric function of a single tuple.

    Args:
        lam: The n-tuple
        j: Order, 1 <= j <= n

    Returns:
        sigma_j(lam)

    Raises:
        ArgumentError: If j is outside 1..n
    """
    values = EigenTuple.of(lam).as_array()
    if not 1 <= j <= values.size:
        raise ArgumentError(f"order j must lie in 1..{values.size}, got {j}")
    return float(elementary_symmetric(values, j)[j])


def cone_margin(lam: np.ndarray, k: int) -> np.ndarray:
    """Smallest of sigma_1 .. sigma_k over the trailing axis; positive iff inside Gamma_k."""
    e = elementary_symmetric(lam, k)
    return e[..., 1:].min(axis=-1)


def in_garding_cone(lam: Union[EigenTuple, Sequence[float], np.ndarray], k: int) -> bool:
    """Return True iff sigma_j(lam) > 0 for j = 1..k."""
    values = EigenTuple.of(lam).as_array()
    _check_order(k, values.size)
    return bool(cone_margin(values, k) > 0)


def _check_order(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ArgumentError(f"order k must lie in 1..{n}, got {k}")


def _leave_one_out(lam: np.ndarray) -> np.ndarray:
    """Stack lam with each entry removed in turn: (..., n) -> (..., n, n-1)."""
    n = lam.shape[-1]
    idx = np.array([[j for j in range(n) if j != i] for i in range(n)], dtype=int)
    return lam[..., idx]


def f_batch(lam: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised f = sigma_k^(1/k), its gradient and cone membership.

    Outside Gamma_k the value is sign(sigma_k) |sigma_k|^(1/k) and the gradient
    uses |sigma_k| floored at SIGMA_FLOOR, so both stay finite.

    Args:
        lam: Array of shape (..., n)
        k: Order, 1 <= k <= n

    Returns:
        Tuple (f, grad, cone_ok) with shapes (...), (..., n), (...)
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_order(k, n)
    e = elementary_symmetric(lam, k)
    sk = e[..., k]
    cone_ok = e[..., 1:].min(axis=-1) > 0

    f = np.sign(sk) * np.abs(sk) ** (1.0 / k)
    if k == 1:
        dsig = np.ones_like(lam)
    else:
        dsig = elementary_symmetric(_leave_one_out(lam), k - 1)[..., k - 1]
    scale = (1.0 / k) * np.maximum(np.abs(sk), SIGMA_FLOOR) ** (1.0 / k - 1.0)
    grad = scale[..., None] * dsig
    return f, grad, cone_ok


def f_eval(lam: Union[EigenTuple, Sequence[float], np.ndarray], k: int) -> CurvatureFunctionEval:
    """Evaluate f = sigma_k^(1/k) and f_i at one tuple.

    Never raises on a cone violation; ``cone_ok`` reports it instead.
    """
    values = EigenTuple.of(lam).as_array()
    f, grad, ok = f_batch(values, k)
    return CurvatureFunctionEval(f=float(f), grad=tuple(float(g) for g in grad), cone_ok=bool(ok))


def _average_clusters(lam: np.ndarray, fi: np.ndarray) -> np.ndarray:
    """Replace f_i by the cluster mean where neighbouring sorted eigenvalues coincide."""
    fi = fi.copy()
    n = lam.shape[-1]
    for i in range(n - 1):
        close = np.abs(lam[..., i + 1] - lam[..., i]) < CLUSTER_TOL * (1.0 + np.abs(lam[..., i]))
        if np.any(close):
            mean = 0.5 * (fi[..., i] + fi[..., i + 1])
            fi[..., i] = np.where(close, mean, fi[..., i])
            fi[..., i + 1] = np.where(close, mean, fi[..., i + 1])
    return fi


def spectral_derivative(
    a: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched F(a) = f(lambda(a)) and F^{ij} = dF/da_ij for symmetric matrices.

    Args:
        a: Symmetric matrices of shape (..., n, n)
        k: Order

    Returns:
        Tuple (F, Fij, lam, grad, cone_ok); lam ascending, grad = f_i at lam
    """
    lam, q = np.linalg.eigh(a)
    f, grad, cone_ok = f_batch(lam, k)
    fi = _average_clusters(lam, grad)
    fij = np.einsum("...ik,...k,...jk->...ij", q, fi, q)
    return f, fij, lam, fi, cone_ok


def F_matrix_derivative(A: np.ndarray, k: int) -> np.ndarray:
    """Return F^{ij} = dF/da_ij for one symmetric curvature matrix.

    Args:
        A: Symmetric n x n matrix
        k: Order

    Returns:
        Symmetric n x n matrix

    Raises:
        ArgumentError: If A is not square and symmetric
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {A.shape}")
    scale = 1.0 + np.abs(A).max()
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ArgumentError("curvature matrix is not symmetric")
    _, fij, _, _, _ = spectral_derivative(0.5 * (A + A.T), k)
    return fij
