"""Built-in prescribed functions psi(x, u) and subsolutions, chosen by name in configs.

Every psi family factors as psi(x, u) = A(x) * B(u); subsolutions are radial
profiles about a centre. Methods broadcast over leading axes of ``x``.
"""

import logging
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import ConfigError

logger = logging.getLogger(__name__)


def _center(center: Optional[Sequence[float]], n: int) -> np.ndarray:
    if center is None:
        return np.zeros(n)
    c = np.asarray(center, dtype=float)
    if c.shape != (n,):
        raise ConfigError(f"centre must have {n} coordinates, got {len(c)}")
    return c


class PsiFamily:
    """psi(x, u) = A(x) B(u) with analytic first and second derivatives."""

    name = "psi"

    def __init__(self, n: int, coefficients: Sequence[float]):
        self.n = n
        self.coefficients = [float(c) for c in coefficients]

    # spatial factor A and its gradient / Hessian
    def _spatial(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    # height factor B and its first two derivatives
    def _height(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        one = np.ones_like(u)
        return one, np.zeros_like(u), np.zeros_like(u)

    @property
    def is_radial(self) -> bool:
        return False

    @property
    def center(self) -> np.ndarray:
        return np.zeros(self.n)

    def _eval(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        A, dA, d2A = self._spatial(x)
        B, dB, d2B = self._height(u)
        return A, dA, d2A, B, dB, d2B

    def value(self, x, u) -> np.ndarray:
        A, _, _, B, _, _ = self._eval(x, u)
        return A * B

    def du(self, x, u) -> np.ndarray:
        A, _, _, _, dB, _ = self._eval(x, u)
        return A * dB

    def duu(self, x, u) -> np.ndarray:
        A, _, _, _, _, d2B = self._eval(x, u)
        return A * d2B

    def dx(self, x, u) -> np.ndarray:
        _, dA, _, B, _, _ = self._eval(x, u)
        return dA * np.asarray(B)[..., None]

    def dxx(self, x, u) -> np.ndarray:
        _, _, d2A, B, _, _ = self._eval(x, u)
        return d2A * np.asarray(B)[..., None, None]

    def dxu(self, x, u) -> np.ndarray:
        _, dA, _, _, dB, _ = self._eval(x, u)
        return dA * np.asarray(dB)[..., None]

    def radial(self, r, u) -> np.ndarray:
        """Evaluate along the first axis through the centre; only meaningful when radial."""
        r = np.asarray(r, dtype=float)
        x = np.zeros(r.shape + (self.n,)) + self.center
        x[..., 0] += r
        return self.value(x, u)

    def minimum(self, x: np.ndarray, u: np.ndarray) -> float:
        return float(np.min(self.value(x, u)))


class _RadialPsi(PsiFamily):
    """A(x) = a(rho) with rho = |x - c|^2."""

    _center_value: np.ndarray

    def _profile(self, rho: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def is_radial(self) -> bool:
        return True

    @property
    def center(self) -> np.ndarray:
        return self._center_value

    def _spatial(self, x):
        d = x - self.center
        rho = np.sum(d * d, axis=-1)
        a, da, d2a = self._profile(rho)
        grad = 2.0 * da[..., None] * d
        hess = 4.0 * d2a[..., None, None] * d[..., :, None] * d[..., None, :]
        hess = hess + 2.0 * da[..., None, None] * np.eye(self.n)
        return a, grad, hess


class ConstantPsi(_RadialPsi):
    """psi = c."""

    name = "constant"

    def __init__(self, n: int, coefficients: Sequence[float]):
        super().__init__(n, coefficients)
        self.c = self.coefficients[0]
        self._center_value = np.zeros(n)

    def _profile(self, rho):
        return np.full_like(rho, self.c), np.zeros_like(rho), np.zeros_like(rho)


class CapPsi(ConstantPsi):
    """psi = sigma_k(sigma, ..., sigma) = C(n, k) sigma^k, solved exactly by barrier caps."""

    name = "cap"

    def __init__(self, n: int, coefficients: Sequence[float], k: int = 2):
        sigma = float(coefficients[0])
        if not 0.0 < sigma < 1.0:
            raise ConfigError(f"cap psi needs 0 < sigma < 1, got {sigma}")
        super().__init__(n, [comb(n, k) * sigma**k])
        self.coefficients = [sigma]
        self.sigma = sigma
        self.k = k


class RadialPolynomialPsi(_RadialPsi):
    """psi = sum_j c_j |x|^(2j)."""

    name = "radial_polynomial"

    def __init__(self, n: int, coefficients: Sequence[float]):
        super().__init__(n, coefficients)
        self._poly = np.polynomial.Polynomial(self.coefficients)
        self._center_value = np.zeros(n)

    def _profile(self, rho):
        d1 = self._poly.deriv(1)
        d2 = self._poly.deriv(2)
        return self._poly(rho), d1(rho), d2(rho)


class RadialGaussianPsi(_RadialPsi):
    """psi = base (1 + amp exp(-|x - c|^2 / width)); the centre c defaults to the origin."""

    name = "radial_gaussian"

    def __init__(self, n: int, coefficients: Sequence[float]):
        super().__init__(n, coefficients)
        self.base, self.amp, self.width = self.coefficients[:3]
        if self.width <= 0:
            raise ConfigError(f"radial_gaussian width must be positive, got {self.width}")
        self._center_value = _center(self.coefficients[3:] or None, n)

    def _profile(self, rho):
        g = self.amp * np.exp(-rho / self.width)
        return self.base * (1.0 + g), -self.base * g / self.width, self.base * g / self.width**2


class SeparableProductPsi(PsiFamily):
    """psi = c u^p prod_i (1 + a_i x_i^2)."""

    name = "separable_product"

    def __init__(self, n: int, coefficients: Sequence[float]):
        super().__init__(n, coefficients)
        self.c, self.p = self.coefficients[:2]
        self.a = np.array(self.coefficients[2:], dtype=float)

    @property
    def is_radial(self) -> bool:
        return bool(np.allclose(self.a, self.a[0]) and self.a[0] == 0.0)

    def _spatial(self, x):
        factors = 1.0 + self.a * x * x
        dfac = 2.0 * self.a * x
        A = self.c * np.prod(factors, axis=-1)
        ratio = dfac / factors
        grad = A[..., None] * ratio
        hess = A[..., None, None] * ratio[..., :, None] * ratio[..., None, :]
        diag = A[..., None] * (2.0 * self.a / factors - ratio * ratio)
        hess = hess + diag[..., :, None] * np.eye(self.n)
        return A, grad, hess

    def _height(self, u):
        p = self.p
        return u**p, p * u ** (p - 1.0), p * (p - 1.0) * u ** (p - 2.0)


class Dome:
    """Radial subsolution profile about a centre with closed-form level radii."""

    name = "dome"

    def __init__(self, n: int, center: Optional[Sequence[float]] = None):
        self.n = n
        self.center = _center(center, n)

    def _profile(self, r2: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(g, g', g'') of the profile as a function of r^2."""
        raise NotImplementedError

    @property
    def peak(self) -> float:
        raise NotImplementedError

    def level_radius(self, eps: float) -> float:
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        return self._profile(np.sum(d * d, axis=-1))[0]

    def gradient(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        _, dg, _ = self._profile(np.sum(d * d, axis=-1))
        return 2.0 * dg[..., None] * d

    def hessian(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        _, dg, d2g = self._profile(np.sum(d * d, axis=-1))
        outer = d[..., :, None] * d[..., None, :]
        return 4.0 * d2g[..., None, None] * outer + 2.0 * dg[..., None, None] * np.eye(self.n)

    @property
    def is_radial(self) -> bool:
        return True


class CapSubsolution(Dome):
    """Upper cap of the sphere centred at (c, -sigma R) meeting {u = 0} on |x - c| = rho.

    Its hyperbolic principal curvatures are all sigma; below the plane the value
    is clamped at -sigma R so the level set search sees a negative value.
    """

    name = "cap"

    def __init__(self, n: int, sigma: float, rho: float, center: Optional[Sequence[float]] = None):
        super().__init__(n, center)
        if not 0.0 < sigma < 1.0:
            raise ConfigError(f"cap subsolution needs 0 < sigma < 1, got {sigma}")
        if rho <= 0:
            raise ConfigError(f"cap subsolution needs rho > 0, got {rho}")
        self.sigma = sigma
        self.rho = rho
        self.R = rho / np.sqrt(1.0 - sigma * sigma)

    def _profile(self, r2):
        R = self.R
        S2 = R * R - r2
        # floor keeps S**3 finite outside the footprint
        S = np.sqrt(np.maximum(S2, 1e-100))
        g = -self.sigma * R + np.sqrt(np.maximum(S2, 0.0))
        return g, -0.5 / S, -0.25 / S**3

    @property
    def peak(self) -> float:
        return (1.0 - self.sigma) * self.R

    def level_radius(self, eps: float) -> float:
        return float(np.sqrt(max(self.R**2 - (eps + self.sigma * self.R) ** 2, 0.0)))


class PerturbedCapSubsolution(CapSubsolution):
    """Cap of raised curvature sigma + amp (1 - sigma) through the same circle.

    Lies below the sigma cap and is a strict subsolution for psi = sigma_k(sigma, ..., sigma).
    """

    name = "perturbed_cap"

    def __init__(
        self, n: int, sigma: float, rho: float, amp: float, center: Optional[Sequence[float]] = None
    ):
        if not 0.0 <= amp < 1.0:
            raise ConfigError(f"perturbed_cap needs 0 <= amp < 1, got {amp}")
        super().__init__(n, sigma + amp * (1.0 - sigma), rho, center)
        self.base_sigma = sigma
        self.amp = amp


class ParaboloidSubsolution(Dome):
    """u = c0 - c1 |x - c|^2."""

    name = "paraboloid"

    def __init__(self, n: int, c0: float, c1: float, center: Optional[Sequence[float]] = None):
        super().__init__(n, center)
        if c0 <= 0 or c1 <= 0:
            raise ConfigError(f"paraboloid needs c0 > 0 and c1 > 0, got {c0}, {c1}")
        self.c0 = c0
        self.c1 = c1

    def _profile(self, r2):
        return self.c0 - self.c1 * r2, np.full_like(r2, -self.c1), np.zeros_like(r2)

    @property
    def peak(self) -> float:
        return self.c0

    def level_radius(self, eps: float) -> float:
        return float(np.sqrt(max((self.c0 - eps) / self.c1, 0.0)))


PSI_FAMILIES: Dict[str, Tuple[Callable[[int], Tuple[int, Optional[int]]], str]] = {
    "constant": (lambda n: (1, 1), "c"),
    "cap": (lambda n: (1, 1), "sigma"),
    "radial_polynomial": (lambda n: (1, None), "c0, c1, ..."),
    "radial_gaussian": (lambda n: (3, 3 + n), "base, amp, width[, centre]"),
    "separable_product": (lambda n: (2 + n, 2 + n), "c, p, a_1 .. a_n"),
}

SUBSOLUTION_FAMILIES: Dict[str, Tuple[Callable[[int], List[int]], str]] = {
    "cap": (lambda n: [2, 2 + n], "sigma, rho[, centre]"),
    "perturbed_cap": (lambda n: [3, 3 + n], "sigma, rho, amp[, centre]"),
    "paraboloid": (lambda n: [2, 2 + n], "c0, c1[, centre]"),
}


def validate_psi(name: str, coefficients: Sequence[float], n: int) -> None:
    """Check that a psi family exists and gets the right number of coefficients.

    Raises:
        ConfigError: On an unknown family or wrong coefficient count
    """
    if name not in PSI_FAMILIES:
        raise ConfigError(f"unknown psi family '{name}'; known: {', '.join(sorted(PSI_FAMILIES))}")
    arity, doc = PSI_FAMILIES[name]
    lo, hi = arity(n)
    count = len(coefficients)
    if count < lo or (hi is not None and count > hi):
        raise ConfigError(f"psi family '{name}' takes coefficients ({doc}), got {count}")


def validate_subsolution(name: str, coefficients: Sequence[float], n: int) -> None:
    """Check that a subsolution family exists and gets the right number of coefficients."""
    if name not in SUBSOLUTION_FAMILIES:
        raise ConfigError(
            f"unknown subsolution family '{name}'; known: {', '.join(sorted(SUBSOLUTION_FAMILIES))}"
        )
    arity, doc = SUBSOLUTION_FAMILIES[name]
    if len(coefficients) not in arity(n):
        raise ConfigError(
            f"subsolution family '{name}' takes coefficients ({doc}), got {len(coefficients)}"
        )


def build_psi(name: str, coefficients: Sequence[float], n: int, k: int) -> PsiFamily:
    """Instantiate a named psi family."""
    validate_psi(name, coefficients, n)
    if name == "constant":
        return ConstantPsi(n, coefficients)
    if name == "cap":
        return CapPsi(n, coefficients, k=k)
    if name == "radial_polynomial":
        return RadialPolynomialPsi(n, coefficients)
    if name == "radial_gaussian":
        return RadialGaussianPsi(n, coefficients)
    return SeparableProductPsi(n, coefficients)


def build_subsolution(name: str, coefficients: Sequence[float], n: int) -> Dome:
    """Instantiate a named subsolution family."""
    validate_subsolution(name, coefficients, n)
    c = [float(v) for v in coefficients]
    if name == "cap":
        return CapSubsolution(n, c[0], c[1], c[2:] or None)
    if name == "perturbed_cap":
        return PerturbedCapSubsolution(n, c[0], c[1], c[2], c[3:] or None)
    return ParaboloidSubsolution(n, c[0], c[1], c[2:] or None)
