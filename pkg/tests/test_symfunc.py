"""Tests for hyperbolic_plateau.symfunc module."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hyperbolic_plateau.models import ArgumentError
from hyperbolic_plateau.symfunc import (
    EigenTuple,
    F_matrix_derivative,
    elementary_symmetric,
    f_batch,
    f_eval,
    in_garding_cone,
    sigma,
    spectral_derivative,
)


class TestEigenTuple:
    """Tests for EigenTuple."""

    def test_coerces_to_floats(self):
        """Test that integer input becomes a float tuple."""
        lam = EigenTuple.of([1, 2, 3])
        assert lam.values == (1.0, 2.0, 3.0)
        assert lam.n == 3

    def test_rejects_single_entry(self):
        """Test that n < 2 is rejected."""
        with pytest.raises(ArgumentError):
            EigenTuple.of([1.0])

    def test_rejects_nan(self):
        """Test that non-finite entries are rejected."""
        with pytest.raises(ArgumentError):
            EigenTuple.of([1.0, float("nan")])


class TestSigma:
    """Tests for elementary symmetric functions."""

    def test_known_values(self):
        """Test sigma_j of (1, 2, 3)."""
        assert elementary_symmetric(np.array([1.0, 2.0, 3.0]), 0)[0] == 1.0
        assert sigma([1, 2, 3], 1) == 6.0
        assert sigma([1, 2, 3], 2) == 11.0
        assert sigma([1, 2, 3], 3) == 6.0

    def test_batch_shape(self):
        """Test that leading axes broadcast."""
        lam = np.ones((4, 5, 3))
        e = elementary_symmetric(lam, 2)
        assert e.shape == (4, 5, 3)
        assert_allclose(e[..., 2], 3.0)

    def test_order_out_of_range(self):
        """Test that orders outside 1..n raise."""
        with pytest.raises(ArgumentError):
            sigma([1.0, 2.0], 3)
        with pytest.raises(ArgumentError):
            sigma([1.0, 2.0], 0)
        with pytest.raises(ArgumentError):
            elementary_symmetric(np.ones(2), -1)


class TestGardingCone:
    """Tests for cone membership."""

    def test_positive_tuple_in_every_cone(self):
        """Test that positive tuples lie in Gamma_n."""
        for k in (1, 2, 3):
            assert in_garding_cone([0.5, 1.0, 2.0], k)

    def test_mixed_signs(self):
        """Test a tuple in Gamma_2 but not Gamma_3."""
        lam = [1.0, 1.0, -0.4]
        assert in_garding_cone(lam, 2)
        assert not in_garding_cone(lam, 3)


class TestCurvatureFunction:
    """Tests for f = sigma_k^(1/k)."""

    def test_umbilic_value(self):
        """Test f(s, ..., s) = C(n, k)^(1/k) s."""
        assert f_eval([0.6, 0.6], 2).f == pytest.approx(0.6)
        assert f_eval([0.5, 0.5, 0.5], 2).f == pytest.approx(np.sqrt(3.0) * 0.5)
        assert f_eval([0.5, 0.5, 0.5], 3).f == pytest.approx(0.5)

    def test_gradient_matches_finite_differences(self, rng):
        """Test f_i against central differences."""
        lam = rng.uniform(0.2, 2.0, 4)
        for k in (1, 2, 3, 4):
            result = f_eval(lam, k)
            step = 1e-6
            for i in range(4):
                e = np.zeros(4)
                e[i] = step
                fd = (f_eval(lam + e, k).f - f_eval(lam - e, k).f) / (2 * step)
                assert result.grad[i] == pytest.approx(fd, rel=1e-6)

    def test_cone_violation_is_flagged(self):
        """Test that leaving the cone is reported, not raised."""
        result = f_eval([-1.0, -2.0], 2)
        assert not result.cone_ok
        assert np.isfinite(result.f)
        assert all(np.isfinite(result.grad))

    def test_batch_matches_scalar(self, rng):
        """Test f_batch against f_eval row by row."""
        lam = rng.uniform(0.1, 1.5, (6, 3))
        f, grad, ok = f_batch(lam, 2)
        for i in range(6):
            single = f_eval(lam[i], 2)
            assert f[i] == pytest.approx(single.f)
            assert_allclose(grad[i], single.grad)
        assert ok.all()


class TestMatrixDerivative:
    """Tests for F^{ij}."""

    def test_diagonal_matrix(self):
        """Test that a diagonal matrix gives diag(f_i)."""
        A = np.diag([0.5, 1.0, 2.0])
        fij = F_matrix_derivative(A, 2)
        assert_allclose(fij, np.diag(f_eval([0.5, 1.0, 2.0], 2).grad), atol=1e-14)

    def test_finite_differences(self, rng):
        """Test F^{ij} against symmetric perturbations of a random SPD matrix."""
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        A = q @ np.diag([0.3, 0.9, 1.4]) @ q.T
        fij = F_matrix_derivative(A, 2)
        step = 1e-6
        for i in range(3):
            for j in range(i, 3):
                E = np.zeros((3, 3))
                E[i, j] = E[j, i] = step
                fd = (spectral_derivative(A + E, 2)[0] - spectral_derivative(A - E, 2)[0]) / (2 * step)
                expected = fd if i == j else 0.5 * fd
                assert fij[i, j] == pytest.approx(expected, abs=1e-7)

    def test_repeated_eigenvalues(self):
        """Test that an umbilic matrix gives a multiple of the identity."""
        fij = F_matrix_derivative(0.7 * np.eye(3), 3)
        assert_allclose(fij, np.eye(3) / 3.0, atol=1e-12)

    def test_non_symmetric_rejected(self):
        """Test that a non-symmetric matrix raises."""
        with pytest.raises(ArgumentError):
            F_matrix_derivative(np.array([[1.0, 0.5], [0.0, 1.0]]), 2)

    def test_non_square_rejected(self):
        """Test that a non-square matrix raises."""
        with pytest.raises(ArgumentError):
            F_matrix_derivative(np.ones((2, 3)), 2)


class TestInvariants:
    """Tests for symmetry, concavity and boundary behaviour of f."""

    def test_permutation_symmetry(self, rng):
        """Test that sigma_j and f do not depend on the order of lambda."""
        lam = rng.uniform(0.1, 2.0, 4)
        for _ in range(5):
            shuffled = rng.permutation(lam)
            for j in (1, 2, 3, 4):
                assert sigma(shuffled, j) == pytest.approx(sigma(lam, j), rel=1e-13)
                assert f_eval(shuffled, j).f == pytest.approx(f_eval(lam, j).f, rel=1e-13)

    def test_gradient_positive_in_cone(self, rng):
        """Test that every f_i is positive inside Gamma_k."""
        lam = np.array([1.0, 1.0, -0.4])
        assert all(g > 0 for g in f_eval(lam, 2).grad)
        for _ in range(10):
            result = f_eval(rng.uniform(0.05, 2.0, 3), 3)
            assert all(g > 0 for g in result.grad)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_concave_on_cone(self, rng, k):
        """Test f(s lam + (1 - s) mu) >= s f(lam) + (1 - s) f(mu) for lam, mu in Gamma_k."""
        checked = 0
        while checked < 50:
            lam, mu = rng.normal(0.6, 0.8, (2, 3))
            if not (in_garding_cone(lam, k) and in_garding_cone(mu, k)):
                continue
            s = rng.uniform(0.0, 1.0)
            mixed = f_eval(s * lam + (1 - s) * mu, k).f
            assert mixed >= s * f_eval(lam, k).f + (1 - s) * f_eval(mu, k).f - 1e-12
            checked += 1

    def test_zero_on_cone_boundary(self):
        """Test that f vanishes when one entry is zero and k = n."""
        assert f_eval([0.0, 1.0], 2).f == 0.0
        assert f_eval([0.0, 1.0, 1.0], 3).f == 0.0
        assert not f_eval([0.0, 1.0, 1.0], 3).cone_ok


class TestMatrixDerivativeInvariants:
    """Tests for F^{ij} under change of frame."""

    def test_identity_matrix(self):
        """Test F^{ij}(I) = diag(1/2, 1/2) for n = k = 2."""
        assert_allclose(F_matrix_derivative(np.eye(2), 2), 0.5 * np.eye(2), atol=1e-14)

    @pytest.mark.parametrize("n,k", [(2, 2), (3, 2), (3, 3)])
    def test_orthogonal_conjugation(self, rng, n, k):
        """Test F(Q A Q^T) = Q F(A) Q^T for random orthogonal Q."""
        for _ in range(5):
            p, _ = np.linalg.qr(rng.normal(size=(n, n)))
            A = p @ np.diag(rng.uniform(0.2, 1.5, n)) @ p.T
            A = 0.5 * (A + A.T)
            q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            rotated = q @ A @ q.T
            assert_allclose(F_matrix_derivative(0.5 * (rotated + rotated.T), k),
                            q @ F_matrix_derivative(A, k) @ q.T, atol=1e-10)
