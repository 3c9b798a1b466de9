"""Tests for hyperbolic_plateau.solver module."""

import numpy as np
import pytest

from hyperbolic_plateau.families import CapPsi, ParaboloidSubsolution
from hyperbolic_plateau.grid import ScalarField, SubsolutionSpec, build_domain
from hyperbolic_plateau.models import (
    ArgumentError,
    DomainError,
    PathFailure,
    Stage,
    SubsolutionError,
    ToleranceConfig,
)
from hyperbolic_plateau.solver import (
    DirichletSolver,
    ProblemSpec,
    calibrate_delta,
    exterior_radius,
    newton_solve,
    rhs,
    solve_dirichlet,
)
from hyperbolic_plateau.verify import cap_field, cap_through_circle


def _exact_error(field, problem):
    """Max |u - u_exact| against the dome of curvature 0.6 through Gamma_eps."""
    domain = field.domain
    rho = problem.sub.ubar.level_radius(domain.eps)
    dome = cap_through_circle(0.6, rho, domain.eps)
    exact = np.array([cap_field(dome, x)[0] for x in domain.coords])
    return float(np.abs(np.sqrt(field.values) - exact).max())


class TestProblemSpec:
    """Tests for ProblemSpec validation."""

    def test_rejects_order_above_dimension(self, cap_sub):
        """Test that k > n raises."""
        with pytest.raises(ArgumentError):
            ProblemSpec(2, 3, CapPsi(2, [0.5], 2), cap_sub, 0.4)

    def test_rejects_non_positive_eps(self, cap_sub):
        """Test that eps <= 0 raises."""
        with pytest.raises(ArgumentError):
            ProblemSpec(2, 2, CapPsi(2, [0.5], 2), cap_sub, 0.0)

    def test_rejects_dimension_mismatch(self, cap_sub):
        """Test that the box dimension must match n."""
        with pytest.raises(ArgumentError):
            ProblemSpec(3, 2, CapPsi(3, [0.5], 2), cap_sub, 0.4)

    def test_with_eps(self, cap_problem):
        """Test that with_eps changes only eps."""
        other = cap_problem.with_eps(0.2)
        assert other.eps == 0.2
        assert other.psi is cap_problem.psi
        assert cap_problem.eps == 0.4

    def test_barrier_sigma_from_psi(self, cap_problem):
        """Test that the barrier curvature sits just below (min psi / C(n, k))^(1/k)."""
        x = np.zeros((3, 2))
        sigma = cap_problem.barrier_sigma(x, np.ones(3))
        assert sigma < 0.6
        assert sigma == pytest.approx(0.6, rel=2e-3)


class TestCalibration:
    """Tests for delta calibration and the right-hand side."""

    def test_delta(self, cap_problem, cap_domain):
        """Test delta = min(G[ubar]/ubar)/2 with G[ubar] close to 0.64."""
        delta = calibrate_delta(cap_problem, cap_domain)
        expected = 0.5 * 0.64 / cap_domain.ubar_values.max()
        assert delta == pytest.approx(expected, rel=0.1)

    def test_non_convex_subsolution(self):
        """Test that a subsolution that is not locally convex is rejected."""
        sub = SubsolutionSpec(ParaboloidSubsolution(2, 2.0, 1.0), ((-2.0, -2.0), (2.0, 2.0)))
        spec = ProblemSpec(2, 2, CapPsi(2, [0.5], 2), sub, 0.5)
        domain = build_domain(sub, 0.5, 0.25)
        with pytest.raises(SubsolutionError):
            calibrate_delta(spec, domain)

    def test_rhs_endpoints(self, cap_problem):
        """Test the right-hand side at the ends of both stages."""
        x = np.array([0.3, -0.2])
        ub = float(cap_problem.sub.ubar.value(x))
        delta = 0.2
        assert rhs(Stage.SUBSOLUTION, 0.0, x, ub, cap_problem, delta) == pytest.approx(0.64, rel=1e-10)
        assert rhs(Stage.SUBSOLUTION, 1.0, x, ub, cap_problem, delta) == pytest.approx(delta * ub)
        assert rhs(Stage.TARGET, 0.0, x, 0.5, cap_problem, delta) == pytest.approx(delta * 0.5)
        assert rhs(Stage.TARGET, 1.0, x, 0.5, cap_problem, delta) == pytest.approx(0.6)

    def test_rhs_rejects_non_positive_height(self, cap_problem):
        """Test that u <= 0 raises."""
        with pytest.raises(DomainError):
            rhs(Stage.TARGET, 0.5, np.zeros(2), 0.0, cap_problem, 0.2)

    def test_exterior_radius_of_disk(self, cap_domain):
        """Test that a convex domain has an unbounded exterior ball."""
        assert exterior_radius(cap_domain) == float("inf")


class TestNewton:
    """Tests for Newton at fixed (stage, t)."""

    def test_subsolution_solves_stage_one_start(self, cap_problem, cap_domain):
        """Test that vbar solves the stage 1 equation at t = 0 without iterating."""
        vbar = ScalarField(cap_domain, cap_domain.ubar_values**2)
        field, iterations = newton_solve(cap_domain, cap_problem, Stage.SUBSOLUTION, 0.0, vbar)
        assert iterations == 0
        assert np.array_equal(field.values, vbar.values)

    def test_small_step_converges(self, cap_problem, cap_domain):
        """Test a short continuation step from vbar."""
        vbar = ScalarField(cap_domain, cap_domain.ubar_values**2)
        solver = DirichletSolver(cap_problem, cap_domain)
        V, record = solver.newton(Stage.SUBSOLUTION, 0.1, vbar.values)
        assert record.iterations >= 1
        assert record.residuals[-1] <= 1e-10
        assert record.min_convexity_margin > 0
        assert record.linearization_max < 0

    def test_iteration_limit(self, cap_problem, cap_domain):
        """Test that hitting the iteration limit raises PathFailure with its location."""
        vbar = ScalarField(cap_domain, cap_domain.ubar_values**2)
        with pytest.raises(PathFailure) as info:
            newton_solve(cap_domain, cap_problem, Stage.SUBSOLUTION, 0.5, vbar,
                         ToleranceConfig(newton_max_iter=0))
        assert info.value.stage == Stage.SUBSOLUTION
        assert info.value.t == 0.5


class TestSolveDirichlet:
    """Tests for the full two-stage solve."""

    def test_converges(self, cap_solution):
        """Test that the cap problem converges along both stages."""
        _, report = cap_solution
        assert report.converged
        assert report.failure is None
        assert report.final_residual <= 1e-10
        assert {s.stage for s in report.steps} == {1, 2}
        assert report.steps[-1].stage == 2 and report.steps[-1].t == 1.0

    def test_bound_checks(self, cap_solution):
        """Test that the structural checks hold on the solution."""
        _, report = cap_solution
        for name in ("comparison", "c0_upper", "c1_interior", "boundary_gradient",
                     "linearization_sign", "rank_monitor"):
            check = report.check(name)
            assert check is not None
            assert check.passed, (name, check.value, check.bound)
        assert report.r0 == float("inf")

    def test_uniqueness_probe(self, cap_solution):
        """Test that a perturbed restart returns to the same solution."""
        _, report = cap_solution
        assert report.uniqueness_gap is not None
        assert report.uniqueness_gap < 1e-6

    def test_lies_above_subsolution(self, cap_solution, cap_domain):
        """Test u >= ubar at every node."""
        field, _ = cap_solution
        assert np.all(np.sqrt(field.values) >= cap_domain.ubar_values - 1e-9)

    def test_strictly_above_strict_subsolution(self, cap_solution, cap_domain):
        """Test u > ubar at interior nodes when ubar is a strict subsolution."""
        field, _ = cap_solution
        interior = cap_domain.interior
        assert np.all(np.sqrt(field.values[interior]) > cap_domain.ubar_values[interior])

    def test_newton_quadratic_phase(self, cap_solution):
        """Test residual ratios of at most 0.1 once full Newton steps reach residual 1e-3."""
        _, report = cap_solution
        ratios = []
        for step in report.steps:
            pairs = zip(step.residuals, step.residuals[1:], step.dampings)
            ratios += [after / before for before, after, alpha in pairs
                       if alpha == 1.0 and before < 1e-3]
        assert ratios
        assert max(ratios) <= 0.1, ratios

    def test_close_to_exact_cap(self, cap_solution, cap_problem):
        """Test the solution against the exact dome of curvature 0.6."""
        field, _ = cap_solution
        assert _exact_error(field, cap_problem) < 0.05

    def test_error_decreases_with_h(self, cap_solution, cap_problem, cap_sub):
        """Test that halving h reduces the error against the exact dome."""
        coarse, _ = cap_solution
        domain = build_domain(cap_sub, cap_problem.eps, 1 / 16)
        fine, report = solve_dirichlet(cap_problem, domain)
        assert report.converged
        fine_error = _exact_error(fine, cap_problem)
        assert fine_error < _exact_error(coarse, cap_problem)
        assert fine_error < 0.02

    def test_warm_start_skips_path(self, cap_solution, cap_problem, cap_domain):
        """Test that starting from the solution goes straight to the target equation."""
        field, _ = cap_solution
        again, report = solve_dirichlet(cap_problem, cap_domain, init=field)
        assert report.converged
        assert report.warm_start_used
        assert all(s.stage == 2 for s in report.steps)
        assert np.abs(again.values - field.values).max() < 1e-8

    def test_path_failure_is_reported(self, cap_problem, cap_domain):
        """Test that a stalled path returns the last good state instead of raising."""
        field, report = solve_dirichlet(cap_problem, cap_domain,
                                        tolerances=ToleranceConfig(newton_max_iter=0))
        assert not report.converged
        assert report.failure["stage"] == 1
        assert "step size exhausted" in report.failure["message"]
        assert report.last_good == {"stage": 1, "t": 0.0}
        assert np.allclose(field.values, cap_domain.ubar_values**2)
        assert report.checks == []

    def test_report_serialises(self, cap_solution):
        """Test that the report converts to a plain dict."""
        _, report = cap_solution
        data = report.to_dict()
        assert data["converged"] is True
        assert data["eps"] == pytest.approx(0.4)
        assert len(data["checks"]) == len(report.checks)


@pytest.mark.slow
class TestExactCapConvergence:
    """Refinement study against the closed-form dome."""

    def test_error_and_order(self, cap_problem, cap_sub):
        """Test max error at most 1e-3 at h = 1/128 and observed order at least 1."""
        errors = []
        for h in (1 / 32, 1 / 64, 1 / 128):
            domain = build_domain(cap_sub, cap_problem.eps, h)
            field, report = solve_dirichlet(cap_problem, domain)
            assert report.converged, report.failure
            errors.append(_exact_error(field, cap_problem))
        assert errors[0] > errors[1] > errors[2]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.0), errors
        assert errors[-1] <= 1e-3
