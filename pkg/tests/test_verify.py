"""Tests for hyperbolic_plateau.verify module."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hyperbolic_plateau import verify as verify_module
from hyperbolic_plateau.families import CapSubsolution, SeparableProductPsi
from hyperbolic_plateau.grid import ScalarField, SubsolutionSpec, build_domain
from hyperbolic_plateau.hypgeo import GraphJet, curvature_frame
from hyperbolic_plateau.models import (
    ArgumentError,
    DomainError,
    Orientation,
    GridConfig,
    ProblemConfig,
    RunConfig,
    ScheduleConfig,
    Verdict,
    VerifyConfig,
)
from hyperbolic_plateau.solver import ProblemSpec, solve_dirichlet
from hyperbolic_plateau.verify import (
    BarrierSphere,
    cap_field,
    cap_oracle_agreement,
    cap_through_circle,
    check_conditions,
    condition_matrix,
    identity_suite,
    interior_samples,
    jacobian_check,
    lemma_b_sphere,
    lemma_b_test,
    radial_oracle,
    random_lemma_b_spheres,
    rotation_residual,
    run_suite,
    sphere_exactness,
)

BOX_3D = ((-2.0,) * 3, (2.0,) * 3)


def _suite_config(**verify):
    return RunConfig(
        problem=ProblemConfig(2, 2, "cap", [0.6], "perturbed_cap", [0.6, 1.6, 0.1]),
        grid=GridConfig(h=0.125, box=[-2.0, -2.0, 2.0, 2.0]),
        schedule=ScheduleConfig(eps=[0.4]),
        verify=VerifyConfig(samples=10, **verify),
    )


class TestBarrierSpheres:
    """Tests for sphere caps of constant curvature."""

    def test_outward_apex(self):
        """Test the apex height (1 - sigma) R and zero slope of an upper cap."""
        sphere = BarrierSphere((0.0, 0.0), 0.5, 2.0, Orientation.OUTWARD)
        u, du, _ = cap_field(sphere, np.zeros(2))
        assert u == pytest.approx(1.0)
        assert_allclose(du, 0.0)

    @pytest.mark.parametrize("orientation, offset", [
        (Orientation.OUTWARD, [0.9, 0.5]),
        (Orientation.INWARD, [1.2, 0.8]),
    ])
    def test_curvature_is_sigma(self, orientation, offset):
        """Test kappa = sigma on either cap."""
        sphere = BarrierSphere((0.1, -0.2), 0.4, 1.5, orientation)
        x = np.array([0.1, -0.2]) + np.array(offset)
        frame = curvature_frame(GraphJet(*cap_field(sphere, x)))
        assert_allclose(frame.kappa.as_array(), 0.4, atol=1e-10)

    def test_outside_footprint(self):
        """Test that points beyond the sphere or below the plane raise."""
        outward = BarrierSphere((0.0, 0.0), 0.5, 1.0, Orientation.OUTWARD)
        with pytest.raises(DomainError):
            cap_field(outward, np.array([2.0, 0.0]))
        inward = BarrierSphere((0.0, 0.0), 0.5, 1.0, Orientation.INWARD)
        with pytest.raises(DomainError):
            cap_field(inward, np.zeros(2))

    def test_rejects_bad_parameters(self):
        """Test sigma and radius validation."""
        with pytest.raises(ArgumentError):
            BarrierSphere((0.0, 0.0), 1.0, 1.0)
        with pytest.raises(ArgumentError):
            BarrierSphere((0.0, 0.0), 0.5, 0.0)

    def test_cap_through_circle(self):
        """Test that the dome passes through the circle at height eps."""
        dome = cap_through_circle(0.6, 1.2, 0.3)
        u, _, _ = cap_field(dome, np.array([1.2, 0.0]))
        assert u == pytest.approx(0.3, abs=1e-12)

    def test_lemma_b_sphere_slice(self):
        """Test that the ball's slice at height eps is the disk of radius r0 tangent at x0."""
        x0, eps, sigma, r0 = np.array([1.0, 0.0]), 0.2, 0.5, 0.7
        sphere = lemma_b_sphere(x0, [-1.0, 0.0], r0, sigma, eps)
        assert_allclose(sphere.center_horizontal, [1.7, 0.0])
        slice_radius = np.sqrt(sphere.R**2 - (sigma * sphere.R - eps) ** 2)
        assert slice_radius == pytest.approx(r0)
        assert not sphere.contains(np.array([1.0, 0.0, eps]))

    def test_sphere_exactness_property(self, rng):
        """Test the exactness property on random footprint points."""
        result = sphere_exactness(1000, rng)
        assert result.passed, result.value


class TestOperatorChecks:
    """Tests for the identity and Jacobian checks at full sample counts."""

    def test_identities_hold(self, rng):
        """Test the curvature identities on 1000 random convex states per dimension."""
        result = identity_suite(1000, rng)
        assert result.passed, result.value

    @pytest.mark.parametrize("n, k", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
    def test_jacobian_matches_differences(self, rng, n, k):
        """Test analytic derivatives of G against differences on 100 states."""
        assert jacobian_check(n, k, 100, rng) <= 1e-6


class TestLemmaB:
    """Tests for the sphere non-intersection test."""

    def test_random_placements(self, cap_solution, cap_domain, rng):
        """Test that no admissible barrier ball contains a graph point."""
        field, _ = cap_solution
        spheres = random_lemma_b_spheres(field, 2, 50, rng)
        assert len(spheres) == 50
        verdicts = [lemma_b_test(field, cap_domain, s, 2)[0] for s in spheres]
        assert Verdict.FAIL not in verdicts
        assert Verdict.PASS in verdicts

    def test_centre_over_domain(self, cap_solution, cap_domain):
        """Test that a ball centred over the domain is not applicable."""
        field, _ = cap_solution
        sphere = BarrierSphere((0.0, 0.0), 0.3, 1.0, Orientation.INWARD)
        verdict, witness = lemma_b_test(field, cap_domain, sphere, 2)
        assert verdict is Verdict.NOT_APPLICABLE
        assert witness["reason"] == "center over domain"

    def test_outward_not_applicable(self, cap_solution, cap_domain):
        """Test that upper caps are outside the test's scope."""
        field, _ = cap_solution
        sphere = BarrierSphere((5.0, 0.0), 0.3, 1.0, Orientation.OUTWARD)
        assert lemma_b_test(field, cap_domain, sphere, 2)[0] is Verdict.NOT_APPLICABLE

    def test_detects_intersection(self, cap_domain):
        """Test that a flat field at the ball's equator is reported with a witness."""
        sigma, eps = 0.9, cap_domain.eps
        x0 = cap_domain.crossings[int(np.argmax(cap_domain.crossings[:, 0]))]
        sphere = lemma_b_sphere(x0, [-1.0, 0.0], 3.0, sigma, eps)
        top = sphere.euclidean_center[-1]
        field = ScalarField(cap_domain, np.full(cap_domain.size, top**2))
        verdict, witness = lemma_b_test(field, cap_domain, sphere, 2)
        assert verdict is Verdict.FAIL
        assert len(witness["point"]) == 3
        assert witness["point"][-1] == pytest.approx(top)


class TestConditions:
    """Tests for the structure conditions and the almost-round search."""

    def test_power_psi_matrix_vanishes(self, rng):
        """Test that psi = c u^k gives the zero structure matrix."""
        psi = SeparableProductPsi(3, [0.8, 2.0, 0.0, 0.0, 0.0])
        x = rng.uniform(-0.5, 0.5, (4, 3))
        u = rng.uniform(0.3, 1.0, 4)
        assert_allclose(condition_matrix(psi, x, u, 2), 0.0, atol=1e-12)

    def test_not_applicable_when_k_equals_n(self, cap_problem, rng):
        """Test that k = n reports NOT_APPLICABLE with values attached."""
        points = interior_samples(cap_problem.sub, cap_problem.eps, 10, rng)
        report = check_conditions(cap_problem, points)
        assert report.cond12 is Verdict.NOT_APPLICABLE
        assert report.cond13 is Verdict.NOT_APPLICABLE
        assert report.almost_round is Verdict.NOT_APPLICABLE
        assert len(report.cond13_min) > 0
        assert np.isfinite(report.cond12_min)

    def test_round_domain_in_three_dimensions(self, rng):
        """Test conditions for psi = c u^2 over a round 3D domain."""
        sub = SubsolutionSpec(CapSubsolution(3, 0.5, 1.2), BOX_3D)
        spec = ProblemSpec(3, 2, SeparableProductPsi(3, [0.8, 2.0, 0.0, 0.0, 0.0]), sub, 0.2)
        points = interior_samples(sub, 0.2, 10, rng)
        report = check_conditions(spec, points)
        assert report.cond13 is Verdict.PASS
        assert report.almost_round is Verdict.PASS
        params = report.almost_round_params
        assert params["sigma_s"] < params["sigma_b"]
        assert params["r_in"] == pytest.approx(1.2, rel=1e-6)
        assert report.to_dict()["almost_round"] == "pass"

    def test_interior_samples(self, cap_sub, rng):
        """Test that samples lie in Omega_eps."""
        points = interior_samples(cap_sub, 0.4, 25, rng)
        assert len(points) == 25
        assert np.all(cap_sub.ubar.value(points) > 0.4)


class TestRadialOracle:
    """Tests for the shooting oracle."""

    def test_agrees_with_dome(self):
        """Test the oracle against the closed-form dome for constant psi."""
        result = cap_oracle_agreement()
        assert result.passed, result.value

    def test_profile_reaches_boundary(self, radial_problem):
        """Test that the profile meets eps at the boundary radius."""
        profile = radial_oracle(radial_problem)
        assert float(profile(profile.radius)) == pytest.approx(radial_problem.eps, abs=1e-8)
        assert profile.u0 > radial_problem.eps
        assert profile.mismatch < 1e-8

    def test_rejects_non_radial(self, cap_sub):
        """Test that a non-radial psi raises."""
        psi = SeparableProductPsi(2, [0.5, 0.0, 0.3, 0.7])
        spec = ProblemSpec(2, 2, psi, cap_sub, 0.4)
        with pytest.raises(ArgumentError):
            radial_oracle(spec)

    def test_solver_matches_oracle(self, radial_problem):
        """Test the discrete solution against the radial profile."""
        domain = build_domain(radial_problem.sub, radial_problem.eps, 1 / 8)
        field, report = solve_dirichlet(radial_problem, domain)
        assert report.converged
        profile = radial_oracle(radial_problem)
        error = np.abs(np.sqrt(field.values) - profile.height(domain.coords)).max()
        assert error < 0.05

    def test_rotation_residual_shrinks(self, radial_problem):
        """Test that the rotation field residual decreases under refinement."""
        residuals = []
        for h in (1 / 8, 1 / 16):
            domain = build_domain(radial_problem.sub, radial_problem.eps, h)
            field, report = solve_dirichlet(radial_problem, domain)
            assert report.converged
            residuals.append(rotation_residual(field, radial_problem))
        assert residuals[1] < residuals[0]

    def test_rotation_residual_region(self, cap_solution, cap_problem):
        """Test that the residual is taken over nodes above the requested level only."""
        field, _ = cap_solution
        assert rotation_residual(field, cap_problem, level=0.45) >= rotation_residual(
            field, cap_problem, level=0.6)
        with pytest.raises(DomainError):
            rotation_residual(field, cap_problem, level=cap_problem.sub.peak)

    @pytest.mark.slow
    @pytest.mark.parametrize("problem_name", ["radial_problem", "cap_problem"])
    def test_rotation_residual_second_order(self, request, problem_name):
        """Test a residual ratio of at least 3 from h = 1/32 to h = 1/64."""
        problem = request.getfixturevalue(problem_name)
        residuals = []
        for h in (1 / 32, 1 / 64):
            domain = build_domain(problem.sub, problem.eps, h)
            field, report = solve_dirichlet(problem, domain)
            assert report.converged, report.failure
            residuals.append(rotation_residual(field, problem))
        assert residuals[0] >= 3.0 * residuals[1], residuals

    @pytest.mark.slow
    def test_solver_matches_oracle_on_fine_grid(self, radial_problem):
        """Test relative agreement within 1e-3 away from the boundary at h = 1/128."""
        domain = build_domain(radial_problem.sub, radial_problem.eps, 1 / 128)
        field, report = solve_dirichlet(radial_problem, domain)
        assert report.converged, report.failure
        level = 0.5 * (radial_problem.eps + radial_problem.sub.peak)
        region = domain.deep_interior(2) & (domain.ubar_values > level)
        exact = radial_oracle(radial_problem).height(domain.coords[region])
        error = np.abs(np.sqrt(field.values[region]) - exact) / exact
        assert error.max() <= 1e-3


class TestRunSuite:
    """Tests for the property suite."""

    def test_default_suite_passes(self, cap_problem):
        """Test that every asserted property holds for the cap problem."""
        results = run_suite(_suite_config(), cap_problem, seed=5)
        assert results.passed, results.first_failure()
        names = [r.name for r in results.results]
        assert names == ["sphere_exactness", "identities", "jacobian", "conditions", "oracle_cap"]
        assert results.hypotheses is not None

    def test_gv_fault_fails_jacobian(self, cap_problem):
        """Test that the injected G_v fault is reported as the first failure."""
        results = run_suite(_suite_config(fault_injection="gv"), cap_problem, seed=5)
        failure = results.first_failure()
        assert failure is not None
        assert failure.name == "jacobian"
        assert failure.value > 1e-6

    def test_suite_is_seeded(self, cap_problem):
        """Test that the same seed gives the same report."""
        a = run_suite(_suite_config(), cap_problem, seed=11).to_dict()
        b = run_suite(_suite_config(), cap_problem, seed=11).to_dict()
        assert a == b

    def test_solve_suite_places_barriers(self, cap_problem):
        """Test that the solve-based suite runs the barrier test on applicable placements."""
        results = run_suite(_suite_config(solve=True, lemma_b_placements=10), cap_problem, seed=5)
        lemma_b = next(r for r in results.results if r.name == "lemma_b")
        assert lemma_b.passed, lemma_b.witness
        assert lemma_b.value > 0

    @pytest.mark.parametrize("placements", [0, 3])
    def test_no_applicable_placement_fails(self, cap_problem, mocker, placements):
        """Test that a barrier test with nothing to check is reported as failed."""
        outward = BarrierSphere((5.0, 0.0), 0.3, 1.0, Orientation.OUTWARD)
        mocker.patch.object(verify_module, "random_lemma_b_spheres",
                            return_value=[outward] * placements)
        results = run_suite(_suite_config(solve=True), cap_problem, seed=5)
        lemma_b = next(r for r in results.results if r.name == "lemma_b")
        assert not lemma_b.passed
        assert lemma_b.value == 0.0
        assert lemma_b.witness["reason"] == "no applicable placement"
        assert lemma_b.witness["placements"] == placements
        assert not results.passed
