"""Pytest fixtures for hyperbolic-plateau tests."""

import numpy as np
import pytest

from hyperbolic_plateau.families import CapPsi, PerturbedCapSubsolution, RadialGaussianPsi
from hyperbolic_plateau.grid import SubsolutionSpec, build_domain
from hyperbolic_plateau.solver import ProblemSpec, solve_dirichlet

BOX_2D = ((-2.0, -2.0), (2.0, 2.0))
CAP_SIGMA = 0.6
CAP_EPS = 0.4


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cap_sub():
    """Dome of curvature 0.64 vanishing on the circle of radius 1.6."""
    return SubsolutionSpec(PerturbedCapSubsolution(2, CAP_SIGMA, 1.6, 0.1), BOX_2D)


@pytest.fixture(scope="session")
def cap_problem(cap_sub):
    """psi = sigma_2(0.6, 0.6) with the perturbed cap subsolution at eps = 0.4."""
    return ProblemSpec(2, 2, CapPsi(2, [CAP_SIGMA], k=2), cap_sub, CAP_EPS)


@pytest.fixture(scope="session")
def cap_domain(cap_sub):
    """Coarse grid on Omega_0.4."""
    return build_domain(cap_sub, CAP_EPS, 1 / 8)


@pytest.fixture(scope="session")
def cap_solution(cap_problem, cap_domain):
    """Solved cap problem on the coarse grid: (field, report)."""
    return solve_dirichlet(cap_problem, cap_domain)


@pytest.fixture(scope="session")
def radial_problem():
    """psi = 0.36 (1 + 0.2 exp(-|x|^2)) with a steeper perturbed cap subsolution."""
    sub = SubsolutionSpec(PerturbedCapSubsolution(2, CAP_SIGMA, 1.6, 0.2), BOX_2D)
    return ProblemSpec(2, 2, RadialGaussianPsi(2, [0.36, 0.2, 1.0]), sub, CAP_EPS)


@pytest.fixture
def cap_config_text():
    """Run configuration for the cap problem on a coarse grid."""
    return """# cap problem
[problem]
n = 2
k = 2
psi = cap
psi_coefficients = 0.6
subsolution = perturbed_cap
subsolution_coefficients = 0.6, 1.6, 0.1

[grid]
h = 0.125
box = -2.0, -2.0, 2.0, 2.0

[schedule]
eps = 0.4, 0.3

[verify]
samples = 10
seed = 3
"""


@pytest.fixture
def cap_config_file(tmp_path, cap_config_text):
    """Cap configuration written to a temporary file."""
    path = tmp_path / "cap.cfg"
    path.write_text(cap_config_text)
    return path
