"""Prescribed curvature hypersurfaces in hyperbolic space with asymptotic boundary."""

from .continuation import EpsilonSchedule, StabilityDiagnostics, killing_probe, run_epsilon_path
from .grid import GridDomain, ScalarField, SubsolutionSpec, build_domain, fd_jet
from .hypgeo import CurvatureFrame, GraphJet, check_identities, curvature_frame, is_strictly_convex
from .models import (
    ArgumentError,
    ConfigError,
    DomainError,
    OracleError,
    PathFailure,
    PlateauError,
    RunConfig,
    SubsolutionError,
    Verdict,
)
from .parser import parse_config, parse_config_file
from .solver import ProblemSpec, SolverReport, calibrate_delta, newton_solve, rhs, solve_dirichlet
from .symfunc import EigenTuple, F_matrix_derivative, f_eval, in_garding_cone, sigma
from .verify import (
    BarrierSphere,
    HypothesisReport,
    cap_field,
    check_conditions,
    lemma_b_test,
    radial_oracle,
)
from .voper import VJet, assemble_G, convexity_margin_v, monotonicity_check
from .writer import write_config, write_config_file

__version__ = "0.1.0"
__all__ = [
    "ArgumentError",
    "BarrierSphere",
    "ConfigError",
    "CurvatureFrame",
    "DomainError",
    "EigenTuple",
    "EpsilonSchedule",
    "F_matrix_derivative",
    "GraphJet",
    "GridDomain",
    "HypothesisReport",
    "OracleError",
    "PathFailure",
    "PlateauError",
    "ProblemSpec",
    "RunConfig",
    "ScalarField",
    "SolverReport",
    "StabilityDiagnostics",
    "SubsolutionError",
    "SubsolutionSpec",
    "VJet",
    "Verdict",
    "assemble_G",
    "build_domain",
    "calibrate_delta",
    "cap_field",
    "check_conditions",
    "check_identities",
    "convexity_margin_v",
    "curvature_frame",
    "f_eval",
    "fd_jet",
    "in_garding_cone",
    "is_strictly_convex",
    "killing_probe",
    "lemma_b_test",
    "monotonicity_check",
    "newton_solve",
    "parse_config",
    "parse_config_file",
    "radial_oracle",
    "rhs",
    "run_epsilon_path",
    "sigma",
    "solve_dirichlet",
    "write_config",
    "write_config_file",
]
