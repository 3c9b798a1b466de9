"""Shared data models, enums and exceptions for hyperbolic-plateau."""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import List, Optional, Tuple


class PlateauError(Exception):
    """Base class for all errors raised by hyperbolic-plateau."""
    pass


class ArgumentError(PlateauError, ValueError):
    """Raised when an operation receives arguments outside its contract."""
    pass


class DomainError(PlateauError, ValueError):
    """Raised when a point, level or domain lies outside where the geometry is defined."""
    pass


class SubsolutionError(PlateauError):
    """Raised when the supplied subsolution is not strictly locally convex or not admissible."""
    pass


class OracleError(PlateauError):
    """Raised when an independent oracle cannot produce a reference value."""
    pass


class ConfigError(PlateauError, ValueError):
    """Raised when a run configuration is malformed or inconsistent."""
    pass


class PathFailure(PlateauError):
    """Raised when Newton continuation cannot advance along the homotopy path."""

    def __init__(self, message: str, stage: int = 0, t: float = 0.0, residual: float = float("nan")):
        super().__init__(message)
        self.stage = stage
        self.t = t
        self.residual = residual


class NodeTag(IntEnum):
    """Classification of a lattice node relative to the level set domain."""
    EXTERIOR = 0  # subsolution <= eps
    INTERIOR = 1  # all 2n axis neighbours inside
    BOUNDARY_ADJACENT = 2  # at least one axis edge cut by the level set


class Stage(IntEnum):
    """Stage of the two-stage continuity path."""
    SUBSOLUTION = 1  # deform subsolution equation to G = delta * u
    TARGET = 2  # deform G = delta * u to the prescribed curvature equation


class Verdict(Enum):
    """Tri-state outcome of a hypothesis or property check."""
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not-applicable"


class Orientation(Enum):
    """Which normal a barrier sphere's curvature is measured against."""
    INWARD = "inward"  # centre at height +sigma*R, lower cap used
    OUTWARD = "outward"  # centre at height -sigma*R, upper cap used


class HeightMode(Enum):
    """Grid spacing policy along an epsilon schedule."""
    FIXED = "fixed"
    PROPORTIONAL = "proportional"


@dataclass
class ProblemConfig:
    """The problem section: dimension, order and the two named families."""

    n: int
    k: int
    psi: str
    psi_coefficients: List[float]
    subsolution: str
    subsolution_coefficients: List[float]
    sigma: Optional[float] = None


@dataclass
class GridConfig:
    """Lattice spacing and bounding box (lower corner then upper corner)."""

    h: float
    box: List[float]
    h_mode: HeightMode = HeightMode.FIXED

    @property
    def lower(self) -> Tuple[float, ...]:
        """Lower corner of the box."""
        return tuple(self.box[: len(self.box) // 2])

    @property
    def upper(self) -> Tuple[float, ...]:
        """Upper corner of the box."""
        return tuple(self.box[len(self.box) // 2:])


@dataclass
class PathConfig:
    """Step controls for the t-continuation."""

    dt_initial: float = 0.1
    dt_min: float = 1e-4
    dt_max: float = 0.25
    predictor: bool = True


@dataclass
class ScheduleConfig:
    """Decreasing epsilon values and the interior probe used along them."""

    eps: List[float]
    eps_floor: Optional[float] = None
    probe_eps: Optional[float] = None
    theta_alpha: float = 1.0
    theta_beta: Optional[float] = None


@dataclass
class ToleranceConfig:
    """Numerical tolerances; every default is the documented ledger value."""

    newton: float = 1e-10
    guard: float = 1e-8
    fd_step: float = 1e-5
    armijo: float = 1e-4
    max_halvings: int = 30
    newton_max_iter: int = 50
    psd: float = 1e-8


@dataclass
class OutputConfig:
    """Output formats and the worker pool size handed to assembly."""

    formats: List[str] = field(default_factory=lambda: ["csv", "json"])
    threads: int = 1


@dataclass
class VerifyConfig:
    """Controls for the verification suite."""

    samples: int = 100
    seed: int = 0
    fault_injection: str = "none"
    solve: bool = False
    lemma_b_placements: int = 50


@dataclass
class RunConfig:
    """A complete run configuration as read from a config file."""

    problem: ProblemConfig
    grid: GridConfig
    schedule: ScheduleConfig
    path: PathConfig = field(default_factory=PathConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)


class LineKind(Enum):
    """Kind of a single config line."""
    BLANK = "blank"
    COMMENT = "comment"
    SECTION = "section"
    SETTING = "setting"


@dataclass
class ConfigLine:
    """One parsed config line; ``raw`` keeps the text as read."""

    kind: LineKind
    section: Optional[str] = None
    key: Optional[str] = None
    value: Optional[str] = None
    comment: Optional[str] = None
    raw: str = ""

    def is_setting(self) -> bool:
        return self.kind == LineKind.SETTING

    def is_section(self) -> bool:
        return self.kind == LineKind.SECTION
