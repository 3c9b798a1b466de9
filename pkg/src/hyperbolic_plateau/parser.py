"""Parser for run configuration files and the CSV tables written by a run."""

import csv
import dataclasses
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from .families import validate_psi, validate_subsolution
from .models import (
    ConfigError,
    ConfigLine,
    GridConfig,
    HeightMode,
    LineKind,
    OutputConfig,
    PathConfig,
    ProblemConfig,
    RunConfig,
    ScheduleConfig,
    ToleranceConfig,
    VerifyConfig,
)


def _float_list(text: str) -> List[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _str_list(text: str) -> List[str]:
    return [t for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> (dataclass, key -> converter); field order is the write order
SECTIONS: Dict[str, Any] = {
    "problem": (ProblemConfig, {
        "n": int, "k": int, "psi": str, "psi_coefficients": _float_list,
        "subsolution": str, "subsolution_coefficients": _float_list, "sigma": float,
    }),
    "grid": (GridConfig, {"h": float, "box": _float_list, "h_mode": HeightMode}),
    "path": (PathConfig, {
        "dt_initial": float, "dt_min": float, "dt_max": float, "predictor": _bool,
    }),
    "schedule": (ScheduleConfig, {
        "eps": _float_list, "eps_floor": float, "probe_eps": float,
        "theta_alpha": float, "theta_beta": float,
    }),
    "tolerances": (ToleranceConfig, {
        "newton": float, "guard": float, "fd_step": float, "armijo": float,
        "max_halvings": int, "newton_max_iter": int, "psd": float,
    }),
    "outputs": (OutputConfig, {"formats": _str_list, "threads": int}),
    "verify": (VerifyConfig, {
        "samples": int, "seed": int, "fault_injection": str, "solve": _bool,
        "lemma_b_placements": int,
    }),
}

REQUIRED_SECTIONS = ("problem", "grid", "schedule")
FAULTS = ("none", "gv")
FORMATS = ("csv", "json")


def parse_line(line: str) -> ConfigLine:
    """Classify a single config line.

    Args:
        line: Single line from the file

    Returns:
        ConfigLine instance

    Raises:
        ConfigError: If the line is neither blank, a comment, a section header nor key = value
    """
    stripped = line.strip()
    if not stripped:
        return ConfigLine(LineKind.BLANK, raw=line)
    if stripped.startswith("#"):
        return ConfigLine(LineKind.COMMENT, comment=stripped[1:].strip(), raw=line)

    # inline comments need whitespace before the '#'
    comment = None
    parts = stripped.split(" #", 1)
    if len(parts) == 2:
        stripped, comment = parts[0].rstrip(), parts[1].strip()

    if stripped.startswith("[") and stripped.endswith("]"):
        name = stripped[1:-1].strip()
        if not name:
            raise ConfigError(f"empty section header: {line!r}")
        return ConfigLine(LineKind.SECTION, section=name, comment=comment, raw=line)

    if "=" not in stripped:
        raise ConfigError(f"expected 'key = value', got {line!r}")
    key, value = (s.strip() for s in stripped.split("=", 1))
    if not key:
        raise ConfigError(f"missing key in {line!r}")
    return ConfigLine(LineKind.SETTING, key=key, value=value, comment=comment, raw=line)


def _convert(section: str, key: str, converter: Callable[[str], Any], text: str) -> Any:
    try:
        return converter(text)
    except ValueError as e:
        raise ConfigError(f"bad value for '{section}.{key}': {text!r} ({e})")


def _build_section(section: str, values: Dict[str, str]) -> Any:
    cls, converters = SECTIONS[section]
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            kwargs[f.name] = _convert(section, f.name, converters[f.name], values[f.name])
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"missing key '{section}.{f.name}'")
    return cls(**kwargs)


def _validate(config: RunConfig) -> None:
    p, g, s = config.problem, config.grid, config.schedule
    if p.n < 2:
        raise ConfigError(f"'problem.n' must be at least 2, got {p.n}")
    if not 1 <= p.k <= p.n:
        raise ConfigError(f"'problem.k' must satisfy 1 <= k <= n={p.n}, got {p.k}")
    if p.sigma is not None and not 0.0 < p.sigma < 1.0:
        raise ConfigError(f"'problem.sigma' must lie in (0, 1), got {p.sigma}")
    try:
        validate_psi(p.psi, p.psi_coefficients, p.n)
    except ConfigError as e:
        raise ConfigError(f"'problem.psi': {e}")
    try:
        validate_subsolution(p.subsolution, p.subsolution_coefficients, p.n)
    except ConfigError as e:
        raise ConfigError(f"'problem.subsolution': {e}")

    if g.h <= 0:
        raise ConfigError(f"'grid.h' must be positive, got {g.h}")
    if len(g.box) != 2 * p.n:
        raise ConfigError(f"'grid.box' needs {2 * p.n} numbers (lower then upper), got {len(g.box)}")
    if any(lo >= hi for lo, hi in zip(g.lower, g.upper)):
        raise ConfigError(f"'grid.box' lower corner must be below upper corner: {g.box}")

    if not s.eps or any(e <= 0 for e in s.eps):
        raise ConfigError(f"'schedule.eps' must be a nonempty list of positive values: {s.eps}")
    if any(b >= a for a, b in zip(s.eps, s.eps[1:])):
        raise ConfigError(f"'schedule.eps' must be strictly decreasing: {s.eps}")

    if config.path.dt_min <= 0 or config.path.dt_min > config.path.dt_initial:
        raise ConfigError("'path.dt_min' must be positive and at most 'path.dt_initial'")
    if config.outputs.threads < 1:
        raise ConfigError(f"'outputs.threads' must be at least 1, got {config.outputs.threads}")
    unknown = [f for f in config.outputs.formats if f not in FORMATS]
    if unknown:
        raise ConfigError(f"'outputs.formats' has unknown formats {unknown}")
    if config.verify.fault_injection not in FAULTS:
        raise ConfigError(
            f"'verify.fault_injection' must be one of {FAULTS}, got {config.verify.fault_injection!r}"
        )


def parse_config(content: str) -> RunConfig:
    """Parse run configuration text.

    Args:
        content: Text with [section] headers and key = value lines

    Returns:
        RunConfig instance

    Raises:
        ConfigError: On unknown sections or keys, missing keys, bad values or inconsistent settings
    """
    raw: Dict[str, Dict[str, str]] = {}
    section: Optional[str] = None
    for number, line in enumerate(content.split("\n"), 1):
        entry = parse_line(line)
        if entry.is_section():
            if entry.section not in SECTIONS:
                raise ConfigError(f"unknown section '[{entry.section}]' on line {number}")
            section = entry.section
            raw.setdefault(section, {})
        elif entry.is_setting():
            if section is None:
                raise ConfigError(f"key '{entry.key}' on line {number} is outside any section")
            if entry.key not in SECTIONS[section][1]:
                raise ConfigError(f"unknown key '{section}.{entry.key}' on line {number}")
            if entry.key in raw[section]:
                raise ConfigError(f"duplicate key '{section}.{entry.key}' on line {number}")
            raw[section][entry.key] = entry.value

    for name in REQUIRED_SECTIONS:
        if name not in raw:
            raise ConfigError(f"missing section '[{name}]'")
    built = {name: _build_section(name, raw.get(name, {})) for name in SECTIONS}
    config = RunConfig(**built)
    _validate(config)
    return config


def parse_config_file(file_path: Union[str, Path]) -> RunConfig:
    """Parse a run configuration from disk.

    Args:
        file_path: Path to the config file

    Returns:
        RunConfig instance
    """
    file_path = Path(file_path)
    try:
        content = file_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {file_path}: {e}")
    return parse_config(content)


def _cell(text: str) -> Optional[float]:
    if text == "" or text.lower() == "none":
        return None
    return float(text)


def parse_schedule_csv(file_path: Union[str, Path]) -> List[Dict[str, Optional[float]]]:
    """Read a schedule summary table; empty cells become None and booleans 1.0 / 0.0."""
    rows = []
    with Path(file_path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, text in row.items():
                lowered = text.lower()
                if lowered in ("true", "false"):
                    parsed[key] = 1.0 if lowered == "true" else 0.0
                else:
                    parsed[key] = _cell(text)
            rows.append(parsed)
    return rows


def parse_field_csv(file_path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a field table into one float array per column."""
    with Path(file_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(c) for c in row] for row in reader], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
