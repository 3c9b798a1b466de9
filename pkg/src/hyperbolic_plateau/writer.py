"""Writers for run configurations, field and node tables, schedule summaries and JSON reports."""

import csv
import dataclasses
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from .grid import GridDomain, ScalarField, field_jets
from .hypgeo import convexity_margin_batch, curvature_matrix_batch
from .models import RunConfig

AXES = ("x", "y", "z")

SECTION_ORDER = ("problem", "grid", "path", "schedule", "tolerances", "outputs", "verify")


def format_value(value: Any) -> str:
    """Format one config value so that parsing it back gives the same value.

    Args:
        value: bool, int, float, str, Enum or a list of those

    Returns:
        Config text for the value
    """
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def format_section(name: str, section: Any) -> List[str]:
    """Format one config section; fields set to None are left out."""
    lines = [f"[{name}]"]
    for f in dataclasses.fields(section):
        value = getattr(section, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {format_value(value)}")
    return lines


def write_config(config: RunConfig) -> str:
    """Convert a RunConfig to config text.

    Args:
        config: RunConfig instance to serialize

    Returns:
        Text that parse_config reads back to an equal RunConfig
    """
    blocks = ["\n".join(format_section(name, getattr(config, name))) for name in SECTION_ORDER]
    return "\n\n".join(blocks) + "\n"


def write_config_file(config: RunConfig, file_path: Union[str, Path], create_dirs: bool = True) -> None:
    """Write a RunConfig to disk.

    Args:
        config: RunConfig instance to write
        file_path: Path where the file should be written
        create_dirs: Whether to create parent directories if they don't exist
    """
    file_path = Path(file_path)
    if create_dirs:
        file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(write_config(config), encoding="utf-8")


def _number(value: float) -> str:
    return format(float(value), ".17g")


def _open_csv(file_path: Union[str, Path], create_dirs: bool):
    file_path = Path(file_path)
    if create_dirs:
        file_path.parent.mkdir(parents=True, exist_ok=True)
    return file_path.open("w", newline="", encoding="utf-8")


def field_table(field: ScalarField) -> Dict[str, np.ndarray]:
    """Columns x, y[, z], v, u, kappa_1..kappa_n and margin of a v-field."""
    domain = field.domain
    n = domain.n
    V = field.values
    u = np.sqrt(V)
    dv, d2v = field_jets(domain, V)
    du = dv / (2.0 * u[:, None])
    d2u = (0.5 * d2v - du[:, :, None] * du[:, None, :]) / u[:, None, None]
    a, _, _ = curvature_matrix_batch(u, du, d2u)
    kappa = np.linalg.eigvalsh(a)
    columns = {AXES[i] if i < 3 else f"x{i + 1}": domain.coords[:, i] for i in range(n)}
    columns["v"] = V
    columns["u"] = u
    for i in range(n):
        columns[f"kappa_{i + 1}"] = kappa[:, i]
    columns["margin"] = convexity_margin_batch(u, du, d2u)
    return columns


def write_field_csv(field: ScalarField, file_path: Union[str, Path], create_dirs: bool = True) -> None:
    """Write a field table with one row per unknown, in node order."""
    columns = field_table(field)
    with _open_csv(file_path, create_dirs) as fh:
        writer = csv.writer(fh)
        writer.writerow(list(columns))
        for row in zip(*columns.values()):
            writer.writerow([_number(v) for v in row])


def write_domain_csv(domain: GridDomain, file_path: Union[str, Path], create_dirs: bool = True) -> None:
    """Write node coordinates, tags and subsolution values, then the Gamma_eps crossings."""
    n = domain.n
    names = [AXES[i] if i < 3 else f"x{i + 1}" for i in range(n)]
    with _open_csv(file_path, create_dirs) as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind"] + names + ["tag", "ubar"])
        for x, tag, ub in zip(domain.coords, domain.node_tags, domain.ubar_values):
            writer.writerow(["node"] + [_number(c) for c in x] + [int(tag), _number(ub)])
        for x in domain.crossings:
            writer.writerow(["crossing"] + [_number(c) for c in x] + ["", _number(domain.eps)])


def write_table_csv(rows: Sequence[Dict[str, Any]], file_path: Union[str, Path],
                    create_dirs: bool = True) -> None:
    """Write dict rows with the first row's keys as header; None becomes an empty cell."""
    with _open_csv(file_path, create_dirs) as fh:
        writer = csv.writer(fh)
        if not rows:
            return
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            cells = []
            for key in header:
                value = row.get(key)
                if value is None:
                    cells.append("")
                elif isinstance(value, bool):
                    cells.append("true" if value else "false")
                elif isinstance(value, (int, np.integer)):
                    cells.append(str(int(value)))
                else:
                    cells.append(_number(value))
            writer.writerow(cells)


def write_schedule_csv(rows: Sequence[Dict[str, Any]], file_path: Union[str, Path],
                       create_dirs: bool = True) -> None:
    """Write the eps schedule summary (eps, residual, m0, c2_interior, cauchy_gap, ...)."""
    write_table_csv(rows, file_path, create_dirs)


def to_jsonable(value: Any) -> Any:
    """Convert reports to plain JSON types; non-finite floats become null."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        if hasattr(value, "to_dict"):
            return to_jsonable(value.to_dict())
        return to_jsonable(dataclasses.asdict(value))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def write_report_json(report: Any, file_path: Union[str, Path], create_dirs: bool = True) -> None:
    """Write a report as one JSON document with sorted keys."""
    file_path = Path(file_path)
    if create_dirs:
        file_path.parent.mkdir(parents=True, exist_ok=True)
    with file_path.open("w", encoding="utf-8") as fh:
        json.dump(to_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
