"""Command-line interface for prescribed curvature solves in hyperbolic space."""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .continuation import EpsilonSchedule, run_epsilon_path
from .families import build_psi, build_subsolution
from .grid import SubsolutionSpec, build_domain
from .models import (
    ArgumentError,
    ConfigError,
    DomainError,
    PlateauError,
    RunConfig,
    SubsolutionError,
)
from .parser import parse_config_file, parse_field_csv, parse_schedule_csv
from .solver import ProblemSpec, solve_dirichlet
from .verify import run_suite
from .writer import (
    write_domain_csv,
    write_field_csv,
    write_report_json,
    write_schedule_csv,
    write_table_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PATH = 2
EXIT_PROPERTY = 3

SETUP_ERRORS = (ConfigError, DomainError, SubsolutionError, ArgumentError)


def build_problem(config: RunConfig, eps: Optional[float] = None) -> ProblemSpec:
    """ProblemSpec for a parsed config at ``eps`` (default: the first scheduled value)."""
    p = config.problem
    ubar = build_subsolution(p.subsolution, p.subsolution_coefficients, p.n)
    sub = SubsolutionSpec(ubar, (config.grid.lower, config.grid.upper))
    psi = build_psi(p.psi, p.psi_coefficients, p.n, p.k)
    return ProblemSpec(p.n, p.k, psi, sub, eps if eps is not None else config.schedule.eps[0],
                       p.sigma)


def _threads(config: RunConfig, threads: Optional[int]) -> int:
    return threads if threads is not None else config.outputs.threads


def _out_dir(out: Optional[str], default: str = ".") -> Path:
    path = Path(out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
@click.version_option(version="0.1.0")
@click.option("--verbose", "-v", count=True, help="Increase log detail (-v info, -vv debug)")
def cli(verbose: int):
    """Prescribed curvature hypersurfaces in hyperbolic space.

    Solve the Dirichlet problem on a level set of a subsolution, follow it as
    eps decreases, and run the verification suite.
    """
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("hyperbolic_plateau").setLevel(level)


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), required=True,
              help="Run configuration file")
@click.option("--out", "-o", type=click.Path(), help="Output directory (default: .)")
@click.option("--threads", "-t", type=click.IntRange(min=1), help="Assembly worker threads")
def solve(config_path: str, out: Optional[str], threads: Optional[int]):
    """Solve the Dirichlet problem at the largest scheduled eps.

    Writes field.csv, domain.csv and report.json.
    """
    try:
        config = parse_config_file(config_path)
        problem = build_problem(config)
        domain = build_domain(problem.sub, problem.eps, config.grid.h)
        field, report = solve_dirichlet(problem.with_eps(domain.eps), domain, config.path,
                                        config.tolerances, workers=_threads(config, threads))
    except SETUP_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    out_dir = _out_dir(out)
    if "csv" in config.outputs.formats:
        write_field_csv(field, out_dir / "field.csv")
        write_domain_csv(domain, out_dir / "domain.csv")
    write_report_json(report, out_dir / "report.json")

    if not report.converged:
        failure = report.failure or {}
        click.echo(f"Error: path failure: {failure.get('message')}", err=True)
        click.echo(f"  last good: {report.last_good}", err=True)
        sys.exit(EXIT_PATH)

    click.echo(f"✓ Solved eps={domain.eps:g} on {domain.size} nodes "
               f"({sum(s.iterations for s in report.steps)} Newton iterations)")
    for check in report.checks:
        mark = "✓" if check.passed else "✗"
        click.echo(f"  {mark} {check.name}: {check.value} (bound {check.bound})")


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), required=True,
              help="Run configuration file")
@click.option("--out", "-o", type=click.Path(), help="Output directory (default: .)")
@click.option("--threads", "-t", type=click.IntRange(min=1), help="Assembly worker threads")
def plateau(config_path: str, out: Optional[str], threads: Optional[int]):
    """Follow the eps schedule toward the asymptotic Plateau solution.

    Writes field_eps00.csv, field_eps01.csv, ..., schedule.csv and report.json.
    """
    try:
        config = parse_config_file(config_path)
        problem = build_problem(config)
        s = config.schedule
        schedule = EpsilonSchedule(s.eps, s.eps_floor, s.probe_eps)
        result = run_epsilon_path(
            problem, schedule, config.grid.h, config.grid.h_mode, config.path, config.tolerances,
            s.theta_alpha, s.theta_beta, workers=_threads(config, threads),
        )
    except SETUP_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    out_dir = _out_dir(out)
    rows = result.schedule_rows()
    if "csv" in config.outputs.formats:
        for i, record in enumerate(result.records):
            write_field_csv(record.field, out_dir / f"field_eps{i:02d}.csv")
        write_schedule_csv(rows, out_dir / "schedule.csv")
    estimate = result.plateau_estimate
    write_report_json({
        "schedule": rows,
        "levels": [r.report for r in result.records],
        "failure": result.failure,
        "plateau_estimate": {
            "max": float(np.max(estimate)) if estimate is not None and estimate.size else None,
            "values": estimate,
            "probe_points": result.probe_points,
        },
    }, out_dir / "report.json")

    if result.failure is not None:
        click.echo(f"Error: eps path failed at eps={result.failure.get('eps')}: "
                   f"{result.failure.get('message')}", err=True)
        click.echo(f"  {len(result.records)} level(s) completed", err=True)
        sys.exit(EXIT_PATH)
    click.echo(f"✓ Solved {len(result.records)} eps levels")


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), required=True,
              help="Run configuration file")
@click.option("--out", "-o", type=click.Path(), help="Output directory (default: .)")
@click.option("--threads", "-t", type=click.IntRange(min=1), help="Assembly worker threads")
@click.option("--seed", "-s", type=click.IntRange(min=0, max=2**64 - 1),
              help="Random seed (default: verify.seed)")
def verify(config_path: str, out: Optional[str], threads: Optional[int], seed: Optional[int]):
    """Run identity, exactness, Jacobian, hypothesis and oracle checks.

    Exits 3 naming the first failing property.
    """
    try:
        config = parse_config_file(config_path)
        problem = build_problem(config)
        results = run_suite(config, problem, seed, workers=_threads(config, threads))
    except SETUP_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except PlateauError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PROPERTY)

    write_report_json(results, _out_dir(out) / "verify.json")
    for r in results.results:
        mark = "✓" if r.passed else "✗"
        click.echo(f"  {mark} {r.name}: {r.value} (bound {r.bound})")

    failure = results.first_failure()
    if failure is not None:
        click.echo(f"Error: property '{failure.name}' failed: value={failure.value} "
                   f"bound={failure.bound} witness={failure.witness}", err=True)
        sys.exit(EXIT_PROPERTY)
    click.echo("✓ All properties hold")


@cli.command(name="plot-data")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "-o", type=click.Path(), help="Output directory (default: RUN_DIR)")
def plot_data(run_dir: str, out: Optional[str]):
    """Turn a plateau run into log-log and radial profile tables.

    Reads RUN_DIR/schedule.csv and RUN_DIR/field_eps*.csv.
    """
    run = Path(run_dir)
    out_dir = _out_dir(out, run_dir)
    try:
        rows = parse_schedule_csv(run / "schedule.csv")
    except (OSError, ValueError) as e:
        click.echo(f"Error: cannot read schedule: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    loglog = []
    for row in rows:
        entry = {"log_eps": float(np.log(row["eps"]))}
        for key in ("cauchy_gap", "c2_interior", "m0", "residual"):
            value = row.get(key)
            entry[f"log_{key}"] = float(np.log(value)) if value is not None and value > 0 else None
        loglog.append(entry)
    write_table_csv(loglog, out_dir / "loglog.csv")

    fields = sorted(run.glob("field_eps*.csv"))
    for path in fields:
        table = parse_field_csv(path)
        coords = np.column_stack([table[a] for a in ("x", "y", "z") if a in table])
        u = table["u"]
        apex = coords[int(np.argmax(u))] if u.size else np.zeros(coords.shape[1])
        r = np.linalg.norm(coords - apex, axis=-1)
        order = np.argsort(r, kind="stable")
        profile = [{"r": float(r[i]), "u": float(u[i])} for i in order]
        write_table_csv(profile, out_dir / path.name.replace("field_", "profile_"))
    click.echo(f"✓ Wrote loglog.csv and {len(fields)} profile table(s) to {out_dir}")


if __name__ == "__main__":
    cli()
