"""
covariance, scaling and nonstationary: fluctuation-field covariances against their exact values and limits.
"""

import logging
from typing import Optional, Union

import pandas as pd
import typer

from app.commands.common import Z_LIMIT, run_command
from app.engine.expression import parse_local_function
from app.engine.fields import (
    local_equilibrium_check,
    mc_covariance,
    nonstationary_covariance_check,
    nonstationary_scaling_check,
    projection_field_covariance,
    scaling_limit_check,
)
from app.engine.orthopoly import expand_local_function
from app.models.configuration import CoordVector
from app.models.local_function import BasisExpansion
from app.models.params import DensityProfile
from app.models.run_config import RunConfig
from app.storage import ResultWriter

logger = logging.getLogger(__name__)


def resolve_target(config: RunConfig) -> Union[CoordVector, BasisExpansion]:
    """The local-function expression expanded at the run density, else the coordinate vector."""
    if config.field.expression is not None:
        return expand_local_function(parse_local_function(config.field.expression), config.params())
    return config.coord_vector()


def covariance_body(config: RunConfig, writer: ResultWriter) -> bool:
    target = resolve_target(config)
    spec, params, phi = config.kernel(), config.params(), config.test_function
    reports = []
    for N in config.grid.N:
        for t in config.grid.t:
            reports.append(mc_covariance(target, phi, N, t, spec, params, config.run.replicas, config.run.seed,
                                         config.run.threads))
    frame = pd.DataFrame(
        [{"field": r.field_descriptor, "N": r.N, "t": r.t, "mc": r.value, "stderr": r.stderr, "exact": r.exact,
          "z": r.z_score} for r in reports]
    )
    writer.write_table(frame)
    passed = all(r.agrees for r in reports)
    writer.write_report({"rows": reports, "z_limit": Z_LIMIT, "passed": passed})
    return passed


def _projection_rows(config: RunConfig) -> list[dict]:
    f = resolve_target(config)
    k, d, t = config.field.k, config.process.dimension, config.grid.t[0]
    rows = []
    for N in config.grid.N:
        value = projection_field_covariance(f, k, config.test_function, N, t, config.kernel())
        rows.append({"N": N, "covariance": value, "rescaled": N ** (d * (k - 2)) * value})
        logger.info(f"Projection field k={k} N={N}: covariance {value:.8g}")
    return rows


def scaling_body(config: RunConfig, writer: ResultWriter) -> Optional[bool]:
    t = config.grid.t[0]
    if config.field.expression is not None:
        rows = _projection_rows(config)
        writer.write_table(pd.DataFrame(rows, columns=["N", "covariance", "rescaled"]), name="projection")
        report = {"projection": rows, "k": config.field.k, "t": t}
        if not config.field.x:
            writer.write_report(report)
            return None
    else:
        report = {}
    check = scaling_limit_check(config.coord_vector(), config.test_function, config.grid.N, t, config.kernel(),
                                config.params())
    writer.write_table(pd.DataFrame([row.model_dump() for row in check.rows]))
    report["scaling"] = check
    writer.write_report(report)
    return check.passed


def nonstationary_body(config: RunConfig, writer: ResultWriter) -> bool:
    spec = config.kernel()
    profile = config.density.profile or DensityProfile(center=(0.0,) * config.process.dimension)
    t, N = config.grid.t[0], config.grid.N[0]
    replicas, seed, threads = config.run.replicas, config.run.seed, config.run.threads
    checks = [nonstationary_covariance_check(xi, xi, profile, t, N, spec, replicas, seed, threads)
              for xi in config.dual_configs()]
    writer.write_table(pd.DataFrame(
        [{"xi": c.field_descriptor, "t": c.t, "N": c.N, "exact": c.exact, "mc": c.value, "stderr": c.stderr,
          "z": c.z_score} for c in checks]
    ))
    moments = local_equilibrium_check(profile, t, N, spec, replicas, seed, workers=threads)
    writer.write_table(pd.DataFrame(
        [{"site": str(m.site), "rho_t": m.rho, "order": c.order, "mean": c.mean, "stderr": c.stderr,
          "expected": c.expected, "z": c.z_score} for m in moments for c in m.moments]
    ), name="moments")
    passed = all(c.agrees for c in checks) and all(abs(c.z_score) <= Z_LIMIT for m in moments for c in m.moments)
    report = {"checks": checks, "moments": moments}
    if config.field.x:
        scaling = nonstationary_scaling_check(config.coord_vector(), config.test_function, config.grid.N, t, spec,
                                              profile)
        writer.write_table(pd.DataFrame([row.model_dump() for row in scaling.rows]), name="scaling")
        report["scaling"] = scaling
        passed = passed and scaling.passed
    report["passed"] = passed
    writer.write_report(report)
    return passed


def covariance_command(
    ctx: typer.Context,
    N: Optional[list[int]] = typer.Option(None, "--N", help="Scale (repeat for a grid)"),
    t: Optional[list[float]] = typer.Option(None, "--t", help="Macroscopic time (repeat for a grid)"),
    expression: Optional[str] = typer.Option(None, "--expression", help="Local function, e.g. 'eta(0)^2'"),
):
    """Monte Carlo field covariance against the exact lattice sum."""
    run_command(ctx, "covariance", covariance_body, grid={"N": N or None, "t": t or None},
                field={"expression": expression})


def scaling_command(
    ctx: typer.Context,
    N: Optional[list[int]] = typer.Option(None, "--N", help="Scale (repeat for a grid)"),
    t: Optional[float] = typer.Option(None, "--t", help="Macroscopic time"),
):
    """Rescaled exact covariance against its Gaussian limit along the N grid."""
    run_command(ctx, "scaling", scaling_body, grid={"N": N or None, "t": [t] if t is not None else None})


def nonstationary_command(
    ctx: typer.Context,
    N: Optional[int] = typer.Option(None, "--N", help="Scale"),
    t: Optional[float] = typer.Option(None, "--t", help="Macroscopic time"),
):
    """Duality covariance and local equilibrium under a slowly varying density profile."""
    run_command(ctx, "nonstationary", nonstationary_body,
                grid={"N": [N] if N is not None else None, "t": [t] if t is not None else None})
