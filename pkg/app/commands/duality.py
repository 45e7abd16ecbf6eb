"""
duality: Monte Carlo of the covariance identity int E_eta[D(xi, eta_t)] D(xi', eta) d nu = p_t(xi, xi') a(xi').

A density profile in the configuration switches to the nonstationary version.
"""

import logging
from typing import Optional

import pandas as pd
import typer

from app.commands.common import Z_LIMIT, run_command
from app.engine.fields import duality_covariance_check, nonstationary_covariance_check
from app.models.run_config import RunConfig
from app.storage import ResultWriter

logger = logging.getLogger(__name__)

# Share of cells that must agree within Z_LIMIT standard errors
PASS_FRACTION = 0.95


def _stationary_rows(config: RunConfig) -> list[dict]:
    spec, params = config.kernel(), config.params()
    configs = config.dual_configs()
    rows = []
    for t in config.grid.t:
        for xi in configs:
            for xi2 in configs:
                check = duality_covariance_check(
                    xi, xi2, t, spec, params, config.run.replicas, config.run.seed, config.run.threads
                )
                rows.append({"xi": str(xi), "xi2": str(xi2), "t": float(t), "exact": check.rhs,
                             "mc": check.lhs, "stderr": check.stderr, "z": check.z_score})
    return rows


def _nonstationary_rows(config: RunConfig) -> list[dict]:
    spec, profile = config.kernel(), config.density.profile
    N = config.grid.N[0]
    rows = []
    for t in config.grid.t:
        for xi in config.dual_configs():
            for xi2 in config.dual_configs():
                report = nonstationary_covariance_check(
                    xi, xi2, profile, t, N, spec, config.run.replicas, config.run.seed, config.run.threads
                )
                rows.append({"xi": str(xi), "xi2": str(xi2), "t": float(t), "exact": report.exact,
                             "mc": report.value, "stderr": report.stderr, "z": report.z_score})
    return rows


def duality_body(config: RunConfig, writer: ResultWriter) -> bool:
    profile = config.density.profile
    rows = _nonstationary_rows(config) if profile is not None else _stationary_rows(config)
    frame = pd.DataFrame(rows, columns=["xi", "xi2", "t", "exact", "mc", "stderr", "z"])
    frame["agrees"] = frame["z"].abs() <= Z_LIMIT
    writer.write_table(frame)
    share = float(frame["agrees"].mean()) if len(frame) else 1.0
    passed = share >= PASS_FRACTION
    writer.write_report({"mode": "nonstationary" if profile is not None else "stationary", "cells": len(frame),
                         "agreeing_share": share, "z_limit": Z_LIMIT, "passed": passed})
    logger.info(f"Duality: {share:.1%} of {len(frame)} cells within {Z_LIMIT} standard errors")
    return passed


def duality_command(
    ctx: typer.Context,
    t: Optional[list[float]] = typer.Option(None, "--t", help="Time (repeat for a grid)"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Homogeneous density"),
):
    """Check the duality covariance identity cell by cell."""
    run_command(ctx, "duality", duality_body, grid={"t": t or None}, density={"rho": rho})
