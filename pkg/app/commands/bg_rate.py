"""
bg-rate: Boltzmann-Gibbs double integrals along the N grid and their fitted decay exponent.
"""

import logging
from typing import Optional

import numpy as np
import pandas as pd
import typer

from app.commands.common import run_command
from app.commands.fields import resolve_target
from app.engine.fields import bg_double_integral, fit_bg_exponent
from app.models.local_function import BasisExpansion
from app.models.run_config import RunConfig
from app.storage import ResultWriter

logger = logging.getLogger(__name__)


def bg_rate_body(config: RunConfig, writer: ResultWriter, synthetic: Optional[float] = None) -> bool:
    grid = config.grid.N
    d = config.process.dimension
    if synthetic is not None:
        k = config.field.k
        values = [float(N) ** (-synthetic) for N in grid]
        logger.info(f"Synthetic power law N^-{synthetic} on {len(grid)} grid points")
    else:
        target = resolve_target(config)
        k = config.field.k if isinstance(target, BasisExpansion) else target.k
        values = [
            bg_double_integral(target, config.test_function, N, config.grid.T, config.kernel(), config.params(), k=k)
            for N in grid
        ]
    fit = fit_bg_exponent(grid, values, k, d)
    frame = pd.DataFrame({"N": grid, "value": values, "log_N": np.log(grid), "log_value": np.log(values)})
    writer.write_table(frame)
    writer.write_report({"fit": fit, "synthetic_exponent": synthetic, "T": config.grid.T})
    logger.info(f"BG rate k={k} d={d}: slope {fit.slope:.4f} against -alpha = {-fit.alpha:.4f}")
    return fit.passed


def bg_rate_command(
    ctx: typer.Context,
    N: Optional[list[int]] = typer.Option(None, "--N", help="Scale (repeat for a grid)"),
    T: Optional[float] = typer.Option(None, "--T", help="Time horizon"),
    k: Optional[int] = typer.Option(None, "--k", help="Field order for projected expansions"),
    synthetic: Optional[float] = typer.Option(
        None, "--synthetic", help="Fit the exact power law N^-s instead of computed integrals"
    ),
):
    """Fit the decay exponent of the double integral and compare it with 2(k-1)d / (2 + (k-1)d)."""
    run_command(ctx, "bg-rate", lambda config, writer: bg_rate_body(config, writer, synthetic),
                grid={"N": N or None, "T": T}, field={"k": k})
