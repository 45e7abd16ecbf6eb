"""
kernel: transition kernel tables and, on a long enough time grid, the kernel decay check.
"""

import logging
from typing import Optional

import pandas as pd
import typer

from app.commands.common import run_command
from app.engine.generator import (
    FiniteGenerator,
    FiniteStateTransitionSource,
    IRWTransitionSource,
    decay_bound_check,
    exclusion_box_side,
    transition_row,
)
from app.engine.kernels import config_kernel, rw_kernel
from app.models.run_config import RunConfig
from app.storage import ResultWriter

logger = logging.getLogger(__name__)


def _irw_tables(config: RunConfig, writer: ResultWriter) -> dict:
    spec = config.kernel()
    frames, meta = [], []
    for t in config.grid.t:
        table = rw_kernel(spec, t)
        frame = table.to_frame()
        frame.insert(0, "t", float(t))
        frames.append(frame)
        meta.append(
            {
                "t": float(t),
                "radius": table.radius,
                "method": table.method,
                "total_mass": table.total_mass,
                "truncation_error": table.truncation_error,
            }
        )
        logger.info(f"Kernel t={t}: radius {table.radius}, truncation error {table.truncation_error:.3g}")
    writer.write_table(pd.concat(frames, ignore_index=True))
    pairs = []
    if config.field.configs:
        configs = config.dual_configs()
        for t in config.grid.t:
            for xi in configs:
                for xi2 in configs:
                    if xi.size == xi2.size:
                        pairs.append({"t": float(t), "xi": str(xi), "xi2": str(xi2),
                                      "probability": config_kernel(spec, t, xi, xi2)})
    return {"process": "irw", "kernel": spec.describe(), "tables": meta, "config_kernel": pairs}


def _sep_tables(config: RunConfig, writer: ResultWriter) -> tuple[dict, FiniteGenerator]:
    spec = config.kernel()
    xi = config.dual_configs()[0]
    side = config.process.box or exclusion_box_side(max(config.grid.t))
    gen = FiniteGenerator.build("sep", spec, side, xi.size)
    rows = []
    for t in config.grid.t:
        row = transition_row(gen, xi, t)
        for i in row.nonzero()[0]:
            rows.append({"t": float(t), "state": str(gen.config_of(int(i))), "probability": float(row[i])})
    writer.write_table(pd.DataFrame(rows, columns=["t", "state", "probability"]))
    return {"process": "sep", "kernel": spec.describe(), "box": side, "states": gen.size, "start": str(xi)}, gen


def kernel_body(config: RunConfig, writer: ResultWriter) -> Optional[bool]:
    if config.process.name == "sep":
        report, gen = _sep_tables(config, writer)
        source = FiniteStateTransitionSource(gen)
    else:
        report = _irw_tables(config, writer)
        source = IRWTransitionSource(config.kernel())
    passed = None
    if len(config.grid.t) >= 4 and min(config.grid.t) > 0:
        fits = [decay_bound_check(source, xi, config.grid.t) for xi in config.dual_configs()]
        report["decay"] = fits
        passed = all(fit.passed for fit in fits)
    writer.write_report(report)
    return passed


def kernel_command(
    ctx: typer.Context,
    process: Optional[str] = typer.Option(None, "--process", help="irw or sep"),
    d: Optional[int] = typer.Option(None, "--d", help="Lattice dimension"),
    t: Optional[list[float]] = typer.Option(None, "--t", help="Time (repeat for a grid)"),
    box: Optional[int] = typer.Option(None, "--box", help="Periodic box side for exclusion"),
):
    """Write kernel tables with their truncation errors."""
    run_command(ctx, "kernel", kernel_body, process={"name": process, "dimension": d, "box": box},
                grid={"t": t or None})
