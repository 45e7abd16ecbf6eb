"""
lclt: deviation of the walk kernel from its Gaussian comparator along a time grid.
"""

from typing import Optional

import pandas as pd
import typer

from app.commands.common import run_command
from app.engine.kernels import lclt_scan
from app.models.run_config import RunConfig
from app.storage import ResultWriter


def lclt_body(config: RunConfig, writer: ResultWriter) -> bool:
    report = lclt_scan(config.kernel(), config.grid.t, config.grid.M)
    d = config.process.dimension
    rows = []
    for row in report.rows:
        entry = {"t": row.t, "deviation": row.deviation, "scaled": row.scaled}
        entry.update({f"x{i + 1}": c for i, c in enumerate(row.argmax)})
        rows.append(entry)
    columns = ["t", "deviation", "scaled", *(f"x{i + 1}" for i in range(d))]
    writer.write_table(pd.DataFrame(rows, columns=columns))
    writer.write_report(report)
    typer.echo(f"lclt: slope {report.slope:.3f} (generic reference {report.reference_slope})")
    return report.passed


def lclt_command(
    ctx: typer.Context,
    t: Optional[list[float]] = typer.Option(None, "--t", help="Time (repeat for a grid)"),
    M: Optional[float] = typer.Option(None, "--M", help="Window |x| <= M sqrt(t)"),
    d: Optional[int] = typer.Option(None, "--d", help="Lattice dimension"),
):
    """Local CLT deviations and their fitted decay slope."""
    run_command(ctx, "lclt", lclt_body, grid={"t": t or None, "M": M}, process={"dimension": d})
