"""
expand: Charlier coefficients of a local function, the expansion condition sum and projections.
"""

from typing import Optional

import pandas as pd
import typer

from app.commands.common import run_command
from app.engine.expression import parse_local_function
from app.engine.orthopoly import (
    check_expansion_condition,
    density_projection,
    expand_local_function,
    norm_a,
    project,
)
from app.errors import InvalidParameter
from app.models.run_config import RunConfig
from app.storage import ResultWriter


def expand_body(config: RunConfig, writer: ResultWriter) -> None:
    if config.field.expression is None:
        raise InvalidParameter("expand needs a local-function expression")
    params = config.params()
    f = parse_local_function(config.field.expression)
    expansion = expand_local_function(f, params)
    frame = pd.DataFrame(
        [{"degree": xi.size, "xi": str(xi), "coefficient": c, "norm": norm_a(xi, params)} for xi, c in expansion],
        columns=["degree", "xi", "coefficient", "norm"],
    )
    writer.write_table(frame)
    projections = {
        str(n): [{"xi": str(xi), "coefficient": c} for xi, c in project(expansion, n)]
        for n in config.field.project
    }
    writer.write_report(
        {
            "expression": str(f),
            "rho": params.rho,
            "constant_term": expansion.constant_term,
            "density_projection": density_projection(expansion),
            "condition_sum": check_expansion_condition(expansion, params),
            "projections": projections,
        }
    )


def expand_command(
    ctx: typer.Context,
    expression: Optional[str] = typer.Argument(None, help="Local function, e.g. 'eta(0)^2'"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Density"),
    project_degrees: Optional[list[int]] = typer.Option(None, "--project", help="Projection degree (repeatable)"),
):
    """Expand a local function in the Charlier duality basis."""
    run_command(ctx, "expand", expand_body, field={"expression": expression, "project": project_degrees or None},
                density={"rho": rho})
