"""Command-line application module."""

import logging
from pathlib import Path
from typing import Optional

import typer

from app import __version__
from app.commands import bg_rate, duality, expand, fields, kernel, lclt, simulate
from app.commands.common import GlobalOptions

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

app = typer.Typer(
    name="orthodual",
    help="Orthogonal-duality toolkit: exact kernels, Monte Carlo checks and fluctuation-field analysis.",
    no_args_is_help=True,
)


@app.callback()
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    replicas: Optional[int] = typer.Option(None, "--replicas", help="Monte Carlo replicas"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker processes (default from ORTHODUAL_THREADS)"),
    config: Optional[Path] = typer.Option(None, "--config", help="TOML run configuration"),
):
    """Global options shared by every subcommand."""
    logger.info(f"orthodual {__version__}")
    ctx.obj = GlobalOptions(seed=seed, replicas=replicas, out=out, threads=threads, config=config)


# Register subcommands
app.command("kernel")(kernel.kernel_command)
app.command("duality")(duality.duality_command)
app.command("covariance")(fields.covariance_command)
app.command("scaling")(fields.scaling_command)
app.command("nonstationary")(fields.nonstationary_command)
app.command("bg-rate")(bg_rate.bg_rate_command)
app.command("lclt")(lclt.lclt_command)
app.command("expand")(expand.expand_command)
app.command("simulate")(simulate.simulate_command)


if __name__ == "__main__":
    app()
