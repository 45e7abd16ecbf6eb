"""
Shared plumbing for subcommands: global options, configuration resolution,
error-to-exit-code mapping and the PASS/FAIL convention.
"""

import logging
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import typer
from pydantic import ValidationError

from app import __version__
from app.errors import StatisticalFailure, ToolkitError
from app.models.run_config import RunConfig
from app.storage import ResultWriter

logger = logging.getLogger(__name__)

# |z| beyond which a Monte Carlo estimate disagrees with its exact value
Z_LIMIT = 4.0

CommandBody = Callable[[RunConfig, ResultWriter], Optional[bool]]


@dataclass(frozen=True)
class GlobalOptions:
    """Options given before the subcommand name."""

    seed: Optional[int] = None
    replicas: Optional[int] = None
    out: Optional[Path] = None
    threads: Optional[int] = None
    config: Optional[Path] = None


def resolve_config(ctx: typer.Context, **sections: dict) -> RunConfig:
    options = ctx.obj if isinstance(ctx.obj, GlobalOptions) else GlobalOptions()
    config = RunConfig.load(
        options.config,
        seed=options.seed,
        replicas=options.replicas,
        out=str(options.out) if options.out is not None else None,
        threads=options.threads,
    )
    return config.with_sections(**sections) if sections else config


def verdict(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def run_command(ctx: typer.Context, command: str, body: CommandBody, **sections: dict) -> None:
    """Resolve the configuration, run `body` and translate failures into exit codes.

    `body` returns True or False for a verdict (False exits with code 4 after the
    outputs are written) or None when the command has no verdict.
    """
    logger.info(f"{command} starting")
    try:
        config = resolve_config(ctx, **sections)
        writer = ResultWriter(config.run.out, command, config.provenance(command, __version__))
        passed = body(config, writer)
        if passed is not None:
            typer.echo(f"{command}: {verdict(passed)}")
            if not passed:
                raise StatisticalFailure(f"{command} verdict is FAIL")
        logger.info(f"{command} completed")
    except ToolkitError as e:
        logger.error(f"{command} failed: {type(e).__name__}: {e.message}")
        typer.echo(f"Error: {type(e).__name__}: {e.message}", err=True)
        raise typer.Exit(code=e.exit_code)
    except ValidationError as e:
        logger.error(f"{command} failed: invalid configuration: {e}")
        typer.echo(f"Error: invalid configuration: {e}", err=True)
        raise typer.Exit(code=2)
    except typer.Exit:
        raise
    except Exception as e:
        logger.error(f"{command} failed: {e}")
        logger.error(traceback.format_exc())
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=3)
