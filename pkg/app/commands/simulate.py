"""
simulate: trajectories of independent walkers or exclusion started from a product measure.
"""

from typing import Optional

import pandas as pd
import typer

from app.commands.common import run_command
from app.engine.sampler import simulate_replicas
from app.models.run_config import RunConfig
from app.storage import ResultWriter

DEFAULT_WINDOW_SIDE = 21


def simulate_body(config: RunConfig, writer: ResultWriter, count: int) -> None:
    side = config.process.box or DEFAULT_WINDOW_SIDE
    sim = config.sim_config(side, count)
    trajectories = simulate_replicas(sim, config.params(), config.grid.t, config.run.threads)
    frames = []
    for trajectory in trajectories:
        frame = trajectory.to_frame()
        frame.insert(0, "replica", trajectory.replica)
        frames.append(frame)
    writer.write_table(pd.concat(frames, ignore_index=True))
    volume = sim.window.volume
    particles = [trajectory.snapshots[0][1].total for trajectory in trajectories]
    writer.write_report(
        {
            "sim": sim,
            "window_volume": volume,
            "particles": particles,
            "mean_density": sum(particles) / (len(particles) * volume),
        }
    )


def simulate_command(
    ctx: typer.Context,
    process: Optional[str] = typer.Option(None, "--process", help="irw or sep"),
    t: Optional[list[float]] = typer.Option(None, "--t", help="Observation time (repeat for a grid)"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Homogeneous density"),
    box: Optional[int] = typer.Option(None, "--box", help="Periodic window side"),
    count: int = typer.Option(1, "--count", min=1, help="Trajectories to write"),
):
    """Write simulated trajectories as (replica, time, site, count) rows."""
    run_command(ctx, "simulate", lambda config, writer: simulate_body(config, writer, count),
                process={"name": process, "box": box}, grid={"t": t or None}, density={"rho": rho})
