"""
Kernel tables and trajectories: array-backed results that export to data frames.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from app.errors import InvalidParameter
from app.models.configuration import OccupationState, Site


def _coordinate_columns(d: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)]


@dataclass(frozen=True, eq=False)
class KernelTable:
    """p_t(x) on the box |x|_inf <= radius, plus a bound on the mass left out."""

    t: float
    dimension: int
    radius: int
    values: np.ndarray
    truncation_error: float
    method: str = "direct"

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != (2 * self.radius + 1,) * self.dimension:
            raise InvalidParameter(f"Kernel values of shape {values.shape} do not match radius {self.radius}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def value(self, site: Site) -> float:
        if len(site) != self.dimension or any(abs(c) > self.radius for c in site):
            return 0.0
        return float(self.values[tuple(c + self.radius for c in site)])

    def values_at(self, sites: np.ndarray) -> np.ndarray:
        """Kernel values at an integer array of displacements of shape (n, d); zero off the box."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.dimension)
        inside = np.all(np.abs(sites) <= self.radius, axis=1)
        out = np.zeros(len(sites))
        index = tuple((sites[inside] + self.radius).T)
        out[inside] = self.values[index]
        return out

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())

    def coordinates(self) -> np.ndarray:
        axes = [np.arange(-self.radius, self.radius + 1)] * self.dimension
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_frame(self, threshold: float = 0.0) -> pd.DataFrame:
        """Rows (x1..xd, probability) for sites whose probability exceeds `threshold`."""
        coords = self.coordinates()
        probs = self.values.ravel()
        keep = probs > threshold
        frame = pd.DataFrame(coords[keep], columns=_coordinate_columns(self.dimension))
        frame["probability"] = probs[keep]
        return frame


@dataclass(frozen=True)
class Trajectory:
    """Snapshots (time, occupation state) at strictly increasing times."""

    snapshots: tuple[tuple[float, OccupationState], ...]
    seed: Optional[int] = None
    replica: Optional[int] = None
    process: str = "irw"
    meta: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        times = [t for t, _ in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParameter("Snapshot times must be strictly increasing")
        totals = {eta.total for _, eta in self.snapshots}
        if len(totals) > 1:
            raise InvalidParameter(f"Particle count changes along the trajectory: {sorted(totals)}")

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    def to_frame(self) -> pd.DataFrame:
        """Long format (time, x1..xd, count) listing occupied sites only."""
        frames = []
        for t, eta in self.snapshots:
            coords = eta.window.coordinates()
            counts = eta.counts.ravel()
            occupied = counts > 0
            frame = pd.DataFrame(coords[occupied], columns=_coordinate_columns(eta.window.dimension))
            frame.insert(0, "time", t)
            frame["count"] = counts[occupied]
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)
