"""
Run configuration read from a TOML file, with command-line overrides.

Example::

    [run]
    seed = 7
    replicas = 20000

    [process]
    name = "irw"
    dimension = 1

    [density]
    rho = 1.0

    [field]
    x = [[0], [0]]

    [grid]
    N = [8, 16, 32, 64]
    t = [0.5]
"""

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InvalidParameter, ParseError
from app.models.configuration import CoordVector, DualConfig
from app.models.params import DensityProfile, KernelSpec, PolyParams, ProcessName, SimConfig, TestFunction


class Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RunSection(Section):
    seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed")
    replicas: int = Field(default=10_000, ge=1, description="Monte Carlo replicas")
    threads: Optional[int] = Field(default=None, ge=1, description="Worker processes (environment default if unset)")
    out: str = Field(default="results", description="Output directory")


class ProcessSection(Section):
    name: ProcessName = "irw"
    dimension: int = Field(default=1, ge=1)
    jumps: Optional[list[list[float]]] = Field(
        default=None, description="Rows [z_1, ..., z_d, p(z)]; nearest-neighbour jumps when omitted"
    )
    box: Optional[int] = Field(
        default=None, ge=3, description="Periodic box side for finite exclusion kernels and simulated windows"
    )

    def kernel(self) -> KernelSpec:
        return KernelSpec.from_entries(self.dimension, self.jumps)


class DensitySection(Section):
    rho: float = Field(default=1.0, gt=0, description="Homogeneous density")
    profile: Optional[DensityProfile] = Field(default=None, description="Slowly varying profile rho(x/N)")


class FieldSection(Section):
    x: Optional[list[list[int]]] = Field(default=None, description="Coordinate vector, one site per row")
    configs: Optional[list[list[list[int]]]] = Field(
        default=None, description="Dual configurations, each a list of sites with repetition"
    )
    expression: Optional[str] = Field(default=None, description="Local function, e.g. 'eta(0)^2'")
    k: int = Field(default=2, ge=1, description="Field order for projections")
    project: list[int] = Field(default_factory=list, description="Projection degrees to report")


class GridSection(Section):
    N: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    t: list[float] = Field(default_factory=lambda: [0.5])
    T: float = Field(default=1.0, gt=0, description="Time horizon of the double integral")
    M: float = Field(default=1.0, ge=0, description="LCLT window |x| <= M sqrt(t)")


class RunConfig(Section):
    """Resolved configuration of one command run; unknown keys are rejected in every section."""

    run: RunSection = Field(default_factory=RunSection)
    process: ProcessSection = Field(default_factory=ProcessSection)
    density: DensitySection = Field(default_factory=DensitySection)
    field: FieldSection = Field(default_factory=FieldSection)
    test_function: TestFunction = Field(default_factory=TestFunction)
    grid: GridSection = Field(default_factory=GridSection)

    @model_validator(mode="after")
    def match_dimensions(self) -> "RunConfig":
        d = self.process.dimension
        phi = self.test_function
        if phi.dimension != d:
            if any(phi.center):
                raise InvalidParameter(f"Test function centre {phi.center} is not {d}-dimensional")
            object.__setattr__(self, "test_function", phi.model_copy(update={"center": (0.0,) * d}))
        profile = self.density.profile
        if profile is not None and profile.dimension != d:
            if any(profile.center):
                raise InvalidParameter(f"Profile centre {profile.center} is not {d}-dimensional")
            density = self.density.model_copy(update={"profile": profile.model_copy(update={"center": (0.0,) * d})})
            object.__setattr__(self, "density", density)
        for site in self.field.x or []:
            if len(site) != d:
                raise InvalidParameter(f"Site {site} is not {d}-dimensional")
        return self

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ParseError(f"Malformed configuration: {e}", 0)
        return cls.model_validate(data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise InvalidParameter(f"Configuration file {path} not found")
        return cls.from_text(path.read_text(encoding="utf-8"))

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, **overrides: Any) -> "RunConfig":
        """Configuration from `path` (defaults when None) with run-section overrides applied."""
        config = cls.from_file(path) if path is not None else cls()
        return config.with_run(**overrides)

    def with_run(self, **overrides: Any) -> "RunConfig":
        changes = {key: value for key, value in overrides.items() if value is not None}
        if not changes:
            return self
        run = RunSection.model_validate({**self.run.model_dump(), **changes})
        return self.model_copy(update={"run": run})

    def with_sections(self, **sections: dict) -> "RunConfig":
        """Copy with individual keys of other sections replaced (command-line options)."""
        data = self.model_dump()
        for name, values in sections.items():
            data[name] = {**data[name], **{k: v for k, v in values.items() if v is not None}}
        return type(self).model_validate(data)

    def kernel(self) -> KernelSpec:
        return self.process.kernel()

    def params(self) -> PolyParams:
        return PolyParams(rho=self.density.rho)

    def coord_vector(self) -> CoordVector:
        if not self.field.x:
            raise InvalidParameter("This command needs field.x, a coordinate vector")
        return CoordVector.of(*self.field.x)

    def dual_configs(self) -> list[DualConfig]:
        if not self.field.configs:
            return [DualConfig.from_sites([(0,) * self.process.dimension])]
        return [DualConfig.from_sites(sites) for sites in self.field.configs]

    def sim_config(self, window_side: int, replicas: int) -> SimConfig:
        """Monte Carlo parameters for simulated trajectories observed up to the last grid time."""
        return SimConfig(
            kernel=self.kernel(),
            process=self.process.name,
            window_side=window_side,
            seed=self.run.seed,
            replicas=replicas,
            horizon=max(self.grid.t),
        )

    def provenance(self, command: str, version: str) -> dict:
        return {"command": command, "version": version, "config": self.model_dump(mode="json")}
