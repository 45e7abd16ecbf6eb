"""
Parameter models: Poisson densities, jump laws, test functions and density profiles.
"""

import math
from functools import reduce
from itertools import combinations
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import beta, gamma

from app.errors import InvalidKernel, InvalidParameter, NonPositiveDensity
from app.models.configuration import Site, Window

ProcessName = Literal["irw", "sep"]


class PolyParams(BaseModel):
    """Density parameters of the Poisson product measure the polynomials are orthogonal for."""

    model_config = ConfigDict(frozen=True)

    rho: float = Field(..., description="Homogeneous density")
    per_site_rho: Optional[dict[Site, float]] = Field(
        default=None, description="Site densities overriding rho (inhomogeneous case)"
    )

    @field_validator("rho")
    @classmethod
    def check_rho(cls, value: float) -> float:
        if not math.isfinite(value) or value <= 0:
            raise NonPositiveDensity(f"Density must be positive and finite, got {value}")
        return value

    @field_validator("per_site_rho")
    @classmethod
    def check_site_rho(cls, value: Optional[dict[Site, float]]) -> Optional[dict[Site, float]]:
        if value is None:
            return value
        for site, r in value.items():
            if not math.isfinite(r) or r <= 0:
                raise NonPositiveDensity(f"Density at {site} must be positive and finite, got {r}")
        return value

    @property
    def homogeneous(self) -> bool:
        return not self.per_site_rho

    def density_at(self, site: Site) -> float:
        if self.per_site_rho:
            return self.per_site_rho.get(site, self.rho)
        return self.rho

    def density_grid(self, window: Window) -> np.ndarray:
        """Densities on every window site, in window array layout."""
        if self.homogeneous:
            return np.full(window.shape, self.rho)
        coords = window.coordinates()
        values = np.array([self.density_at(tuple(int(c) for c in site)) for site in coords])
        return values.reshape(window.shape)


def _lattice_index(vectors: list[Site], d: int) -> int:
    """Index of the sublattice spanned by integer vectors (0 when they do not span R^d)."""
    minors = []
    for combo in combinations(vectors, d):
        det = round(np.linalg.det(np.array(combo, dtype=float)))
        if det:
            minors.append(abs(int(det)))
    return reduce(math.gcd, minors, 0)


class KernelSpec(BaseModel):
    """Single-particle jump law p(z) of a finite-range, symmetric, irreducible walk."""

    model_config = ConfigDict(frozen=True)

    dimension: int = Field(..., ge=1, description="Lattice dimension d")
    jump_law: tuple[tuple[Site, float], ...] = Field(..., description="(z, p(z)) pairs with p(z) > 0")

    @model_validator(mode="after")
    def check_law(self) -> "KernelSpec":
        law = dict(self.jump_law)
        if len(law) != len(self.jump_law):
            raise InvalidKernel("Jump law lists a displacement twice")
        if not law:
            raise InvalidKernel("Jump law is empty")
        for z, p in law.items():
            if len(z) != self.dimension:
                raise InvalidKernel(f"Displacement {z} does not have dimension {self.dimension}")
            if not any(z):
                raise InvalidKernel("Jump law must not charge the origin")
            if not (p > 0 and math.isfinite(p)):
                raise InvalidKernel(f"Jump probability at {z} must be positive, got {p}")
        total = sum(law.values())
        if abs(total - 1.0) > 1e-12:
            raise InvalidKernel(f"Jump law sums to {total}, expected 1")
        for z, p in law.items():
            mirror = tuple(-c for c in z)
            if abs(law.get(mirror, 0.0) - p) > 1e-12:
                raise InvalidKernel(f"Jump law is not symmetric at {z}")
        if _lattice_index(list(law), self.dimension) != 1:
            raise InvalidKernel("Jump law is not irreducible on Z^d")
        ordered = tuple(sorted(self.jump_law))
        if ordered != self.jump_law:
            object.__setattr__(self, "jump_law", ordered)
        return self

    @classmethod
    def nearest_neighbor(cls, dimension: int = 1) -> "KernelSpec":
        law = []
        for axis in range(dimension):
            for sign in (1, -1):
                z = [0] * dimension
                z[axis] = sign
                law.append((tuple(z), 1.0 / (2 * dimension)))
        return cls(dimension=dimension, jump_law=tuple(law))

    @classmethod
    def from_law(cls, law: dict[Site, float]) -> "KernelSpec":
        if not law:
            raise InvalidKernel("Jump law is empty")
        dims = {len(z) for z in law}
        if len(dims) != 1:
            raise InvalidKernel("Jump law mixes dimensions")
        return cls(dimension=dims.pop(), jump_law=tuple((tuple(z), float(p)) for z, p in law.items()))

    @classmethod
    def from_entries(cls, dimension: int, entries: Optional[list[list[float]]]) -> "KernelSpec":
        """Jump law from rows [z_1, ..., z_d, p(z)]; None selects nearest-neighbour jumps."""
        if entries is None:
            return cls.nearest_neighbor(dimension)
        law = {}
        for entry in entries:
            if len(entry) != dimension + 1:
                raise InvalidKernel(f"Jump entry {entry} needs {dimension} coordinates and a probability")
            if any(c != int(c) for c in entry[:-1]):
                raise InvalidKernel(f"Jump entry {entry} has a non-integer displacement")
            law[tuple(int(c) for c in entry[:-1])] = float(entry[-1])
        return cls.from_law(law)

    @property
    def range(self) -> int:
        """R: largest sup-norm of a displacement."""
        return max(max(abs(c) for c in z) for z, _ in self.jump_law)

    def displacements(self) -> np.ndarray:
        return np.array([z for z, _ in self.jump_law], dtype=np.int64)

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.jump_law], dtype=float)

    def covariance(self) -> np.ndarray:
        """Sigma = sum_z p(z) z z^T"""
        z = self.displacements().astype(float)
        return (z.T * self.probabilities()) @ z

    def positive_half(self) -> list[tuple[Site, float]]:
        """One displacement out of every pair {z, -z}: the edge directions."""
        return [(z, p) for z, p in self.jump_law if z > tuple(0 for _ in z)]

    def describe(self) -> str:
        law = ", ".join(f"{z}: {p:g}" for z, p in self.jump_law)
        return f"d={self.dimension} {{{law}}}"


def bump(r: np.ndarray) -> np.ndarray:
    """(1 - r^2)^3 on r < 1, zero outside: a C^2 bump with bump(0) = 1."""
    r = np.asarray(r, dtype=float)
    inside = np.clip(1.0 - r * r, 0.0, None)
    return inside**3


class TestFunction(BaseModel):
    """Compactly supported bump phi(u) = amplitude * bump(|u - center| / radius) on R^d."""

    __test__ = False

    model_config = ConfigDict(frozen=True, extra="forbid")

    center: tuple[float, ...] = Field(default=(0.0,), description="Centre of the bump")
    radius: float = Field(default=1.0, gt=0, description="Support radius of the bump")
    amplitude: float = Field(default=1.0, description="Peak value (0 gives phi = 0)")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def support_radius(self) -> float:
        """M such that phi(u) = 0 for |u| > M."""
        return float(np.linalg.norm(self.center)) + self.radius

    @property
    def l1_norm(self) -> float:
        d = self.dimension
        unit = beta(0.5 * d, 4.0) * math.pi ** (0.5 * d) / gamma(0.5 * d)
        return abs(self.amplitude) * self.radius**d * unit

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Evaluate on points u of shape (..., d)."""
        u = np.asarray(u, dtype=float)
        r = np.linalg.norm(u - np.asarray(self.center), axis=-1) / self.radius
        return self.amplitude * bump(r)

    def lattice(self, N: int) -> tuple[Site, np.ndarray]:
        """phi(x/N) on the smallest box of sites holding its support.

        Returns the lower corner of the box and the values laid out in C order.
        """
        if N < 1:
            raise InvalidParameter(f"Scale N must be >= 1, got {N}")
        lower = tuple(math.floor((c - self.radius) * N) for c in self.center)
        upper = tuple(math.ceil((c + self.radius) * N) for c in self.center)
        axes = [np.arange(lo, hi + 1) for lo, hi in zip(lower, upper)]
        grids = np.meshgrid(*axes, indexing="ij")
        points = np.stack(grids, axis=-1) / N
        return lower, self(points)


class DensityProfile(BaseModel):
    """rho(u) = base + amplitude * bump(|u - center| / radius): a slowly varying macroscopic profile."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base: float = Field(default=1.0, description="Density away from the bump")
    amplitude: float = Field(default=0.5, description="Height of the bump over the base")
    center: tuple[float, ...] = Field(default=(0.0,), description="Centre of the bump")
    radius: float = Field(default=1.0, gt=0, description="Bump radius")

    @model_validator(mode="after")
    def check_positive(self) -> "DensityProfile":
        if not (math.isfinite(self.base) and math.isfinite(self.amplitude)):
            raise NonPositiveDensity("Density profile parameters must be finite")
        if self.base <= 0 or self.base + min(self.amplitude, 0.0) <= 0:
            raise NonPositiveDensity(
                f"Profile with base {self.base} and amplitude {self.amplitude} is not strictly positive"
            )
        return self

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def constant(self) -> bool:
        return self.amplitude == 0

    @property
    def support_radius(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        r = np.linalg.norm(u - np.asarray(self.center), axis=-1) / self.radius
        return self.base + self.amplitude * bump(r)

    def on_window(self, window: Window, N: int) -> np.ndarray:
        """Lattice profile rho(x/N) on every window site, in window array layout."""
        if window.dimension != self.dimension:
            raise InvalidParameter("Profile and window dimensions differ")
        coords = window.coordinates() / N
        return self(coords).reshape(window.shape)


class SimConfig(BaseModel):
    """Monte Carlo run parameters."""

    model_config = ConfigDict(frozen=True)

    kernel: KernelSpec
    process: ProcessName = "irw"
    window_side: int = Field(..., ge=1, description="Torus side length")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed")
    replicas: int = Field(default=1, ge=1, description="Replica count")
    horizon: float = Field(default=0.0, ge=0, description="Final simulated time")

    @property
    def window(self) -> Window:
        return Window(self.window_side, self.kernel.dimension)
