"""
Lattice configurations, dual configurations and coordinate vectors.

Sites are plain integer tuples. Dual configurations and coordinate vectors are
immutable values and can be handed to worker processes as they are.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

import numpy as np

from app.errors import EmptySite, InvalidParameter, SiteOverflow, SupportMismatch

Site = tuple[int, ...]

INT64_MAX = 2**63 - 1
INT64_MIN = -(2**63)


def make_site(coords: Union[int, Iterable[int]]) -> Site:
    """Normalize an int or an iterable of ints into a checked Site."""
    if isinstance(coords, (int, np.integer)):
        coords = (coords,)
    site = tuple(int(c) for c in coords)
    if not site:
        raise InvalidParameter("A site needs at least one coordinate")
    for c in site:
        if c > INT64_MAX or c < INT64_MIN:
            raise SiteOverflow(f"Coordinate {c} leaves the signed 64-bit range")
    return site


def add_sites(a: Site, b: Site) -> Site:
    if len(a) != len(b):
        raise InvalidParameter(f"Dimension mismatch between {a} and {b}")
    return make_site(x + y for x, y in zip(a, b))


def negate(site: Site) -> Site:
    return make_site(-c for c in site)


@dataclass(frozen=True)
class DualConfig:
    """Finite multiset of lattice sites (a dual configuration).

    `occupancy` holds (site, multiplicity) pairs sorted by site with every
    multiplicity >= 1, so equal configurations compare and hash equal.
    """

    occupancy: tuple[tuple[Site, int], ...] = ()

    def __post_init__(self):
        dims = {len(site) for site, _ in self.occupancy}
        if len(dims) > 1:
            raise InvalidParameter(f"Mixed dimensions in dual configuration: {sorted(dims)}")
        for site, mult in self.occupancy:
            if mult < 1:
                raise InvalidParameter(f"Multiplicity {mult} at {site} must be >= 1")
        ordered = tuple(sorted(self.occupancy))
        if ordered != self.occupancy:
            object.__setattr__(self, "occupancy", ordered)

    @classmethod
    def from_mapping(cls, mapping: Mapping[Site, int]) -> "DualConfig":
        """Configuration with multiplicity m at each site; every m must be a positive integer."""
        occupancy = []
        for s, m in mapping.items():
            if int(m) != m or m < 1:
                raise InvalidParameter(f"Multiplicity {m} at {s} must be a positive integer")
            occupancy.append((make_site(s), int(m)))
        return cls(tuple(occupancy))

    @classmethod
    def from_sites(cls, sites: Iterable[Union[int, Iterable[int]]]) -> "DualConfig":
        return cls.from_mapping(Counter(make_site(s) for s in sites))

    @property
    def size(self) -> int:
        """Total particle count ||xi||."""
        return sum(m for _, m in self.occupancy)

    @property
    def dimension(self) -> Optional[int]:
        return len(self.occupancy[0][0]) if self.occupancy else None

    def __getitem__(self, site: Site) -> int:
        for s, m in self.occupancy:
            if s == site:
                return m
        return 0

    def __iter__(self) -> Iterator[tuple[Site, int]]:
        return iter(self.occupancy)

    def __len__(self) -> int:
        return len(self.occupancy)

    def sites(self) -> list[Site]:
        return [s for s, _ in self.occupancy]

    def labeling(self) -> "CoordVector":
        """Canonical labeled representative (sites in sorted order)."""
        return CoordVector(tuple(s for s, m in self.occupancy for _ in range(m)))

    def factorial_weight(self) -> int:
        """prod_x xi_x!"""
        return math.prod(math.factorial(m) for _, m in self.occupancy)

    def __str__(self) -> str:
        if not self.occupancy:
            return "{}"
        parts = []
        for site, mult in self.occupancy:
            label = ",".join(str(c) for c in site)
            parts.append(f"{mult}@({label})" if mult > 1 else f"({label})")
        return "+".join(parts)


@dataclass(frozen=True)
class CoordVector:
    """Ordered tuple of k sites: the labeled-particle representation."""

    positions: tuple[Site, ...] = ()

    def __post_init__(self):
        positions = tuple(make_site(p) for p in self.positions)
        if len({len(p) for p in positions}) > 1:
            raise InvalidParameter("All positions of a coordinate vector must share one dimension")
        object.__setattr__(self, "positions", positions)

    @classmethod
    def of(cls, *positions: Union[int, Iterable[int]]) -> "CoordVector":
        return cls(tuple(make_site(p) for p in positions))

    @property
    def k(self) -> int:
        return len(self.positions)

    @property
    def dimension(self) -> Optional[int]:
        return len(self.positions[0]) if self.positions else None

    def __len__(self) -> int:
        return len(self.positions)

    def __iter__(self) -> Iterator[Site]:
        return iter(self.positions)

    def __getitem__(self, i: int) -> Site:
        return self.positions[i]


def coord_to_config(x: CoordVector) -> DualConfig:
    """The configuration associated to a coordinate vector."""
    return DualConfig.from_mapping(Counter(x.positions))


def shift(obj: Union[DualConfig, CoordVector], z: Site) -> Union[DualConfig, CoordVector]:
    """Translate a configuration (tau_z) or a coordinate vector (hat tau_z) by z."""
    z = make_site(z)
    if isinstance(obj, CoordVector):
        return CoordVector(tuple(add_sites(p, z) for p in obj.positions))
    if isinstance(obj, DualConfig):
        return DualConfig(tuple((add_sites(s, z), m) for s, m in obj.occupancy))
    raise InvalidParameter(f"Cannot shift object of type {type(obj).__name__}")


def permutation_classes(x: CoordVector) -> list[CoordVector]:
    """One representative x^(sigma) per class of permutations modulo coincident coordinates.

    Distinct orderings are generated in lexicographic order from the sorted
    multiset, so the cost is proportional to k!/prod xi_i! rather than k!.
    """
    if x.k < 1:
        raise InvalidParameter("permutation_classes needs at least one particle")
    current = sorted(x.positions)
    classes = [CoordVector(tuple(current))]
    while True:
        i = len(current) - 2
        while i >= 0 and current[i] >= current[i + 1]:
            i -= 1
        if i < 0:
            return classes
        j = len(current) - 1
        while current[j] <= current[i]:
            j -= 1
        current[i], current[j] = current[j], current[i]
        current[i + 1:] = reversed(current[i + 1:])
        classes.append(CoordVector(tuple(current)))


def class_count(x: CoordVector) -> int:
    """|P_k(x)| = k! / prod_i xi_i(x)!"""
    return math.factorial(x.k) // coord_to_config(x).factorial_weight()


@dataclass(frozen=True)
class Window:
    """Periodic box of `side` sites per dimension with centred coordinates.

    Coordinate c maps to array index c + side // 2, so the box covers
    [-side//2, side - side//2 - 1] in every direction.
    """

    side: int
    dimension: int = 1

    def __post_init__(self):
        if self.side < 1 or self.dimension < 1:
            raise InvalidParameter(f"Invalid window side={self.side}, dimension={self.dimension}")

    @property
    def offset(self) -> int:
        return self.side // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dimension

    @property
    def volume(self) -> int:
        return self.side**self.dimension

    def contains(self, site: Site) -> bool:
        lo, hi = -self.offset, self.side - self.offset - 1
        return len(site) == self.dimension and all(lo <= c <= hi for c in site)

    def wrap(self, site: Site) -> Site:
        return tuple(((c + self.offset) % self.side) - self.offset for c in site)

    def index(self, site: Site) -> tuple[int, ...]:
        return tuple((c + self.offset) % self.side for c in site)

    def coordinates(self) -> np.ndarray:
        """Array of shape (volume, dimension) with the coordinates of every site in C order."""
        axes = [np.arange(self.side) - self.offset] * self.dimension
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def required_window_side(support_radius: float, N: int, kernel_range: int, buffer: int) -> int:
    """Window side >= 2 * (support radius * N + kernel range + diffusive buffer)."""
    return 2 * (int(math.ceil(support_radius * N)) + int(kernel_range) + int(buffer)) + 1


def wrap_config(xi: DualConfig, window: Window) -> DualConfig:
    """Fold every site of xi onto the torus, merging multiplicities."""
    folded: Counter = Counter()
    for site, mult in xi:
        folded[window.wrap(site)] += mult
    return DualConfig.from_mapping(folded)


@dataclass(frozen=True, eq=False)
class OccupationState:
    """Occupation numbers eta_x on a periodic window plus density metadata."""

    window: Window
    counts: np.ndarray
    density_meta: Union[float, np.ndarray, None] = field(default=None)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.shape != self.window.shape:
            raise InvalidParameter(f"Counts shape {counts.shape} does not match window {self.window.shape}")
        if np.any(counts < 0):
            raise InvalidParameter("Occupation numbers must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, window: Window, density_meta=None) -> "OccupationState":
        return cls(window, np.zeros(window.shape, dtype=np.int64), density_meta)

    @classmethod
    def from_mapping(cls, window: Window, mapping: Mapping[Site, int], density_meta=None) -> "OccupationState":
        counts = np.zeros(window.shape, dtype=np.int64)
        for site, n in mapping.items():
            site = make_site(site)
            if not window.contains(site):
                raise SupportMismatch(f"Site {site} lies outside the window")
            counts[window.index(site)] = n
        return cls(window, counts, density_meta)

    def __getitem__(self, site: Site) -> int:
        return int(self.counts[self.window.index(make_site(site))])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def with_counts(self, counts: np.ndarray) -> "OccupationState":
        return OccupationState(self.window, counts, self.density_meta)


def move_particle(eta: OccupationState, i: Site, j: Site) -> OccupationState:
    """eta^{ij}: remove a particle from i and put it at j.

    Raises:
        SupportMismatch: if i or j lies outside the window.
        EmptySite: if there is no particle at i.
    """
    i, j = make_site(i), make_site(j)
    for site in (i, j):
        if not eta.window.contains(site):
            raise SupportMismatch(f"Site {site} lies outside the window")
    ii, jj = eta.window.index(i), eta.window.index(j)
    if eta.counts[ii] < 1:
        raise EmptySite(f"No particle to move at site {i}")
    counts = eta.counts.copy()
    counts[ii] -= 1
    counts[jj] += 1
    return eta.with_counts(counts)
