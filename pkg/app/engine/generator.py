"""
Finite dual dynamics: k particles on a periodic box under independent walks (irw)
or symmetric exclusion (sep), their transition kernels and the kernel decay check.
"""

import logging
import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from typing import Optional, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import sparse
from scipy.special import pdtrc
from scipy.stats import poisson

from app.engine.fitting import fit_power_law
from app.engine.kernels import config_kernel, poisson_cutoff
from app.errors import (
    InsufficientGrid,
    InvalidParameter,
    NegativeTime,
    ParseError,
    StateSpaceTooLarge,
    SupportMismatch,
)
from app.models.configuration import DualConfig, Site, Window, wrap_config
from app.models.params import KernelSpec, ProcessName
from app.models.reports import DecayFit
from app.settings import MAX_DENSE_STATES, MAX_STATE_SPACE

logger = logging.getLogger(__name__)

State = tuple[Site, ...]


class GeneratorSpec(BaseModel):
    """Text form of a finite generator (TOML)::

        process = "sep"
        box = 32
        dimension = 1
        particles = 2
        jumps = [[1, 0.5], [-1, 0.5]]

    Each entry of `jumps` lists the displacement coordinates followed by its probability;
    omitting `jumps` selects nearest-neighbour jumps.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    process: ProcessName
    box: int = Field(..., ge=1, description="Side of the periodic box")
    dimension: int = Field(default=1, ge=1)
    particles: int = Field(..., ge=0, description="Number of dual particles k")
    jumps: Optional[list[list[float]]] = None

    def kernel(self) -> KernelSpec:
        return KernelSpec.from_entries(self.dimension, self.jumps)


@dataclass(frozen=True, eq=False)
class FiniteGenerator:
    """Rate matrix of k dual particles on a periodic box, states enumerated in lexicographic order."""

    process: str
    spec: KernelSpec
    side: int
    particles: int
    states: tuple[State, ...]
    rates: sparse.csr_matrix
    index: dict = field(repr=False)

    @classmethod
    def build(cls, process: str, spec: KernelSpec, side: int, particles: int) -> "FiniteGenerator":
        """Enumerate the states and assemble the sparse rate matrix.

        Raises:
            StateSpaceTooLarge: if the state count exceeds MAX_STATE_SPACE.
        """
        if process not in ("irw", "sep"):
            raise InvalidParameter(f"Unknown process {process!r}")
        if side <= 2 * spec.range:
            raise InvalidParameter(f"Box side {side} must exceed twice the jump range {spec.range}")
        window = Window(side, spec.dimension)
        volume = window.volume
        count = math.comb(volume, particles) if process == "sep" else math.comb(volume + particles - 1, particles)
        if count > MAX_STATE_SPACE:
            raise StateSpaceTooLarge(f"{count} states exceed the limit of {MAX_STATE_SPACE}")
        sites = [tuple(int(c) for c in row) for row in window.coordinates()]
        sites.sort()
        enumerate_states = combinations if process == "sep" else combinations_with_replacement
        states = tuple(enumerate_states(sites, particles))
        index = {state: i for i, state in enumerate(states)}

        rows, cols, vals = [], [], []
        for i, state in enumerate(states):
            occupied = {}
            for site in state:
                occupied[site] = occupied.get(site, 0) + 1
            for site, mult in occupied.items():
                for z, p in spec.jump_law:
                    target = window.wrap(tuple(a + b for a, b in zip(site, z)))
                    if target == site or (process == "sep" and target in occupied):
                        continue
                    moved = list(state)
                    moved.remove(site)
                    moved.append(target)
                    rows.append(i)
                    cols.append(index[tuple(sorted(moved))])
                    vals.append(mult * p)
        off = sparse.coo_matrix((vals, (rows, cols)), shape=(len(states), len(states))).tocsr()
        exits = np.asarray(off.sum(axis=1)).ravel()
        rates = (off - sparse.diags(exits)).tocsr()
        logger.info(f"Built {process} generator: {len(states)} states, box {side}^{spec.dimension}, k={particles}")
        return cls(process, spec, side, particles, states, rates, index)

    @classmethod
    def from_spec(cls, spec: GeneratorSpec) -> "FiniteGenerator":
        return cls.build(spec.process, spec.kernel(), spec.box, spec.particles)

    @classmethod
    def from_text(cls, text: str) -> "FiniteGenerator":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ParseError(f"Malformed generator description: {e}", 0)
        try:
            spec = GeneratorSpec(**data)
        except ValidationError as e:
            raise InvalidParameter(f"Invalid generator description: {e}")
        return cls.from_spec(spec)

    def to_text(self) -> str:
        jumps = ", ".join("[" + ", ".join([*(str(c) for c in z), repr(p)]) + "]" for z, p in self.spec.jump_law)
        return (
            f'process = "{self.process}"\n'
            f"box = {self.side}\n"
            f"dimension = {self.spec.dimension}\n"
            f"particles = {self.particles}\n"
            f"jumps = [{jumps}]\n"
        )

    @property
    def window(self) -> Window:
        return Window(self.side, self.spec.dimension)

    @property
    def size(self) -> int:
        return len(self.states)

    def index_of(self, xi: DualConfig) -> int:
        if xi.size != self.particles:
            raise InvalidParameter(f"Configuration has {xi.size} particles, generator has {self.particles}")
        state = wrap_config(xi, self.window).labeling().positions
        if state not in self.index:
            raise SupportMismatch(f"{xi} is not a state of the {self.process} generator")
        return self.index[state]

    def config_of(self, i: int) -> DualConfig:
        return DualConfig.from_sites(self.states[i])

    def uniformization_rate(self) -> float:
        return max(float(-self.rates.diagonal().min()), 1e-300)

    def reversible_weights(self) -> np.ndarray:
        """Uniform for sep, 1/prod xi_x! for irw."""
        if self.process == "sep":
            return np.ones(self.size)
        return np.array([1.0 / DualConfig.from_sites(s).factorial_weight() for s in self.states])


def finite_state_kernel(gen: FiniteGenerator, t: float) -> np.ndarray:
    """exp(t Q) by scaling and squaring of the uniformized series.

    With P = I + Q / L (L the largest exit rate) exp(tQ) = exp(tL (P - I)); the
    series sum_n e^{-tau} tau^n / n! P^n is summed at tau = tL / 2^s <= 1 and
    squared s times, so every intermediate matrix is stochastic.
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    if gen.size > MAX_DENSE_STATES:
        raise StateSpaceTooLarge(f"{gen.size} states exceed the dense limit {MAX_DENSE_STATES}; use transition_row")
    rate = gen.uniformization_rate()
    step = np.eye(gen.size) + gen.rates.toarray() / rate
    total_rate = t * rate
    squarings = max(0, math.ceil(math.log2(total_rate))) if total_rate > 1 else 0
    tau = total_rate / 2**squarings
    terms = poisson_cutoff(tau, 1e-17)
    weights = poisson.pmf(np.arange(terms + 1), tau)
    power = np.eye(gen.size)
    kernel = weights[0] * power
    for n in range(1, terms + 1):
        power = power @ step
        kernel += weights[n] * power
    for _ in range(squarings):
        kernel = kernel @ kernel
    kernel.flags.writeable = False
    return kernel


def transition_row(gen: FiniteGenerator, xi: DualConfig, t: float) -> np.ndarray:
    """Row xi of exp(tQ) by sparse uniformization; no dense matrix is formed."""
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    start = gen.index_of(xi)
    vector = np.zeros(gen.size)
    vector[start] = 1.0
    if t == 0:
        return vector
    rate = gen.uniformization_rate()
    transposed = (sparse.identity(gen.size, format="csr") + gen.rates / rate).T.tocsr()
    mean = rate * t
    terms = poisson_cutoff(mean)
    weights = poisson.pmf(np.arange(terms + 1), mean)
    row = weights[0] * vector
    for n in range(1, terms + 1):
        vector = transposed @ vector
        row += weights[n] * vector
    logger.debug(f"Row of {gen.process} kernel at t={t}: {terms} terms, tail {pdtrc(terms, mean):.2g}")
    return row


class TransitionSource(Protocol):
    """Anything that can report sup_xi' p_t(xi, xi')."""

    dimension: int

    def sup_row(self, xi: DualConfig, t: float) -> float: ...


class IRWTransitionSource:
    """Independent walkers on Z^d.

    The sup is taken over xi' whose sites lie within k*R + 1 of a site of xi,
    where the maximiser sits for walks started at xi.
    """

    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.dimension = spec.dimension

    def candidates(self, xi: DualConfig) -> list[Site]:
        reach = xi.size * self.spec.range + 1
        sites = set()
        for centre in xi.sites():
            grid = np.indices((2 * reach + 1,) * self.dimension).reshape(self.dimension, -1).T - reach
            sites.update(tuple(int(a + b) for a, b in zip(centre, offset)) for offset in grid)
        return sorted(sites)

    def sup_row(self, xi: DualConfig, t: float) -> float:
        sites = self.candidates(xi)
        return max(
            config_kernel(self.spec, t, xi, DualConfig.from_sites(combo))
            for combo in combinations_with_replacement(sites, xi.size)
        )


class FiniteStateTransitionSource:
    """A finite generator (e.g. symmetric exclusion on a large periodic box)."""

    def __init__(self, gen: FiniteGenerator):
        self.gen = gen
        self.dimension = gen.spec.dimension

    def sup_row(self, xi: DualConfig, t: float) -> float:
        return float(transition_row(self.gen, xi, t).max())


def decay_bound_check(source: TransitionSource, xi: DualConfig, t_grid: list[float]) -> DecayFit:
    """Fit log sup_xi' p_t(xi, xi') against log(1 + t).

    PASS when the slope is at most -||xi|| d / 2 + 0.15.

    Raises:
        InsufficientGrid: fewer than 4 times or a span below one decade.
    """
    times = sorted(float(t) for t in t_grid)
    if len(times) < 4:
        raise InsufficientGrid(f"Need at least 4 times, got {len(times)}")
    if times[0] <= 0 or times[-1] < 10 * times[0]:
        raise InsufficientGrid(f"Time grid {times[0]}..{times[-1]} must span at least one decade")
    sups = []
    for t in times:
        sup = source.sup_row(xi, t)
        logger.info(f"Decay check t={t}: sup p_t = {sup:.6g}")
        sups.append(sup)
    fit = fit_power_law([1.0 + t for t in times], sups)
    threshold = -xi.size * source.dimension / 2 + 0.15
    return DecayFit(
        t_grid=times,
        sups=sups,
        particles=xi.size,
        d=source.dimension,
        slope=fit.slope,
        residual=fit.residual,
        threshold=threshold,
        passed=fit.slope <= threshold,
    )


def exclusion_box_side(t_max: float) -> int:
    """Periodic box side >= 8 sqrt(t_max) + 20, keeping boundary effects off interior kernels."""
    return int(math.ceil(8 * math.sqrt(t_max) + 20))

