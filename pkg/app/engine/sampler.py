"""
Monte Carlo engine: Poisson product initial states, independent walkers and
symmetric exclusion on periodic windows, and the replica-parallel runner.

Every replica draws from its own counter-based stream keyed by (seed, replica),
so results do not depend on the worker count or on scheduling.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Optional, Sequence, TypeVar, Union

import numpy as np

from app.engine.kernels import config_kernel_row
from app.engine.orthopoly import duality_product
from app.errors import InvalidParameter, NegativeTime, NonPositiveDensity, NotHardcore, SupportMismatch
from app.models.configuration import (
    DualConfig,
    OccupationState,
    Site,
    Window,
    add_sites,
    move_particle,
    negate,
    wrap_config,
)
from app.models.local_function import LocalFunctionSpec
from app.models.params import KernelSpec, PolyParams, SimConfig
from app.models.reports import DualityCheck, MomentCheck
from app.models.tables import Trajectory
from app.settings import DEFAULT_THREADS

logger = logging.getLogger(__name__)

T = TypeVar("T")
ReplicaTask = Callable[[np.random.Generator, int], T]


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Philox stream for one replica, keyed by the master seed and the replica index."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replica,))))


def _run_chunk(task: ReplicaTask, seed: int, start: int, stop: int) -> list:
    return [task(replica_generator(seed, i), i) for i in range(start, stop)]


def run_replicas(task: ReplicaTask, replicas: int, seed: int, workers: Optional[int] = None) -> list:
    """Run task(rng, replica) for replica = 0..replicas-1 and return the results in replica order.

    With more than one worker the replicas are split into contiguous chunks run
    in a process pool; `task` must then be picklable.
    """
    if replicas < 1:
        raise InvalidParameter(f"Need at least one replica, got {replicas}")
    workers = DEFAULT_THREADS if workers is None else workers
    workers = max(1, min(int(workers), replicas))
    if workers == 1:
        return _run_chunk(task, seed, 0, replicas)
    bounds = np.linspace(0, replicas, workers + 1).astype(int)
    results: list = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, task, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        for future in futures:
            results.extend(future.result())
    return results


def z_score(estimate: float, stderr: float, target: float) -> float:
    if stderr > 0:
        return (estimate - target) / stderr
    return 0.0 if math.isclose(estimate, target, rel_tol=1e-9, abs_tol=1e-12) else math.inf


def sample_poisson_product(
    density: Union[PolyParams, np.ndarray], window: Window, rng: np.random.Generator
) -> OccupationState:
    """Independent eta_x ~ Poisson(rho(x)) on every window site.

    `density` is either a PolyParams or a density array in window layout.
    """
    if isinstance(density, PolyParams):
        grid = density.density_grid(window)
        meta = density.rho if density.homogeneous else grid
    else:
        grid = np.asarray(density, dtype=float)
        meta = grid
        if grid.shape != window.shape:
            raise InvalidParameter(f"Density array of shape {grid.shape} does not match the window")
    if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
        raise NonPositiveDensity("Every site density must be positive and finite")
    return OccupationState(window, rng.poisson(grid), meta)


def _neighbor_index(window: Window, z: Site) -> np.ndarray:
    """flat index of x + z (on the torus) for every flat site index x."""
    grid = np.arange(window.volume).reshape(window.shape)
    shifted = np.roll(grid, shift=tuple(-c for c in z), axis=tuple(range(window.dimension)))
    return shifted.ravel()


def evolve_irw(eta: OccupationState, t: float, spec: KernelSpec, rng: np.random.Generator) -> OccupationState:
    """Move every particle by an independent continuous-time walk for time t.

    Jumps by z happen at rate p(z) independently, so a particle's displacement is
    sum_z z * Poisson(t p(z)).
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    if t == 0 or eta.total == 0:
        return eta
    window = eta.window
    starts = np.repeat(window.coordinates(), eta.counts.ravel(), axis=0)
    jumps = rng.poisson(t * spec.probabilities(), size=(len(starts), len(spec.jump_law)))
    ends = starts + jumps @ spec.displacements()
    index = np.ravel_multi_index(tuple(((ends + window.offset) % window.side).T), window.shape)
    counts = np.bincount(index, minlength=window.volume).reshape(window.shape)
    return eta.with_counts(counts)


def evolve_sep(eta: OccupationState, t: float, spec: KernelSpec, rng: np.random.Generator) -> OccupationState:
    """Symmetric exclusion by the stirring construction: every edge {x, x+z} swaps its contents at rate p(z)."""
    if np.any(eta.counts > 1):
        raise NotHardcore("Exclusion needs at most one particle per site")
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    if t == 0 or eta.total == 0:
        return eta
    window = eta.window
    half = spec.positive_half()
    rates = np.array([p for _, p in half])
    events = int(rng.poisson(window.volume * rates.sum() * t))
    sites = rng.integers(window.volume, size=events)
    directions = rng.choice(len(half), size=events, p=rates / rates.sum())
    neighbors = [_neighbor_index(window, z) for z, _ in half]
    occupation = eta.counts.ravel().copy()
    for site, direction in zip(sites, directions):
        other = neighbors[direction][site]
        occupation[site], occupation[other] = occupation[other], occupation[site]
    return eta.with_counts(occupation.reshape(window.shape))


EVOLVERS = {"irw": evolve_irw, "sep": evolve_sep}


def simulate_trajectory(
    eta: OccupationState,
    times: Sequence[float],
    spec: KernelSpec,
    process: str,
    rng: np.random.Generator,
    seed: Optional[int] = None,
    replica: Optional[int] = None,
) -> Trajectory:
    """Snapshots of the process started from eta at the requested times."""
    if process not in EVOLVERS:
        raise InvalidParameter(f"Unknown process {process!r}")
    evolve = EVOLVERS[process]
    clock = 0.0
    current = eta
    snapshots = []
    for t in times:
        if t < clock or (snapshots and t == clock):
            raise InvalidParameter("Observation times must be non-negative and strictly increasing")
        current = evolve(current, t - clock, spec, rng)
        clock = t
        snapshots.append((float(t), current))
    return Trajectory(tuple(snapshots), seed=seed, replica=replica, process=process)


def sample_initial_state(
    params: PolyParams, window: Window, process: str, rng: np.random.Generator
) -> OccupationState:
    """Poisson product for independent walkers, Bernoulli product for exclusion."""
    if process != "sep":
        return sample_poisson_product(params, window, rng)
    grid = params.density_grid(window)
    if np.any(grid > 1):
        raise InvalidParameter("Exclusion needs site densities at most 1")
    meta = params.rho if params.homogeneous else grid
    return OccupationState(window, (rng.random(window.shape) < grid).astype(np.int64), meta)


def _trajectory_sample(
    rng: np.random.Generator, replica: int, sim: SimConfig, params: PolyParams, times: tuple[float, ...]
) -> Trajectory:
    start = sample_initial_state(params, sim.window, sim.process, rng)
    return simulate_trajectory(start, times, sim.kernel, sim.process, rng, seed=sim.seed, replica=replica)


def simulate_replicas(
    sim: SimConfig, params: PolyParams, times: Sequence[float], workers: Optional[int] = None
) -> list[Trajectory]:
    """One trajectory per replica, each started from its own product-measure draw."""
    if not times or max(times) > sim.horizon:
        raise InvalidParameter(f"Observation times must be non-empty and end by the horizon {sim.horizon}")
    task = partial(_trajectory_sample, sim=sim, params=params, times=tuple(float(t) for t in times))
    trajectories = run_replicas(task, sim.replicas, sim.seed, workers)
    logger.info(f"Simulated {len(trajectories)} {sim.process} trajectories on a side-{sim.window_side} window")
    return trajectories


def generator_apply(f: LocalFunctionSpec, eta: OccupationState, spec: KernelSpec, process: str = "irw") -> float:
    """(L f)(eta) = sum_{i,j} p(j - i) eta_i (f(eta^{ij}) - f(eta)), with the factor (1 - eta_j) for exclusion."""
    support = f.support
    if not support:
        return 0.0
    law = dict(spec.jump_law)
    pairs = set()
    for site in support:
        for z in law:
            pairs.add((site, add_sites(site, z)))
            pairs.add((add_sites(site, negate(z)), site))
    for i, j in pairs:
        if not (eta.window.contains(i) and eta.window.contains(j)):
            raise SupportMismatch(f"Jump {i} -> {j} leaves the window interior")
    base = f(eta)
    total = 0.0
    for i, j in sorted(pairs):
        occupied = eta[i]
        if occupied == 0 or (process == "sep" and eta[j] > 0):
            continue
        z = tuple(b - a for a, b in zip(i, j))
        total += law[z] * occupied * (f(move_particle(eta, i, j)) - base)
    return total


def _duality_sample(
    rng: np.random.Generator, replica: int, *, xi: DualConfig, eta: OccupationState, t: float,
    spec: KernelSpec, params: PolyParams,
) -> float:
    return duality_product(xi, evolve_irw(eta, t, spec, rng), params)


def duality_check(
    xi: DualConfig,
    eta: OccupationState,
    t: float,
    spec: KernelSpec,
    params: PolyParams,
    replicas: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> DualityCheck:
    """Monte Carlo E_eta[D(xi, eta_t)] against sum_xi' p_t(xi, xi') D(xi', eta).

    The right side folds xi' onto the torus, which is exact for independent walkers there.
    """
    for site in xi.sites():
        if not eta.window.contains(site):
            raise SupportMismatch(f"Dual site {site} lies outside the window")
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    row = config_kernel_row(spec, t, xi)
    rhs = math.fsum(p * duality_product(wrap_config(xi2, eta.window), eta, params) for xi2, p in row.items())
    task = partial(_duality_sample, xi=xi, eta=eta, t=t, spec=spec, params=params)
    values = np.array(run_replicas(task, replicas, seed, workers))
    lhs = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    score = z_score(lhs, stderr, rhs)
    logger.info(f"Duality check xi={xi} t={t}: lhs={lhs:.6g} rhs={rhs:.6g} z={score:.3g}")
    return DualityCheck(
        xi=str(xi), t=t, lhs=lhs, rhs=rhs, stderr=stderr, z_score=score, replicas=replicas, seed=seed
    )


def falling_factorial(samples: np.ndarray, order: int) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    out = np.ones_like(samples)
    for j in range(order):
        out = out * (samples - j)
    return out


def poisson_moment_check(samples, rho: float, orders: Sequence[int] = (1, 2, 3)) -> list[MomentCheck]:
    """Factorial moments E[(eta)_j] of the samples against rho^j, with z-scores."""
    samples = np.asarray(samples)
    if samples.size < 2:
        raise InvalidParameter("Need at least two samples")
    checks = []
    for order in orders:
        values = falling_factorial(samples, order)
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(values.size))
        expected = rho**order
        checks.append(
            MomentCheck(order=order, mean=mean, stderr=stderr, expected=expected, z_score=z_score(mean, stderr, expected))
        )
    return checks
