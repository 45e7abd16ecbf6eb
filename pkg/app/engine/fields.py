"""
Fluctuation fields of duality polynomials and their covariances.

A field X_N(f, eta) = a_N sum_x phi(x/N) tau_x f(eta) is evaluated on a periodic
window for Monte Carlo work. Exact covariances are lattice sums on Z^d:
for fields built on xi and xi' the covariance at lag t is

    sum_{y,z} phi(y/N) phi(z/N) p_t(tau_y xi, tau_z xi') a(xi'),

and since the kernel only depends on z - y it collapses to a sum over w of the
correlation of phi with itself times sum_sigma prod_i p_t(w + x'_sigma(i) - x_i).
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, signal

from app.engine.fitting import fit_power_law
from app.engine.kernels import config_kernel, heat_evolve_profile, rw_kernel, tail_radius
from app.engine.orthopoly import (
    charlier_values,
    check_expansion_condition,
    duality_product,
    monic_duality_product,
    monic_norm,
    norm_a,
    orthogonality_oracle,
    residual,
)
from app.engine.sampler import (
    evolve_irw,
    poisson_moment_check,
    run_replicas,
    sample_poisson_product,
    z_score,
)
from app.errors import (
    ConditionViolated,
    InsufficientGrid,
    InvalidParameter,
    NegativeTime,
    NonPositiveTime,
    QuadratureFailure,
    WindowTooSmall,
)
from app.models.configuration import (
    CoordVector,
    DualConfig,
    OccupationState,
    Site,
    Window,
    class_count,
    coord_to_config,
    permutation_classes,
    required_window_side,
)
from app.models.local_function import BasisExpansion
from app.models.params import DensityProfile, KernelSpec, PolyParams, TestFunction
from app.models.reports import (
    CovarianceReport,
    DualityCheck,
    RateFit,
    ScalingReport,
    ScalingRow,
    SiteMoments,
)
from app.models.tables import KernelTable
from app.settings import MAX_LATTICE_RADIUS

logger = logging.getLogger(__name__)

FieldTarget = Union[CoordVector, DualConfig, BasisExpansion]

# Kernel mass allowed to wrap around the window in Monte Carlo runs
WINDOW_TAIL = 1e-10

# Relative agreement required between the two quadrature orders
LIMIT_QUADRATURE_TOL = 1e-3
BG_QUADRATURE_TOL = 1e-6

EXPONENT_MARGIN = 0.15


def exponent_for(k: int, d: int) -> float:
    """alpha = 2(k-1)d / (2 + (k-1)d): decay exponent of the Boltzmann-Gibbs double integral."""
    return 2 * (k - 1) * d / (2 + (k - 1) * d)


def as_coord_vector(target: Union[CoordVector, DualConfig]) -> CoordVector:
    if isinstance(target, CoordVector):
        return target
    return target.labeling()


def describe_target(target: FieldTarget) -> str:
    if isinstance(target, CoordVector):
        return "x=" + ";".join("(" + ",".join(str(c) for c in site) + ")" for site in target)
    if isinstance(target, DualConfig):
        return f"xi={target}"
    return f"expansion[degree={target.degree},rho={target.rho:g},terms={len(target)}]"


def field_order(target: FieldTarget) -> int:
    if isinstance(target, CoordVector):
        return target.k
    if isinstance(target, DualConfig):
        return target.size
    return target.degree


def _translated_duality(xi: DualConfig, counts: np.ndarray, density: np.ndarray) -> np.ndarray:
    """D(tau_x xi, eta) for every window site x at once."""
    axes = tuple(range(counts.ndim))
    values = np.ones(counts.shape)
    for site, mult in xi:
        shift = tuple(-c for c in site)
        values *= charlier_values(mult, np.roll(counts, shift, axes), np.roll(density, shift, axes))
    return values


def _field_weights(phi: TestFunction, N: int, window: Window, reach: Sequence[Site]) -> np.ndarray:
    """phi(x/N) laid out on the window; every x + s (s in reach) must stay inside it."""
    if phi.dimension != window.dimension:
        raise InvalidParameter(f"Test function lives in d={phi.dimension}, window in d={window.dimension}")
    lower, values = phi.lattice(N)
    weights = np.zeros(window.shape)
    nonzero = values != 0
    if not nonzero.any():
        return weights
    coords = np.argwhere(nonzero) + np.asarray(lower)
    lo, hi = -window.offset, window.side - window.offset - 1
    for s in [(0,) * window.dimension, *reach]:
        shifted = coords + np.asarray(s)
        if shifted.min() < lo or shifted.max() > hi:
            raise WindowTooSmall(f"Window of side {window.side} does not hold supp phi at scale N={N}")
    weights[tuple((coords + window.offset).T)] = values[nonzero]
    return weights


@dataclass(frozen=True, eq=False)
class FieldPlan:
    """A fluctuation field prepared on a window: weights phi(x/N), duality terms and normalization."""

    window: Window
    weights: np.ndarray
    terms: tuple[tuple[DualConfig, float], ...]
    density: np.ndarray
    scale: float = 1.0
    constant: float = 0.0

    def __call__(self, eta: OccupationState) -> float:
        if eta.window != self.window:
            raise InvalidParameter("Occupation state lives on a different window")
        if not self.weights.any():
            return 0.0
        total = np.zeros(self.window.shape)
        for xi, c in self.terms:
            total += c * _translated_duality(xi, eta.counts, self.density)
        return self.scale * (float(np.sum(self.weights * total)) + self.constant * float(self.weights.sum()))


def build_field_plan(
    target: FieldTarget, phi: TestFunction, N: int, window: Window, params: PolyParams, centering: bool = True
) -> FieldPlan:
    """Prepare X_N on `window`.

    Expansions are centred by dropping their constant term psi_f(rho) and carry
    a_N = N^{-d/2} when they are of degree one; duality polynomials are already
    mean zero and are never rescaled.
    """
    if isinstance(target, BasisExpansion):
        terms = tuple((xi, c) for xi, c in target if xi.size > 0)
        constant = 0.0 if centering else target.constant_term
        scale = N ** (-window.dimension / 2) if target.degree == 1 else 1.0
        density = np.full(window.shape, target.rho)
    else:
        terms = ((coord_to_config(as_coord_vector(target)), 1.0),)
        constant, scale = 0.0, 1.0
        density = params.density_grid(window)
    reach = sorted({site for xi, _ in terms for site in xi.sites()})
    weights = _field_weights(phi, N, window, reach)
    return FieldPlan(window, weights, terms, density, scale, constant)


def fluct_field(
    f: FieldTarget,
    eta: OccupationState,
    phi: TestFunction,
    N: int,
    params: Optional[PolyParams] = None,
    centering: bool = True,
) -> float:
    """X_N(f, eta) = a_N sum_x phi(x/N) (tau_x f(eta) - psi_f(rho)).

    Expansions use their own density; duality polynomials take it from `params`
    (or from the state's density metadata when that is a scalar).
    """
    if params is None:
        if isinstance(f, BasisExpansion):
            params = PolyParams(rho=f.rho)
        elif isinstance(eta.density_meta, (int, float)):
            params = PolyParams(rho=float(eta.density_meta))
        else:
            raise InvalidParameter("Duality fields need the polynomial density")
    return build_field_plan(f, phi, N, eta.window, params, centering)(eta)


def _correlation(phi: TestFunction, N: int, weight: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_y phi(y/N) h(y + w) over lattice displacements w, centred in the output array.

    h is phi(./N) itself or phi(./N) times `weight` on the same box.
    """
    lower, values = phi.lattice(N)
    if max(values.shape) > MAX_LATTICE_RADIUS:
        raise WindowTooSmall(f"Support of phi at scale N={N} exceeds the lattice limit {MAX_LATTICE_RADIUS}")
    left = values if weight is None else values * weight
    return signal.correlate(left, values, mode="full")


def _pair_sum(x: CoordVector, x2: CoordVector, table: KernelTable, corr: np.ndarray) -> float:
    """sum_w corr(w) sum_sigma prod_i p_t(w + x2_sigma(i) - x_i)"""
    if x.k != x2.k:
        return 0.0
    d = corr.ndim
    centre = (np.array(corr.shape) - 1) // 2
    w = np.indices(corr.shape).reshape(d, -1).T - centre
    weights = corr.ravel()
    keep = weights != 0
    w, weights = w[keep], weights[keep]
    total = 0.0
    for y in permutation_classes(x2):
        product = np.ones(len(w))
        for a, b in zip(x, y):
            product *= table.values_at(w + np.subtract(b, a))
        total += float(weights @ product)
    return total


def _expansion_pair_sum(f: BasisExpansion, table: KernelTable, corr: np.ndarray) -> float:
    """sum over same-degree pairs of C_xi C_xi' a(xi') times the pair sum; other degrees are orthogonal."""
    params = PolyParams(rho=f.rho)
    total = 0.0
    for n in sorted({xi.size for xi, _ in f if xi.size > 0}):
        layer = f.by_degree(n)
        for xi, c in layer:
            for xi2, c2 in layer:
                total += c * c2 * norm_a(xi2, params) * _pair_sum(xi.labeling(), xi2.labeling(), table, corr)
    return total


def _require_homogeneous(params: PolyParams) -> None:
    if not params.homogeneous:
        raise InvalidParameter("Stationary covariances need a homogeneous density")


def exact_stationary_covariance(
    x: Union[CoordVector, DualConfig], phi: TestFunction, N: int, t: float, spec: KernelSpec, params: PolyParams
) -> float:
    """a(xi(x)) sum_sigma sum_{y,z} phi(y/N) phi(z/N) p_t(x + y, x_sigma + z).

    `t` is the microscopic lag (already N^2 times the macroscopic one).
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    _require_homogeneous(params)
    x = as_coord_vector(x)
    if phi.amplitude == 0:
        return 0.0
    corr = _correlation(phi, N)
    return norm_a(coord_to_config(x), params) * _pair_sum(x, x, rw_kernel(spec, t), corr)


def projection_field_covariance(
    f: BasisExpansion, k: int, phi: TestFunction, N: int, t: float, spec: KernelSpec
) -> float:
    """Covariance at lag N^2 t of the field of f - f_{k-1}.

    Raises:
        ConditionViolated: if sum |C_xi C_xi'| a(xi') over equal degrees is not finite.
    """
    if k < 2:
        raise InvalidParameter(f"Projection fields need k >= 2, got {k}")
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    part = residual(f, k - 1)
    condition = check_expansion_condition(part, PolyParams(rho=f.rho))
    if not math.isfinite(condition):
        raise ConditionViolated(f"Expansion condition sum is {condition}")
    if not len(part) or phi.amplitude == 0:
        return 0.0
    return _expansion_pair_sum(part, rw_kernel(spec, N * N * t), _correlation(phi, N))


def _exact_field_covariance(target: FieldTarget, phi: TestFunction, N: int, tau: float, spec: KernelSpec,
                            params: PolyParams) -> float:
    if isinstance(target, BasisExpansion):
        part = residual(target, 0)
        if not len(part) or phi.amplitude == 0:
            return 0.0
        scale = N ** (-spec.dimension) if target.degree == 1 else 1.0
        return scale * _expansion_pair_sum(part, rw_kernel(spec, tau), _correlation(phi, N))
    return exact_stationary_covariance(target, phi, N, tau, spec, params)


def _covariance_sample(rng: np.random.Generator, replica: int, *, plan: FieldPlan, tau: float,
                       spec: KernelSpec) -> float:
    eta = sample_poisson_product(plan.density, plan.window, rng)
    start = plan(eta)
    return plan(evolve_irw(eta, tau, spec, rng)) * start


def mc_window(phi: TestFunction, N: int, spec: KernelSpec, tau: float, reach: int = 0) -> Window:
    """Torus large enough that supp phi, the dual sites and the kernel tail do not wrap."""
    buffer = tail_radius(rw_kernel(spec, tau), WINDOW_TAIL)
    return Window(required_window_side(phi.support_radius, N, spec.range + reach, buffer), spec.dimension)


def _reach(target: FieldTarget) -> int:
    if isinstance(target, BasisExpansion):
        sites = [s for xi, _ in target for s in xi.sites()]
    else:
        sites = list(as_coord_vector(target))
    return max((abs(c) for s in sites for c in s), default=0)


def mc_covariance(
    target: FieldTarget,
    phi: TestFunction,
    N: int,
    t: float,
    spec: KernelSpec,
    params: PolyParams,
    replicas: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> CovarianceReport:
    """Monte Carlo E[X_N(t) X_N(0)] with eta(0) ~ nu_rho evolved for N^2 t, against the exact lattice sum."""
    if replicas < 2:
        raise InvalidParameter(f"Need at least two replicas, got {replicas}")
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    _require_homogeneous(params)
    tau = N * N * t
    window = mc_window(phi, N, spec, tau, _reach(target))
    plan = build_field_plan(target, phi, N, window, params)
    descriptor = describe_target(target)
    logger.info(f"MC covariance {descriptor} N={N} t={t}: window {window.side}^{window.dimension}, {replicas} replicas")
    values = np.array(run_replicas(partial(_covariance_sample, plan=plan, tau=tau, spec=spec), replicas, seed, workers))
    value = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(replicas))
    exact = _exact_field_covariance(target, phi, N, tau, spec, params)
    return CovarianceReport(
        field_descriptor=descriptor,
        method="monte-carlo",
        value=value,
        stderr=stderr,
        N=N,
        seed=seed,
        replicas=replicas,
        t=t,
        k=field_order(target),
        exact=exact,
        z_score=z_score(value, stderr, exact),
    )


def _gaussian_terms(spec: KernelSpec, t: float, k: int) -> tuple[np.ndarray, float]:
    """Precision matrix and normalization of G_t^k with G_t the Gaussian density of covariance t Sigma."""
    sigma = spec.covariance()
    norm = float(np.linalg.det(2 * math.pi * t * sigma)) ** (-k / 2)
    return np.linalg.inv(sigma), norm


def _tensor_overlap(phi: TestFunction, precision: np.ndarray, norm: float, t: float, k: int,
                    weight: Optional[Callable], order: int) -> float:
    nodes, node_weights = leggauss(order)
    axes = [c + phi.radius * nodes for c in phi.center]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weight_grids = np.meshgrid(*([phi.radius * node_weights] * len(axes)), indexing="ij")
    quad = np.prod(np.stack([g.ravel() for g in weight_grids], axis=1), axis=1)
    left = phi(points) * quad
    right = left * weight(points) if weight is not None else left
    forms = np.einsum("ni,ij,nj->n", points, precision, points)
    cross = points @ precision
    total = 0.0
    for start in range(0, len(points), 2048):
        block = slice(start, start + 2048)
        q = forms[block, None] + forms[None, :] - 2.0 * cross[block] @ points.T
        total += float(left[block] @ (np.exp(-k * q / (2 * t)) @ right))
    return norm * total


def gaussian_overlap(phi: TestFunction, spec: KernelSpec, t: float, k: int,
                     weight: Optional[Callable] = None) -> float:
    """int int phi(y) phi(z) w(z) G_t(z - y)^k dy dz.

    d = 1 uses adaptive quadrature; higher dimensions compare two tensor
    Gauss-Legendre rules over the support box.

    Raises:
        QuadratureFailure: if the error estimate or the two rules disagree.
    """
    if t <= 0:
        raise NonPositiveTime(f"Time must be positive, got {t}")
    if phi.dimension != spec.dimension:
        raise InvalidParameter("Test function and jump law dimensions differ")
    if phi.amplitude == 0:
        return 0.0
    precision, norm = _gaussian_terms(spec, t, k)
    if spec.dimension == 1:
        lo, hi = phi.center[0] - phi.radius, phi.center[0] + phi.radius
        p = float(precision[0, 0])

        def integrand(z: float, y: float) -> float:
            value = float(phi(np.array([y]))) * float(phi(np.array([z])))
            if weight is not None:
                value *= float(weight(np.array([z])))
            return value * norm * math.exp(-k * p * (z - y) ** 2 / (2 * t))

        value, error = integrate.dblquad(integrand, lo, hi, lo, hi, epsabs=1e-13, epsrel=1e-9)
        if not math.isfinite(value) or error > max(1e-6 * abs(value), 1e-12):
            raise QuadratureFailure(f"Limit integral {value:.6g} has error estimate {error:.3g}")
        return value
    coarse, fine = (32, 48) if spec.dimension == 2 else (16, 24)
    rough = _tensor_overlap(phi, precision, norm, t, k, weight, coarse)
    value = _tensor_overlap(phi, precision, norm, t, k, weight, fine)
    if not math.isfinite(value) or abs(rough - value) > LIMIT_QUADRATURE_TOL * abs(value) + 1e-14:
        raise QuadratureFailure(f"Gauss-Legendre orders {coarse} and {fine} disagree: {rough:.8g} vs {value:.8g}")
    return value


def stationary_limit(x: Union[CoordVector, DualConfig], phi: TestFunction, t: float, spec: KernelSpec,
                     params: PolyParams) -> float:
    """|P_k(x)| a(xi(x)) int int phi(y) phi(z) G_t(z - y)^k dy dz"""
    _require_homogeneous(params)
    x = as_coord_vector(x)
    return class_count(x) * norm_a(coord_to_config(x), params) * gaussian_overlap(phi, spec, t, x.k)


def _check_n_grid(N_grid: Sequence[int]) -> list[int]:
    grid = [int(n) for n in N_grid]
    if not grid:
        raise InsufficientGrid("Empty N grid")
    if any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameter(f"N grid must be positive and strictly increasing, got {grid}")
    return grid


def _scaling_report(descriptor: str, t: float, k: int, d: int, N_grid: list[int],
                    covariance: Callable[[int], float], limit: float) -> ScalingReport:
    rows = []
    for N in N_grid:
        cov = covariance(N)
        rescaled = N ** (d * (k - 2)) * cov
        deviation = abs(rescaled - limit) / abs(limit) if limit else abs(rescaled)
        logger.info(f"Scaling {descriptor} N={N}: rescaled={rescaled:.8g} limit={limit:.8g} deviation={deviation:.3g}")
        rows.append(ScalingRow(N=N, covariance=cov, rescaled=rescaled, limit=limit, deviation=deviation))
    deviations = [row.deviation for row in rows]
    decreasing = all(b < a for a, b in zip(deviations, deviations[1:]))
    return ScalingReport(
        field_descriptor=descriptor,
        t=t,
        k=k,
        d=d,
        rows=rows,
        limit=limit,
        decreasing=decreasing,
        passed=decreasing and deviations[-1] < 0.1,
    )


def scaling_limit_check(
    x: Union[CoordVector, DualConfig], phi: TestFunction, N_grid: Sequence[int], t: float, spec: KernelSpec,
    params: PolyParams,
) -> ScalingReport:
    """N^{d(k-2)} times the exact covariance at lag N^2 t against the Gaussian limit, per N.

    PASS needs deviations that decrease along the grid and end below 10%.
    """
    if t <= 0:
        raise NonPositiveTime(f"Time must be positive, got {t}")
    grid = _check_n_grid(N_grid)
    x = as_coord_vector(x)
    limit = stationary_limit(x, phi, t, spec, params)
    return _scaling_report(
        describe_target(x), t, x.k, spec.dimension, grid,
        lambda N: exact_stationary_covariance(x, phi, N, N * N * t, spec, params), limit,
    )


def _bg_breakpoints(N: int, T: float, d: int) -> list[float]:
    """Panels [0, 1/N^2], then doubling, plus the refinement point N^{-2d/(2+d)}."""
    points = {0.0, float(T)}
    u = 1.0 / N**2
    while u < T:
        points.add(u)
        u *= 2.0
    refinement = N ** (-2 * d / (2 + d))
    if refinement < T:
        points.add(refinement)
    return sorted(points)


def _lattice_covariance(target: FieldTarget, phi: TestFunction, N: int, spec: KernelSpec, params: PolyParams,
                        k: Optional[int]) -> Callable[[float], float]:
    """tau -> covariance of the field at microscopic lag tau, with the phi correlation computed once."""
    corr = _correlation(phi, N)
    if isinstance(target, BasisExpansion):
        if k is None or k < 1:
            raise InvalidParameter("Projected expansions need the field order k >= 1")
        part = residual(target, k - 1)
        return lambda tau: _expansion_pair_sum(part, rw_kernel(spec, tau), corr)
    _require_homogeneous(params)
    x = as_coord_vector(target)
    a = norm_a(coord_to_config(x), params)
    return lambda tau: a * _pair_sum(x, x, rw_kernel(spec, tau), corr)


def bg_double_integral(
    target: FieldTarget,
    phi: TestFunction,
    N: int,
    T: float,
    spec: KernelSpec,
    params: PolyParams,
    k: Optional[int] = None,
    orders: tuple[int, int] = (8, 12),
) -> float:
    """(1/N^d) int_0^T int_0^T Cov(X_N(t), X_N(s)) ds dt = (2/N^d) int_0^T (T - u) C(N^2 u) du.

    Gauss-Legendre on each panel of _bg_breakpoints at two orders.

    Raises:
        QuadratureFailure: if the two orders disagree.
    """
    if T <= 0:
        raise NonPositiveTime(f"Horizon must be positive, got {T}")
    if phi.amplitude == 0:
        return 0.0
    covariance = _lattice_covariance(target, phi, N, spec, params, k)
    breaks = _bg_breakpoints(N, T, spec.dimension)
    estimates = []
    for order in orders:
        nodes, weights = leggauss(order)
        terms = []
        for a, b in zip(breaks, breaks[1:]):
            half, mid = 0.5 * (b - a), 0.5 * (b + a)
            for node, weight in zip(nodes, weights):
                u = mid + half * node
                terms.append(half * weight * (T - u) * covariance(N * N * u))
        estimates.append(2.0 / N**spec.dimension * math.fsum(terms))
    rough, value = estimates
    if not math.isfinite(value) or abs(rough - value) > BG_QUADRATURE_TOL * abs(value) + 1e-300:
        raise QuadratureFailure(f"Double integral at N={N}: orders {orders} give {rough:.10g} and {value:.10g}")
    logger.info(f"BG integral {describe_target(target)} N={N} T={T}: {value:.8g} over {len(breaks) - 1} panels")
    return value


def fit_bg_exponent(N_grid: Sequence[int], values: Sequence[float], k: int, d: int) -> RateFit:
    """Slope of log(value) against log N; PASS if it is at most -alpha + 0.15.

    Raises:
        InsufficientGrid: fewer than 4 grid points.
    """
    if len(N_grid) < 4:
        raise InsufficientGrid(f"Need at least 4 N values, got {len(N_grid)}")
    grid = _check_n_grid(N_grid)
    if len(values) != len(grid):
        raise InvalidParameter(f"{len(values)} values for {len(grid)} grid points")
    fit = fit_power_law(grid, values)
    alpha = exponent_for(k, d)
    return RateFit(
        N_grid=grid,
        values=[float(v) for v in values],
        k=k,
        d=d,
        slope=fit.slope,
        intercept=fit.intercept,
        residual=fit.residual,
        alpha=alpha,
        passed=fit.slope <= -alpha + EXPONENT_MARGIN,
    )


def _dual_window(configs: Sequence[DualConfig], spec: KernelSpec, t: float, tail: float = 1e-12) -> Window:
    reach = max((abs(c) for xi in configs for s in xi.sites() for c in s), default=0)
    buffer = tail_radius(rw_kernel(spec, t), tail)
    return Window(2 * (reach + spec.range + buffer) + 1, spec.dimension)


def _duality_covariance_sample(rng: np.random.Generator, replica: int, *, xi: DualConfig, xi2: DualConfig,
                               window: Window, t: float, spec: KernelSpec, params: PolyParams) -> float:
    eta = sample_poisson_product(params, window, rng)
    start = duality_product(xi2, eta, params)
    return duality_product(xi, evolve_irw(eta, t, spec, rng), params) * start


def duality_covariance_check(
    xi: DualConfig,
    xi2: DualConfig,
    t: float,
    spec: KernelSpec,
    params: PolyParams,
    replicas: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> DualityCheck:
    """int E_eta[D(xi, eta_t)] D(xi', eta) d nu_rho against p_t(xi, xi') a(xi').

    At t = 0 no dynamics is involved and the left side is the Poisson integral
    itself, evaluated by truncated sums.
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    _require_homogeneous(params)
    rhs = config_kernel(spec, t, xi, xi2) * norm_a(xi2, params) if xi.size == xi2.size else 0.0
    if t == 0:
        lhs, stderr = orthogonality_oracle(xi, xi2, params), 0.0
    else:
        window = _dual_window([xi, xi2], spec, t)
        task = partial(_duality_covariance_sample, xi=xi, xi2=xi2, window=window, t=t, spec=spec, params=params)
        values = np.array(run_replicas(task, replicas, seed, workers))
        lhs = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    score = z_score(lhs, stderr, rhs)
    logger.info(f"Duality covariance {xi} | {xi2} t={t}: mc={lhs:.6g} exact={rhs:.6g} z={score:.3g}")
    return DualityCheck(
        xi=f"{xi} | {xi2}", t=t, lhs=lhs, rhs=rhs, stderr=stderr, z_score=score, replicas=replicas, seed=seed
    )


def _profile_window(profile: DensityProfile, N: int, spec: KernelSpec, tau: float, reach: int = 0) -> Window:
    if profile.dimension != spec.dimension:
        raise InvalidParameter("Profile and jump law dimensions differ")
    buffer = tail_radius(rw_kernel(spec, tau), WINDOW_TAIL)
    return Window(required_window_side(profile.support_radius, N, spec.range + reach, buffer), spec.dimension)


def _site_params(grid: np.ndarray, window: Window, sites: Sequence[Site]) -> PolyParams:
    per_site = {site: float(grid[window.index(site)]) for site in sites}
    return PolyParams(rho=float(grid.mean()), per_site_rho=per_site)


def _nonstationary_sample(rng: np.random.Generator, replica: int, *, xi: DualConfig, xi2: DualConfig,
                          window: Window, density: np.ndarray, tau: float, spec: KernelSpec,
                          start_params: PolyParams, end_params: PolyParams) -> float:
    eta = sample_poisson_product(density, window, rng)
    start = monic_duality_product(xi2, eta, start_params)
    return monic_duality_product(xi, evolve_irw(eta, tau, spec, rng), end_params) * start


def nonstationary_covariance_check(
    xi: DualConfig,
    xi2: DualConfig,
    profile: DensityProfile,
    t: float,
    N: int,
    spec: KernelSpec,
    replicas: int,
    seed: int = 0,
    workers: Optional[int] = None,
) -> CovarianceReport:
    """int E_eta[D_{rho_tau}(xi, eta_tau)] D_{rho_0}(xi', eta) d nu_{rho_0} against p_tau(xi, xi') a_0(xi').

    tau = N^2 t, rho_0(x) = profile(x / N) and rho_tau its heat evolution. Both
    polynomials use the classical leading-term normalization, whose squared
    norm is a_0(xi') = prod xi'_x! rho_0(x)^{xi'_x}.
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    if replicas < 2:
        raise InvalidParameter(f"Need at least two replicas, got {replicas}")
    tau = N * N * t
    window = _profile_window(profile, N, spec, tau, _reach(xi) if xi.size else 0)
    for site in {*xi.sites(), *xi2.sites()}:
        if not window.contains(site):
            raise WindowTooSmall(f"Dual site {site} lies outside the window")
    density = profile.on_window(window, N)
    evolved = heat_evolve_profile(spec, density, tau)
    start_params = _site_params(density, window, xi2.sites())
    end_params = _site_params(evolved, window, xi.sites())
    rhs = config_kernel(spec, tau, xi, xi2) * monic_norm(xi2, start_params) if xi.size == xi2.size else 0.0
    task = partial(
        _nonstationary_sample, xi=xi, xi2=xi2, window=window, density=density, tau=tau, spec=spec,
        start_params=start_params, end_params=end_params,
    )
    values = np.array(run_replicas(task, replicas, seed, workers))
    lhs = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(replicas))
    score = z_score(lhs, stderr, rhs)
    logger.info(f"Nonstationary covariance {xi} | {xi2} t={t} N={N}: mc={lhs:.6g} exact={rhs:.6g} z={score:.3g}")
    return CovarianceReport(
        field_descriptor=f"{xi} | {xi2}",
        method="monte-carlo",
        value=lhs,
        stderr=stderr,
        N=N,
        seed=seed,
        replicas=replicas,
        t=t,
        k=xi.size,
        exact=rhs,
        z_score=score,
    )


def _site_counts(rng: np.random.Generator, replica: int, *, window: Window, density: np.ndarray, tau: float,
                 spec: KernelSpec, indices: tuple) -> np.ndarray:
    eta = evolve_irw(sample_poisson_product(density, window, rng), tau, spec, rng)
    return eta.counts[indices]


def local_equilibrium_check(
    profile: DensityProfile,
    t: float,
    N: int,
    spec: KernelSpec,
    replicas: int,
    seed: int = 0,
    sites: Optional[Sequence[Site]] = None,
    workers: Optional[int] = None,
) -> list[SiteMoments]:
    """Factorial moments of eta_x(N^2 t) started from the profile measure, against Poisson(rho_t(x)).

    Default sites are the origin and the lattice point halfway out the bump along the first axis.
    """
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    tau = N * N * t
    window = _profile_window(profile, N, spec, tau)
    if sites is None:
        centre = [int(round(c * N)) for c in profile.center]
        outward = list(centre)
        outward[0] += int(round(0.5 * profile.radius * N))
        sites = [tuple(centre), tuple(outward)]
    sites = [tuple(int(c) for c in s) for s in sites]
    for site in sites:
        if not window.contains(site):
            raise WindowTooSmall(f"Site {site} lies outside the window")
    density = profile.on_window(window, N)
    evolved = heat_evolve_profile(spec, density, tau)
    indices = tuple(np.array([window.index(s) for s in sites]).T)
    task = partial(_site_counts, window=window, density=density, tau=tau, spec=spec, indices=indices)
    samples = np.array(run_replicas(task, replicas, seed, workers))
    report = []
    for column, site in enumerate(sites):
        rho = float(evolved[window.index(site)])
        report.append(SiteMoments(site=site, rho=rho, moments=poisson_moment_check(samples[:, column], rho)))
        logger.info(f"Local equilibrium at {site}: rho_t={rho:.6g}")
    return report


def _profile_norm_weight(x: CoordVector, profile: DensityProfile, N: int, phi: TestFunction) -> np.ndarray:
    """a_0 of tau_z xi(x) on the phi box: prod_s xi_s! rho_0(z + s)^{xi_s}."""
    lower, values = phi.lattice(N)
    axes = [np.arange(lo, lo + n) for lo, n in zip(lower, values.shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack(grids, axis=-1).astype(float)
    weight = np.ones(values.shape)
    for site, mult in coord_to_config(x):
        weight *= math.factorial(mult) * profile((points + np.asarray(site)) / N) ** mult
    return weight


def exact_nonstationary_covariance(
    x: Union[CoordVector, DualConfig], phi: TestFunction, N: int, t: float, spec: KernelSpec,
    profile: DensityProfile,
) -> float:
    """sum_{y,z} phi(y/N) phi(z/N) p_t(tau_y xi, tau_z xi) a_0(tau_z xi) at microscopic lag t."""
    if t < 0:
        raise NegativeTime(f"Time must be non-negative, got {t}")
    x = as_coord_vector(x)
    if phi.amplitude == 0:
        return 0.0
    corr = _correlation(phi, N, _profile_norm_weight(x, profile, N, phi))
    return _pair_sum(x, x, rw_kernel(spec, t), corr)


def nonstationary_limit(
    x: Union[CoordVector, DualConfig], phi: TestFunction, t: float, spec: KernelSpec, profile: DensityProfile
) -> float:
    """|P_k(x)| int int a_0(rho(z)) G_t(z - y)^k phi(y) phi(z) dy dz with the local profile value at z."""
    x = as_coord_vector(x)
    factorials = coord_to_config(x).factorial_weight()
    return class_count(x) * gaussian_overlap(phi, spec, t, x.k, weight=lambda u: factorials * profile(u) ** x.k)


def nonstationary_scaling_check(
    x: Union[CoordVector, DualConfig], phi: TestFunction, N_grid: Sequence[int], t: float, spec: KernelSpec,
    profile: DensityProfile,
) -> ScalingReport:
    """Rescaled nonstationary covariance against its Gaussian limit, with the scaling_limit_check PASS rule."""
    if t <= 0:
        raise NonPositiveTime(f"Time must be positive, got {t}")
    grid = _check_n_grid(N_grid)
    x = as_coord_vector(x)
    limit = nonstationary_limit(x, phi, t, spec, profile)
    return _scaling_report(
        describe_target(x), t, x.k, spec.dimension, grid,
        lambda N: exact_nonstationary_covariance(x, phi, N, N * N * t, spec, profile), limit,
    )
