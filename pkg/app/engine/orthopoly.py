"""
Charlier duality polynomials, their norms and basis expansions of local functions.

The canonical duality function is the recurrence-anchored product
D(xi, eta) = prod_x d(xi_x, eta_x) with d(0, n) = 1 and
d(k+1, n) = d(k, n) - (n / rho) d(k, n - 1). The classical-leading-term variant
differs by the factor prod_x (-rho_x)^{xi_x} and is reached only through the
monic_* conversions.
"""

import logging
import math
from fractions import Fraction
from itertools import product
from typing import Union

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from app.errors import InvalidParameter, NonPositiveDensity, SupportMismatch, TruncationFailure
from app.models.configuration import DualConfig, OccupationState
from app.models.local_function import BasisExpansion, LocalFunctionSpec
from app.models.params import PolyParams
from app.settings import MAX_OCCUPANCY

logger = logging.getLogger(__name__)

# Exact rational arithmetic up to this occupation number, log-gamma floats beyond
EXACT_LIMIT = 20

ArrayLike = Union[float, int, np.ndarray]


def _check_density(rho: float) -> None:
    if not (math.isfinite(rho) and rho > 0):
        raise NonPositiveDensity(f"Density must be positive and finite, got {rho}")


def _check_orders(k: int, n: int) -> None:
    if k < 0 or n < 0 or int(k) != k or int(n) != n:
        raise InvalidParameter(f"Orders must be non-negative integers, got k={k}, n={n}")


def charlier_recurrence(k: int, n: int, rho: float) -> float:
    """d(k, n) by the three-term recurrence in k."""
    _check_density(rho)
    _check_orders(k, n)
    r = Fraction(rho) if n <= EXACT_LIMIT else float(rho)
    row = [Fraction(1) if n <= EXACT_LIMIT else 1.0] * (n + 1)
    for _ in range(k):
        row = [row[0]] + [row[m] - (m / r) * row[m - 1] for m in range(1, n + 1)]
    return float(row[n])


def charlier_explicit(k: int, n: int, rho: float) -> float:
    """d(k, n) = sum_j C(k, j) (-rho)^{-j} n! / (n - j)!"""
    _check_density(rho)
    _check_orders(k, n)
    top = min(k, n)
    if n <= EXACT_LIMIT:
        r = Fraction(rho)
        total = sum(
            (Fraction(math.comb(k, j) * (-1) ** j * math.perm(n, j)) / r**j for j in range(top + 1)),
            Fraction(0),
        )
        return float(total)
    log_rho = math.log(rho)
    terms = [
        (-1) ** j * math.comb(k, j) * math.exp(gammaln(n + 1) - gammaln(n - j + 1) - j * log_rho)
        for j in range(top + 1)
    ]
    return math.fsum(terms)


def charlier_values(k: int, n: ArrayLike, rho: ArrayLike) -> np.ndarray:
    """Vectorised d(k, n) over arrays of occupation numbers and densities."""
    n = np.asarray(n, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise NonPositiveDensity("Densities must be positive and finite")
    total = np.ones(np.broadcast(n, rho).shape)
    falling = np.ones_like(total)
    for j in range(1, k + 1):
        falling = falling * (n - (j - 1))
        total = total + math.comb(k, j) * falling * (-1.0 / rho) ** j
    return total


def classical_single(k: int, n: int) -> float:
    """Falling factorial n! / (n - k)!, zero when k > n."""
    _check_orders(k, n)
    return float(math.perm(n, k)) if n >= k else 0.0


def duality_product(xi: DualConfig, eta: OccupationState, params: PolyParams) -> float:
    """D(xi, eta) = prod_x d(xi_x, eta_x) with the density of each site."""
    value = 1.0
    for site, mult in xi:
        if not eta.window.contains(site):
            raise SupportMismatch(f"Dual site {site} lies outside the occupation window")
        value *= float(charlier_values(mult, eta[site], params.density_at(site)))
    return value


def _factorial(m: int) -> float:
    return float(math.factorial(m)) if m <= EXACT_LIMIT else math.exp(gammaln(m + 1))


def norm_a(xi: DualConfig, params: PolyParams) -> float:
    """a(xi) = prod_x xi_x! rho_x^{-xi_x}, the squared norm of D(xi, .)."""
    value = 1.0
    for site, mult in xi:
        rho = params.density_at(site)
        _check_density(rho)
        value *= _factorial(mult) * rho ** (-mult)
    return value


def monic_factor(xi: DualConfig, params: PolyParams) -> float:
    """prod_x (-rho_x)^{xi_x}: ratio of the classical-leading-term normalization to D."""
    return math.prod((-params.density_at(site)) ** mult for site, mult in xi)


def monic_duality_product(xi: DualConfig, eta: OccupationState, params: PolyParams) -> float:
    return monic_factor(xi, params) * duality_product(xi, eta, params)


def monic_norm(xi: DualConfig, params: PolyParams) -> float:
    """prod_x xi_x! rho_x^{xi_x}"""
    return math.prod(_factorial(mult) * params.density_at(site) ** mult for site, mult in xi)


def truncation_level(rho: float, degree: int, tol: float) -> int:
    """Smallest occupation cut-off K with sum_{n>K} Poisson(rho)(n) (1 + n/r)^degree < tol.

    r = min(rho, 1) makes (1 + n/r)^degree dominate |f(n)| for every polynomial
    weight of total degree `degree` used here. Once n >= max(2 e rho, degree)
    consecutive terms shrink by at least half, so the tail past K is at most
    twice its first term.
    """
    _check_density(rho)
    if not tol > 0:
        raise InvalidParameter(f"Tail tolerance must be positive, got {tol}")
    r = min(rho, 1.0)
    start = max(int(math.ceil(2 * math.e * rho)), int(degree), 1)
    log_tol = math.log(tol)
    for cutoff in range(start, MAX_OCCUPANCY + 1):
        n = cutoff + 1
        log_term = n * math.log(rho) - rho - gammaln(n + 1) + degree * math.log1p(n / r)
        if math.log(2.0) + log_term < log_tol:
            return cutoff
    raise TruncationFailure(
        f"Tail below {tol} needs more than {MAX_OCCUPANCY} particles per site at rho={rho}, degree={degree}"
    )


def orthogonality_oracle(xi: DualConfig, xi2: DualConfig, params: PolyParams, tail_tol: float = 1e-12) -> float:
    """Brute-force integral of D(xi, .) D(xi2, .) against the Poisson product measure.

    Every site factor is a truncated Poisson sum whose neglected tail is below
    tail_tol / (number of sites).
    """
    sites = sorted(set(xi.sites()) | set(xi2.sites()))
    if not sites:
        return 1.0
    per_site_tol = tail_tol / len(sites)
    value = 1.0
    for site in sites:
        rho = params.density_at(site)
        m1, m2 = xi[site], xi2[site]
        cutoff = truncation_level(rho, m1 + m2, per_site_tol)
        n = np.arange(cutoff + 1)
        weights = poisson.pmf(n, rho)
        terms = weights * charlier_values(m1, n, rho) * charlier_values(m2, n, rho)
        value *= math.fsum(terms)
    return value


def _single_site_coefficient(power: int, m: int, rho: float, tol: float) -> float:
    """c with eta^power = sum_m c_m d(m, eta): E[eta^power d(m, eta)] / (m! rho^-m)."""
    cutoff = truncation_level(rho, power + m, tol)
    n = np.arange(cutoff + 1, dtype=float)
    moment = math.fsum(poisson.pmf(n, rho) * n**power * charlier_values(m, n, rho))
    return moment / (_factorial(m) * rho ** (-m))


def expand_local_function(f: LocalFunctionSpec, params: PolyParams, tail_tol: float = 1e-15) -> BasisExpansion:
    """Charlier coefficients C_{n,xi} = <f, D(xi, .)> / a(xi) by truncated Poisson sums.

    Monomials factor over sites, so each coefficient is a product of single-site
    inner products; only xi with xi_x <= deg_x(f) on supp(f) can be non-zero.
    """
    if not params.homogeneous:
        raise InvalidParameter("Basis expansions are taken at a homogeneous density")
    rho = params.rho
    cache: dict[tuple[int, int], float] = {}
    sums: dict[DualConfig, float] = {}
    scales: dict[DualConfig, float] = {}
    for monomial, coefficient in f:
        options = []
        for site, power in monomial:
            row = []
            for m in range(power + 1):
                if (power, m) not in cache:
                    cache[(power, m)] = _single_site_coefficient(power, m, rho, tail_tol)
                row.append((site, m, cache[(power, m)]))
            options.append(row)
        for choice in product(*options):
            xi = DualConfig.from_mapping({site: m for site, m, _ in choice if m > 0})
            contribution = coefficient * math.prod(c for _, _, c in choice)
            sums[xi] = sums.get(xi, 0.0) + contribution
            scales[xi] = scales.get(xi, 0.0) + abs(contribution)
    # Coefficients that cancel down to rounding noise are dropped
    kept = tuple((xi, c) for xi, c in sums.items() if abs(c) > 1e-12 * scales[xi])
    logger.debug(f"Expanded {f} into {len(kept)} Charlier coefficients at rho={rho}")
    return BasisExpansion(coefficients=kept, rho=rho)


def project(f: BasisExpansion, n: int) -> BasisExpansion:
    """f_n: the part of f of degree at most n."""
    if n < 0:
        raise InvalidParameter(f"Projection degree must be non-negative, got {n}")
    return BasisExpansion(coefficients=tuple((xi, c) for xi, c in f if xi.size <= n), rho=f.rho)


def residual(f: BasisExpansion, n: int) -> BasisExpansion:
    """f - f_n"""
    return BasisExpansion(coefficients=tuple((xi, c) for xi, c in f if xi.size > n), rho=f.rho)


def check_expansion_condition(f: BasisExpansion, params: PolyParams) -> float:
    """sum over ||xi|| = ||xi'|| of |C_xi C_xi'| a(xi')"""
    total = 0.0
    for n in sorted({xi.size for xi, _ in f}):
        layer = f.by_degree(n)
        weight = sum(abs(c) for _, c in layer)
        total += weight * sum(abs(c) * norm_a(xi, params) for xi, c in layer)
    return total


def density_projection(f: BasisExpansion) -> float:
    """psi'_f(rho): the coefficient of the projection of f on the density field (eta_0 - rho)."""
    return -sum(c for xi, c in f.by_degree(1)) / f.rho


def evaluate_expansion(f: BasisExpansion, eta: OccupationState) -> float:
    """Pointwise reconstruction sum_xi C_xi D(xi, eta)."""
    params = PolyParams(rho=f.rho)
    return math.fsum(c * duality_product(xi, eta, params) for xi, c in f)
