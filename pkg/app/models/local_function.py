"""
Local functions of the occupation numbers and their Charlier basis expansions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

from app.errors import InvalidParameter
from app.models.configuration import DualConfig, Site

Monomial = tuple[tuple[Site, int], ...]
Occupation = Callable[[Site], int]


def _format_site(site: Site) -> str:
    return ",".join(str(c) for c in site)


@dataclass(frozen=True)
class LocalFunctionSpec:
    """Polynomial f(eta) = sum_m c_m prod_{(x, e) in m} eta_x^e over finitely many sites.

    Each monomial is a sorted tuple of (site, exponent) pairs with exponent >= 1;
    the empty monomial is the constant term.
    """

    terms: tuple[tuple[Monomial, float], ...] = ()

    def __post_init__(self):
        merged: dict[Monomial, float] = {}
        dims = set()
        for monomial, coefficient in self.terms:
            powers: dict[Site, int] = {}
            for site, exponent in monomial:
                if exponent < 0:
                    raise InvalidParameter(f"Negative exponent {exponent} at {site}")
                dims.add(len(site))
                if exponent:
                    powers[site] = powers.get(site, 0) + exponent
            key = tuple(sorted(powers.items()))
            merged[key] = merged.get(key, 0.0) + float(coefficient)
        if len(dims) > 1:
            raise InvalidParameter("Local function mixes site dimensions")
        terms = tuple(sorted((m, c) for m, c in merged.items() if c != 0.0))
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls, value: float) -> "LocalFunctionSpec":
        return cls(terms=(((), float(value)),))

    @classmethod
    def occupation(cls, site: Site, power: int = 1) -> "LocalFunctionSpec":
        monomial = ((tuple(site), power),)
        return cls(terms=((monomial, 1.0),))

    @property
    def degree(self) -> int:
        return max((sum(e for _, e in m) for m, _ in self.terms), default=0)

    @property
    def support(self) -> tuple[Site, ...]:
        return tuple(sorted({site for m, _ in self.terms for site, _ in m}))

    @property
    def dimension(self) -> int | None:
        support = self.support
        return len(support[0]) if support else None

    def __iter__(self) -> Iterator[tuple[Monomial, float]]:
        return iter(self.terms)

    def __call__(self, eta: Occupation) -> float:
        """Evaluate at an occupation state (anything mapping a site to its count)."""
        total = 0.0
        for monomial, coefficient in self.terms:
            total += coefficient * math.prod(float(eta[site]) ** e for site, e in monomial)
        return total

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for monomial, coefficient in self.terms:
            factors = [f"eta({_format_site(s)})" + (f"^{e}" if e > 1 else "") for s, e in monomial]
            if not factors:
                parts.append(f"{coefficient:g}")
            elif coefficient == 1.0:
                parts.append("*".join(factors))
            else:
                parts.append(f"{coefficient:g}*" + "*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")


@dataclass(frozen=True)
class BasisExpansion:
    """f = sum_xi C_{||xi||, xi} D(xi, .) in the Charlier duality basis at fixed density."""

    coefficients: tuple[tuple[DualConfig, float], ...] = ()
    rho: float = 1.0

    def __post_init__(self):
        ordered = tuple(sorted(self.coefficients, key=lambda item: (item[0].size, item[0].occupancy)))
        object.__setattr__(self, "coefficients", ordered)

    @property
    def degree(self) -> int:
        return max((xi.size for xi, _ in self.coefficients), default=0)

    def coefficient(self, xi: DualConfig) -> float:
        for key, value in self.coefficients:
            if key == xi:
                return value
        return 0.0

    @property
    def constant_term(self) -> float:
        """psi_f(rho) = C_{0, empty}, the mean of f under the Poisson product measure."""
        return self.coefficient(DualConfig())

    def by_degree(self, n: int) -> list[tuple[DualConfig, float]]:
        return [(xi, c) for xi, c in self.coefficients if xi.size == n]

    def __iter__(self) -> Iterator[tuple[DualConfig, float]]:
        return iter(self.coefficients)

    def __len__(self) -> int:
        return len(self.coefficients)
