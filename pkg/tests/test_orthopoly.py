"""Tests for Charlier duality polynomials, norms and expansions."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.engine.expression import parse_local_function
from app.engine.orthopoly import (
    charlier_explicit,
    charlier_recurrence,
    charlier_values,
    check_expansion_condition,
    classical_single,
    density_projection,
    duality_product,
    evaluate_expansion,
    expand_local_function,
    monic_duality_product,
    monic_factor,
    monic_norm,
    norm_a,
    orthogonality_oracle,
    project,
    residual,
    truncation_level,
)
from app.errors import InvalidParameter, NonPositiveDensity, SupportMismatch, TruncationFailure
from app.models.configuration import DualConfig, OccupationState, Window
from app.models.local_function import LocalFunctionSpec
from app.models.params import PolyParams

DELTA0 = DualConfig.from_sites([(0,)])
DELTA1 = DualConfig.from_sites([(1,)])
TWO_AT_0 = DualConfig.from_sites([(0,), (0,)])


class TestSingleSitePolynomials:
    """Tests for d(k, n)."""

    @given(st.integers(0, 8), st.integers(0, 12), st.sampled_from([0.3, 1.0, 2.5]))
    def test_recurrence_matches_explicit_sum(self, k, n, rho):
        """Test the recurrence and the closed sum agree."""
        assert charlier_recurrence(k, n, rho) == pytest.approx(charlier_explicit(k, n, rho), rel=1e-9, abs=1e-9)

    @given(st.integers(0, 6), st.integers(0, 30), st.sampled_from([0.5, 1.0, 4.0]))
    def test_vectorised_values(self, k, n, rho):
        """Test the array evaluation agrees with the recurrence."""
        assert float(charlier_values(k, n, rho)) == pytest.approx(charlier_recurrence(k, n, rho), rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("k", range(6))
    def test_degree_in_occupation(self, k):
        """Test d(k, .) is a polynomial of degree k in n with leading coefficient (-1/rho)^k."""
        rho = 2.0
        values = np.array([charlier_recurrence(k, n, rho) for n in range(k + 6)])
        np.testing.assert_allclose(np.diff(values, k + 1), 0.0, atol=1e-8)
        np.testing.assert_allclose(np.diff(values, k), math.factorial(k) * (-1 / rho) ** k, atol=1e-8)

    def test_low_orders(self):
        """Test d(0, n) = 1, d(1, n) = 1 - n/rho and d(k, 0) = 1."""
        assert charlier_recurrence(0, 7, 2.0) == 1.0
        assert charlier_recurrence(1, 3, 2.0) == pytest.approx(-0.5)
        assert charlier_recurrence(5, 0, 0.7) == 1.0

    def test_large_occupation_uses_floats(self):
        """Test occupation numbers past the exact range still agree."""
        assert charlier_recurrence(3, 40, 30.0) == pytest.approx(charlier_explicit(3, 40, 30.0), rel=1e-9)

    def test_rejects_bad_density(self):
        """Test non-positive densities are rejected."""
        with pytest.raises(NonPositiveDensity):
            charlier_recurrence(1, 1, 0.0)
        with pytest.raises(NonPositiveDensity):
            charlier_values(1, [1, 2], [1.0, -1.0])

    def test_rejects_negative_order(self):
        """Test negative orders are rejected."""
        with pytest.raises(InvalidParameter):
            charlier_explicit(-1, 2, 1.0)

    def test_classical_falling_factorial(self):
        """Test the classical single-site factor is the falling factorial."""
        assert classical_single(2, 3) == 6.0
        assert classical_single(2, 1) == 0.0


class TestOrthogonality:
    """Tests for the Poisson product integral of D(xi, .) D(xi', .)."""

    @pytest.mark.parametrize("rho", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("xi", [DELTA0, TWO_AT_0, DualConfig.from_sites([(0,), (0,), (2,)])])
    def test_squared_norm_is_a(self, xi, rho):
        """Test the self inner product equals a(xi)."""
        params = PolyParams(rho=rho)
        assert orthogonality_oracle(xi, xi, params) == pytest.approx(norm_a(xi, params), rel=1e-8)

    @pytest.mark.parametrize("xi, xi2", [(DELTA0, DELTA1), (DELTA0, TWO_AT_0), (TWO_AT_0, DualConfig())])
    def test_distinct_configurations_are_orthogonal(self, xi, xi2):
        """Test distinct configurations integrate to zero."""
        assert orthogonality_oracle(xi, xi2, PolyParams(rho=1.5)) == pytest.approx(0.0, abs=1e-8)

    def test_inhomogeneous_density(self):
        """Test per-site densities enter the norm site by site."""
        params = PolyParams(rho=1.0, per_site_rho={(0,): 2.0, (1,): 0.5})
        xi = DualConfig.from_sites([(0,), (0,), (1,)])
        assert norm_a(xi, params) == pytest.approx(2 / 4 * 1 / 0.5)
        assert orthogonality_oracle(xi, xi, params) == pytest.approx(norm_a(xi, params), rel=1e-8)

    def test_monic_normalization(self):
        """Test the monic norm is the squared monic factor times a(xi)."""
        params = PolyParams(rho=1.7)
        assert monic_factor(TWO_AT_0, params) == pytest.approx(1.7**2)
        assert monic_norm(TWO_AT_0, params) == pytest.approx(monic_factor(TWO_AT_0, params) ** 2 * norm_a(TWO_AT_0, params))

    def test_monic_ratio_is_constant(self):
        """Test the monic product differs from D by the same factor for every eta."""
        params = PolyParams(rho=1.7)
        xi = DualConfig.from_sites([(0,), (0,), (1,)])
        window = Window(5, 1)
        states = [{(0,): 0, (1,): 0}, {(0,): 1, (1,): 3}, {(0,): 4, (1,): 2, (2,): 5}, {(0,): 7, (1,): 1}]
        ratios = []
        for mapping in states:
            eta = OccupationState.from_mapping(window, mapping)
            ratios.append(monic_duality_product(xi, eta, params) / duality_product(xi, eta, params))
        np.testing.assert_allclose(ratios, monic_factor(xi, params), rtol=1e-12)
        assert monic_factor(xi, params) == pytest.approx(-(1.7**3))

    def test_truncation_failure(self):
        """Test densities too large for the occupation cut-off are reported."""
        with pytest.raises(TruncationFailure):
            truncation_level(1e4, 2, 1e-12)

    def test_duality_product_outside_window(self, window1):
        """Test dual sites outside the occupation window are rejected."""
        eta = OccupationState.empty(window1)
        with pytest.raises(SupportMismatch):
            duality_product(DualConfig.from_sites([(50,)]), eta, PolyParams(rho=1.0))


class TestExpansion:
    """Tests for Charlier expansions of local functions."""

    def test_square_of_occupation(self, rho1):
        """Test eta_0^2 = 2 - 3 D(delta_0) + D(2 delta_0) at rho = 1."""
        f = expand_local_function(LocalFunctionSpec.occupation((0,), 2), rho1)
        assert f.constant_term == pytest.approx(2.0)
        assert f.coefficient(DELTA0) == pytest.approx(-3.0)
        assert f.coefficient(TWO_AT_0) == pytest.approx(1.0)
        assert len(f) == 3
        assert density_projection(f) == pytest.approx(3.0)
        assert check_expansion_condition(f, rho1) == pytest.approx(4.0 + 9.0 + 2.0)

    @pytest.mark.parametrize("rho", [0.5, 2.0])
    def test_occupation_has_unit_density_projection(self, rho):
        """Test the density field projects onto itself with coefficient one."""
        f = expand_local_function(LocalFunctionSpec.occupation((0,), 1), PolyParams(rho=rho))
        assert f.constant_term == pytest.approx(rho)
        assert density_projection(f) == pytest.approx(1.0)

    def test_constant_function(self, rho1):
        """Test a constant has only the empty configuration."""
        f = expand_local_function(LocalFunctionSpec.constant(3.0), rho1)
        assert len(f) == 1
        assert f.constant_term == pytest.approx(3.0)
        assert f.degree == 0

    def test_reconstruction(self):
        """Test the expansion reproduces f pointwise."""
        params = PolyParams(rho=0.8)
        f = parse_local_function("eta(0)^2*eta(1) - 2*eta(1) + 1/2")
        expansion = expand_local_function(f, params)
        window = Window(5, 1)
        rng = np.random.default_rng(3)
        for _ in range(5):
            counts = rng.poisson(2.0, size=window.shape)
            eta = OccupationState(window, counts)
            assert evaluate_expansion(expansion, eta) == pytest.approx(f(eta), rel=1e-9, abs=1e-9)

    def test_projection_and_residual_split(self, rho1):
        """Test f_n and f - f_n partition the coefficients."""
        f = expand_local_function(LocalFunctionSpec.occupation((0,), 2), rho1)
        low, high = project(f, 1), residual(f, 1)
        assert len(low) + len(high) == len(f)
        assert all(xi.size <= 1 for xi, _ in low)
        assert [xi for xi, _ in high] == [TWO_AT_0]
        with pytest.raises(InvalidParameter):
            project(f, -1)

    def test_inhomogeneous_expansion_rejected(self):
        """Test expansions need a homogeneous density."""
        params = PolyParams(rho=1.0, per_site_rho={(0,): 2.0})
        with pytest.raises(InvalidParameter):
            expand_local_function(LocalFunctionSpec.occupation((0,)), params)

    def test_norm_uses_factorials(self):
        """Test a(xi) = prod xi_x! rho^-xi_x."""
        params = PolyParams(rho=2.0)
        xi = DualConfig.from_sites([(0,)] * 3)
        assert norm_a(xi, params) == pytest.approx(math.factorial(3) / 8)
