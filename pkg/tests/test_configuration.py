"""Tests for lattice configurations, dual configurations and windows."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.errors import EmptySite, InvalidParameter, SiteOverflow, SupportMismatch
from app.models.configuration import (
    CoordVector,
    DualConfig,
    OccupationState,
    Window,
    class_count,
    coord_to_config,
    make_site,
    move_particle,
    permutation_classes,
    required_window_side,
    shift,
    wrap_config,
)

sites_1d = st.lists(st.tuples(st.integers(-20, 20)), min_size=1, max_size=6)


class TestDualConfig:
    """Tests for the multiset of dual particles."""

    @given(sites_1d)
    def test_order_does_not_matter(self, sites):
        """Test configurations built from permuted sites are equal and hash equal."""
        a = DualConfig.from_sites(sites)
        b = DualConfig.from_sites(list(reversed(sites)))
        assert a == b
        assert hash(a) == hash(b)

    @given(sites_1d)
    def test_size_counts_particles(self, sites):
        """Test size is the number of particles with repetition."""
        assert DualConfig.from_sites(sites).size == len(sites)

    @given(sites_1d)
    def test_labeling_round_trip(self, sites):
        """Test the canonical labeling maps back to the same configuration."""
        xi = DualConfig.from_sites(sites)
        assert coord_to_config(xi.labeling()) == xi

    def test_multiplicity_lookup(self):
        """Test site lookup returns multiplicities and zero off the support."""
        xi = DualConfig.from_sites([(0,), (0,), (1,)])
        assert xi[(0,)] == 2
        assert xi[(1,)] == 1
        assert xi[(5,)] == 0
        assert xi.factorial_weight() == 2
        assert str(xi) == "2@(0)+(1)"

    def test_rejects_mixed_dimensions(self):
        """Test sites of different dimensions are rejected."""
        with pytest.raises(InvalidParameter):
            DualConfig.from_sites([(0,), (0, 1)])

    def test_empty_configuration(self):
        """Test the empty configuration."""
        assert DualConfig().size == 0
        assert str(DualConfig()) == "{}"

    @pytest.mark.parametrize("mult", [0, -1, 1.5])
    def test_rejects_non_positive_multiplicity(self, mult):
        """Test multiplicities must be positive integers instead of being dropped."""
        with pytest.raises(InvalidParameter):
            DualConfig.from_mapping({(0,): 1, (1,): mult})


class TestPermutationClasses:
    """Tests for labelings modulo coincident coordinates."""

    @given(st.lists(st.integers(-3, 3), min_size=1, max_size=5))
    def test_count_matches_formula(self, coords):
        """Test the number of classes is k! / prod xi_x!"""
        x = CoordVector.of(*coords)
        classes = permutation_classes(x)
        assert len(classes) == class_count(x)
        assert len(set(classes)) == len(classes)

    def test_distinct_pair_has_two_classes(self):
        """Test (0, 1) has both orderings and (0, 0) only one."""
        assert [c.positions for c in permutation_classes(CoordVector.of(0, 1))] == [((0,), (1,)), ((1,), (0,))]
        assert len(permutation_classes(CoordVector.of(0, 0))) == 1

    def test_rejects_empty_vector(self):
        """Test an empty coordinate vector has no classes."""
        with pytest.raises(InvalidParameter):
            permutation_classes(CoordVector())


class TestShift:
    """Tests for translations."""

    @given(sites_1d, st.integers(-50, 50))
    def test_shift_round_trip(self, sites, z):
        """Test shifting by z and back restores the configuration."""
        xi = DualConfig.from_sites(sites)
        assert shift(shift(xi, (z,)), (-z,)) == xi

    def test_shift_coordinate_vector(self):
        """Test coordinate vectors shift componentwise and keep their order."""
        assert shift(CoordVector.of(1, 0), (2,)).positions == ((3,), (2,))

    def test_site_overflow(self):
        """Test coordinates leaving the 64-bit range are rejected."""
        with pytest.raises(SiteOverflow):
            make_site(2**63)
        with pytest.raises(SiteOverflow):
            shift(DualConfig.from_sites([(2**63 - 1,)]), (1,))


class TestWindow:
    """Tests for periodic windows."""

    @given(st.integers(1, 30), st.integers(-200, 200))
    def test_wrap_lands_inside(self, side, c):
        """Test wrapped sites are contained and congruent to the original."""
        window = Window(side, 1)
        wrapped = window.wrap((c,))
        assert window.contains(wrapped)
        assert (wrapped[0] - c) % side == 0

    def test_coordinates_follow_index(self):
        """Test coordinate rows match the array index layout."""
        window = Window(5, 2)
        coords = window.coordinates()
        assert coords.shape == (25, 2)
        for flat, site in enumerate(coords):
            assert np.ravel_multi_index(window.index(tuple(site)), window.shape) == flat

    def test_required_window_side(self):
        """Test the side covers support, jump range and buffer on both sides."""
        assert required_window_side(1.0, 16, 1, 10) == 2 * (16 + 1 + 10) + 1

    def test_wrap_config_merges(self):
        """Test sites folded onto the same point merge their multiplicities."""
        window = Window(4, 1)
        assert wrap_config(DualConfig.from_sites([(0,), (4,)]), window) == DualConfig.from_sites([(0,), (0,)])


class TestOccupationState:
    """Tests for occupation numbers on a window."""

    def test_move_particle(self, window1):
        """Test a particle moves from i to j and the total is conserved."""
        eta = OccupationState.from_mapping(window1, {(0,): 2})
        moved = move_particle(eta, (0,), (1,))
        assert moved[(0,)] == 1 and moved[(1,)] == 1
        assert moved.total == eta.total

    @pytest.mark.parametrize("i, j", [((0,), (11,)), ((-11,), (0,))])
    def test_move_outside_window(self, window1, i, j):
        """Test moves to or from sites off the window are rejected, not wrapped."""
        eta = OccupationState.from_mapping(window1, {(0,): 1})
        with pytest.raises(SupportMismatch):
            move_particle(eta, i, j)

    def test_move_from_empty_site(self, window1):
        """Test moving from an empty site fails."""
        eta = OccupationState.empty(window1)
        with pytest.raises(EmptySite):
            move_particle(eta, (0,), (1,))

    def test_counts_are_read_only(self, window1):
        """Test occupation arrays cannot be modified in place."""
        eta = OccupationState.from_mapping(window1, {(0,): 1})
        with pytest.raises(ValueError):
            eta.counts[0] = 5

    def test_from_mapping_outside_window(self, window1):
        """Test sites outside the window are rejected."""
        with pytest.raises(SupportMismatch):
            OccupationState.from_mapping(window1, {(40,): 1})

    def test_class_count_factorials(self):
        """Test |P_3| for a doubly occupied site."""
        assert class_count(CoordVector.of(0, 0, 1)) == math.factorial(3) // 2
