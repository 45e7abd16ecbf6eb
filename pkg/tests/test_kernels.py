"""Tests for random-walk kernels, configuration kernels and the local CLT scan."""

import math

import numpy as np
import pytest
from scipy.special import ive

from app.engine import kernels
from app.engine.kernels import (
    bessel_kernel_1d,
    config_kernel,
    config_kernel_row,
    gaussian_kernel,
    heat_evolve_profile,
    labeled_kernel,
    lclt_ratio,
    lclt_scan,
    poisson_cutoff,
    rw_kernel,
    tail_radius,
    walk_gaussian,
)
from app.errors import (
    ArityMismatch,
    InsufficientGrid,
    NegativeDensityInput,
    NegativeTime,
    NonPositiveTime,
    ParticleCountMismatch,
)
from app.models.configuration import CoordVector, DualConfig
from app.models.params import KernelSpec
from app.settings import KERNEL_CACHE_SIZE


class TestRandomWalkKernel:
    """Tests for p_t(x)."""

    def test_origin_at_unit_time(self, nn1):
        """Test p_1(0) = e^-1 I_0(1) for the nearest-neighbour walk on Z."""
        assert rw_kernel(nn1, 1.0).value((0,)) == pytest.approx(0.4657596075936404, rel=1e-10)

    @pytest.mark.parametrize("t", [0.3, 2.0, 7.5])
    def test_matches_bessel_form(self, nn1, t):
        """Test the whole row agrees with the modified Bessel function."""
        table = rw_kernel(nn1, t)
        for x in range(-6, 7):
            assert table.value((x,)) == pytest.approx(bessel_kernel_1d(t, x), abs=1e-12)

    def test_two_dimensions_factorize(self, nn2):
        """Test the nearest-neighbour walk on Z^2 is a pair of independent walks at half rate."""
        table = rw_kernel(nn2, 3.0)
        for x, y in [(0, 0), (1, 0), (2, -1), (3, 3)]:
            assert table.value((x, y)) == pytest.approx(ive(x, 1.5) * ive(y, 1.5), abs=1e-12)

    def test_time_zero_is_delta(self, nn1):
        """Test p_0 is the point mass at the origin."""
        table = rw_kernel(nn1, 0.0)
        assert table.value((0,)) == 1.0
        assert table.value((1,)) == 0.0
        assert table.truncation_error == 0.0

    def test_negative_time(self, nn1):
        """Test negative times are rejected."""
        with pytest.raises(NegativeTime):
            rw_kernel(nn1, -0.1)

    def test_mass_and_symmetry(self):
        """Test the kernel is a symmetric probability for a longer-range law."""
        spec = KernelSpec.from_law({(1,): 0.3, (-1,): 0.3, (2,): 0.2, (-2,): 0.2})
        table = rw_kernel(spec, 4.0)
        assert table.total_mass == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(table.values, table.values[::-1], atol=1e-15)
        assert table.truncation_error < 1e-12

    def test_spectral_path_agrees(self, nn1, monkeypatch):
        """Test the closed-form torus sum agrees with repeated convolution."""
        rw_kernel.cache_clear()
        direct = rw_kernel(nn1, 3.7)
        rw_kernel.cache_clear()
        monkeypatch.setattr(kernels, "DIRECT_KERNEL_BUDGET", 0.0)
        spectral = rw_kernel(nn1, 3.7)
        rw_kernel.cache_clear()
        assert direct.method == "direct"
        assert spectral.method == "spectral"
        np.testing.assert_allclose(spectral.values, direct.values, atol=1e-12)

    def test_values_at(self, nn1):
        """Test vectorised lookups return zero off the box."""
        table = rw_kernel(nn1, 1.0)
        values = table.values_at(np.array([[0], [1], [table.radius + 5]]))
        assert values[0] == pytest.approx(table.value((0,)))
        assert values[1] == pytest.approx(table.value((1,)))
        assert values[2] == 0.0

    @pytest.mark.parametrize("s, t", [(0.5, 0.5), (1.0, 2.0)])
    def test_chapman_kolmogorov(self, nn1, s, t):
        """Test p_s * p_t = p_{s+t} in total variation."""
        first, second = rw_kernel(nn1, s), rw_kernel(nn1, t)
        composed = np.convolve(first.values, second.values)
        target = rw_kernel(nn1, s + t)
        radius = max(first.radius + second.radius, target.radius)
        composed = np.pad(composed, radius - first.radius - second.radius)
        expected = np.pad(target.values, radius - target.radius)
        assert 0.5 * np.abs(composed - expected).sum() < 1e-10

    def test_cache_size_follows_settings(self):
        """Test the kernel cache is bounded by the configured size."""
        assert rw_kernel.cache_info().maxsize == KERNEL_CACHE_SIZE

    def test_poisson_cutoff(self):
        """Test the cut-off leaves a tail below the threshold."""
        n = poisson_cutoff(10.0, 1e-14)
        assert n > 10
        assert poisson_cutoff(10.0, 1e-3) < n


class TestGaussianComparators:
    """Tests for the Gaussian kernels."""

    def test_forms_coincide_in_one_dimension(self, nn1):
        """Test sqrt(d)/(2 pi t)^{d/2} exp(-d|x|^2/2t) is the walk Gaussian for d = 1."""
        points = np.array([[0.0], [1.5], [-3.0]])
        np.testing.assert_allclose(gaussian_kernel(1, 2.0, points), walk_gaussian(nn1, 2.0, points), rtol=1e-14)

    def test_walk_gaussian_integrates_to_one(self, nn2):
        """Test the walk Gaussian is a density."""
        axis = np.linspace(-20, 20, 401)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        mass = walk_gaussian(nn2, 3.0, grid).sum() * (axis[1] - axis[0]) ** 2
        assert mass == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize(
        "d, t, point, expected",
        [(1, 1.0, [0.0], 1 / math.sqrt(2 * math.pi)), (2, 4.0, [0.0, 0.0], math.sqrt(2) / (8 * math.pi))],
    )
    def test_gaussian_kernel_at_origin(self, d, t, point, expected):
        """Test the Gaussian kernel at the origin in one and two dimensions."""
        assert gaussian_kernel(d, t, point) == pytest.approx(expected, rel=1e-12)

    def test_scalar_point(self, nn1):
        """Test a single point returns a float."""
        assert isinstance(walk_gaussian(nn1, 1.0, [0.0]), float)

    def test_non_positive_time(self, nn1):
        """Test t = 0 has no Gaussian comparator."""
        with pytest.raises(NonPositiveTime):
            walk_gaussian(nn1, 0.0, [0.0])
        with pytest.raises(NonPositiveTime):
            gaussian_kernel(1, -1.0, [0.0])


class TestLocalCLT:
    """Tests for the local CLT deviation scan."""

    def test_ratio_shrinks(self, nn1):
        """Test the deviation at t = 64 is below the one at t = 4."""
        early, _ = lclt_ratio(nn1, 4.0, 1.0)
        late, _ = lclt_ratio(nn1, 64.0, 1.0)
        assert late < early

    def test_scan_passes(self, nn1):
        """Test the nearest-neighbour walk decays at the local CLT rate."""
        report = lclt_scan(nn1, [4.0, 16.0, 64.0, 256.0], 1.0)
        assert report.decreasing
        assert report.passed
        assert report.slope <= -0.4
        assert len(report.rows) == 4

    @pytest.mark.parametrize("d", [1, 2])
    def test_symmetric_walk_decays_like_inverse_time(self, d):
        """Test the nearest-neighbour deviation decays with slope close to -1, steeper than -1/2."""
        report = lclt_scan(KernelSpec.nearest_neighbor(d), [25.0, 100.0, 400.0, 1600.0], 1.0)
        assert report.slope == pytest.approx(-1.0, abs=0.1)
        assert report.reference_slope == -0.5
        assert report.faster_than_reference
        assert report.passed

    def test_scan_needs_four_times(self, nn1):
        """Test short grids are rejected."""
        with pytest.raises(InsufficientGrid):
            lclt_scan(nn1, [1.0, 2.0, 3.0], 1.0)


class TestConfigurationKernels:
    """Tests for multi-particle kernels."""

    def test_labeled_kernel_is_product(self, nn1):
        """Test labeled walkers move independently."""
        table = rw_kernel(nn1, 1.0)
        value = labeled_kernel(nn1, 1.0, CoordVector.of(0, 0), CoordVector.of(1, -2))
        assert value == pytest.approx(table.value((1,)) * table.value((-2,)))

    def test_config_kernel_sums_labelings(self, nn1):
        """Test p_t({0,0}, {0,1}) counts both labelings of the end points."""
        table = rw_kernel(nn1, 1.0)
        xi = DualConfig.from_sites([(0,), (0,)])
        xi2 = DualConfig.from_sites([(0,), (1,)])
        assert config_kernel(nn1, 1.0, xi, xi2) == pytest.approx(2 * table.value((0,)) * table.value((1,)))
        assert config_kernel(nn1, 1.0, xi, xi) == pytest.approx(table.value((0,)) ** 2)

    def test_config_kernel_detailed_balance(self, nn1):
        """Test p_t(xi, xi') / xi! is symmetric in xi and xi'."""
        xi = DualConfig.from_sites([(0,), (0,)])
        xi2 = DualConfig.from_sites([(1,), (3,)])
        forward = config_kernel(nn1, 2.0, xi, xi2) / xi.factorial_weight()
        backward = config_kernel(nn1, 2.0, xi2, xi) / xi2.factorial_weight()
        assert forward == pytest.approx(backward, rel=1e-12)

    def test_row_matches_pointwise_kernel(self, nn1):
        """Test the kernel row agrees with pointwise evaluation and sums to one."""
        xi = DualConfig.from_sites([(0,), (0,)])
        row = config_kernel_row(nn1, 0.5, xi)
        assert math.fsum(row.values()) == pytest.approx(1.0, abs=1e-12)
        for xi2 in [xi, DualConfig.from_sites([(0,), (1,)]), DualConfig.from_sites([(-1,), (2,)])]:
            assert row[xi2] == pytest.approx(config_kernel(nn1, 0.5, xi, xi2), rel=1e-12)

    def test_empty_configuration(self, nn1):
        """Test the empty configuration stays put."""
        assert config_kernel(nn1, 3.0, DualConfig(), DualConfig()) == 1.0
        assert config_kernel_row(nn1, 3.0, DualConfig()) == {DualConfig(): 1.0}

    def test_particle_count_mismatch(self, nn1):
        """Test configurations of different sizes are rejected."""
        with pytest.raises(ParticleCountMismatch):
            config_kernel(nn1, 1.0, DualConfig.from_sites([(0,)]), DualConfig.from_sites([(0,), (1,)]))
        with pytest.raises(ArityMismatch):
            labeled_kernel(nn1, 1.0, CoordVector.of(0), CoordVector.of(0, 1))


class TestTailsAndProfiles:
    """Tests for kernel tails and heat evolution of density profiles."""

    def test_tail_radius(self, nn1):
        """Test the mass outside the tail radius is below the threshold."""
        table = rw_kernel(nn1, 5.0)
        r = tail_radius(table, 1e-8)
        outside = sum(table.value((x,)) for x in range(-table.radius, table.radius + 1) if abs(x) > r)
        assert outside < 1e-8
        assert tail_radius(rw_kernel(nn1, 0.0), 1e-8) == 0

    def test_constant_profile_is_invariant(self, nn1):
        """Test a constant density does not move."""
        profile = np.full(31, 1.5)
        np.testing.assert_allclose(heat_evolve_profile(nn1, profile, 4.0), profile, rtol=1e-12)

    def test_profile_mass_is_conserved(self, nn1):
        """Test heat evolution keeps the total mass and flattens the bump."""
        x = np.arange(41) - 20
        profile = 1.0 + 0.5 * np.clip(1 - (x / 8.0) ** 2, 0, None) ** 3
        evolved = heat_evolve_profile(nn1, profile, 6.0)
        assert evolved.sum() == pytest.approx(profile.sum(), rel=1e-9)
        assert evolved.max() < profile.max()

    def test_negative_profile(self, nn1):
        """Test negative densities are rejected."""
        with pytest.raises(NegativeDensityInput):
            heat_evolve_profile(nn1, np.array([1.0, -1.0, 1.0]), 1.0)
