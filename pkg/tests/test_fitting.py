"""Tests for log-log power-law fits."""

import math

import pytest

from app.engine.fitting import fit_power_law
from app.errors import FitFailure


def test_exact_power_law():
    """Test an exact power law is recovered with zero residual."""
    x = [1.0, 2.0, 4.0, 8.0, 16.0]
    fit = fit_power_law(x, [3.0 * v**-1.5 for v in x])
    assert fit.slope == pytest.approx(-1.5)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.r_value == pytest.approx(-1.0)


def test_noisy_data_has_residual():
    """Test scattered data leave a positive residual."""
    fit = fit_power_law([1, 2, 3, 4], [1.0, 0.4, 0.45, 0.2])
    assert fit.residual > 0
    assert fit.slope < 0


@pytest.mark.parametrize(
    "x, y",
    [
        ([1.0], [1.0]),
        ([1.0, 2.0], [1.0, 0.0]),
        ([1.0, 2.0], [1.0, float("nan")]),
        ([-1.0, 2.0], [1.0, 1.0]),
        ([2.0, 2.0], [1.0, 3.0]),
        ([1.0, 2.0, 3.0], [1.0, 2.0]),
    ],
)
def test_fit_failures(x, y):
    """Test degenerate inputs raise FitFailure."""
    with pytest.raises(FitFailure):
        fit_power_law(x, y)
