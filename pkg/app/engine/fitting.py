"""
Power-law fits on log-log data.
"""

import numpy as np
from scipy.stats import linregress

from app.errors import FitFailure
from app.models.reports import PowerLawFit


def fit_power_law(x, y) -> PowerLawFit:
    """Fit y = C * x^slope by least squares on (log x, log y).

    Raises:
        FitFailure: fewer than two points, non-positive or non-finite data, or a degenerate x range.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise FitFailure(f"Need matching arrays with at least two points, got {x.size} and {y.size}")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(x <= 0) or np.any(y <= 0):
        raise FitFailure("Power-law fit needs positive finite data")
    log_x, log_y = np.log(x), np.log(y)
    if np.ptp(log_x) == 0:
        raise FitFailure("All abscissae coincide")
    result = linregress(log_x, log_y)
    residuals = log_y - (result.intercept + result.slope * log_x)
    return PowerLawFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        residual=float(np.sqrt(np.mean(residuals**2))),
        r_value=float(result.rvalue),
        slope_stderr=float(result.stderr),
    )
