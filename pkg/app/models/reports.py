"""
Report models returned by the analysis routines and serialized by the CLI.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class Report(BaseModel):
    """Base for immutable reports."""

    model_config = ConfigDict(frozen=True)


class PowerLawFit(Report):
    """Least-squares line through (log x, log y)."""

    slope: float
    intercept: float
    residual: float = Field(..., description="Root mean square of the log residuals")
    r_value: float
    slope_stderr: float


class FieldResult(Report):
    """An evaluated field statistic with its provenance."""

    field_descriptor: str
    method: Literal["exact-kernel", "monte-carlo"]
    value: float
    stderr: Optional[float] = None
    N: Optional[int] = None
    seed: Optional[int] = None
    replicas: Optional[int] = None


class CovarianceReport(FieldResult):
    """Space-time covariance E[X(t) X(s)] of a field, with the exact value when one exists."""

    t: float
    s: float = 0.0
    k: int = Field(..., ge=0, description="Order of the field")
    exact: Optional[float] = None
    z_score: Optional[float] = None

    @property
    def agrees(self) -> bool:
        return self.z_score is None or abs(self.z_score) <= 4.0


class DualityCheck(Report):
    """Monte Carlo E_eta[D(xi, eta_t)] against sum_xi' p_t(xi, xi') D(xi', eta)."""

    xi: str
    t: float
    lhs: float
    rhs: float
    stderr: float
    z_score: float
    replicas: int
    seed: int


class MomentCheck(Report):
    """Empirical factorial moment E[(eta)_j] against rho^j."""

    order: int
    mean: float
    stderr: float
    expected: float
    z_score: float


class SiteMoments(Report):
    site: tuple[int, ...]
    rho: float
    moments: list[MomentCheck]


class RateFit(Report):
    """Boltzmann-Gibbs double integrals along an N grid and their fitted decay exponent."""

    N_grid: list[int]
    values: list[float]
    k: int
    d: int
    slope: float
    intercept: float
    residual: float
    alpha: float = Field(..., description="Theoretical exponent 2(k-1)d / (2 + (k-1)d)")
    passed: bool


class DecayFit(Report):
    """Fitted decay of sup_xi' p_t(xi, xi') against 1 + t."""

    t_grid: list[float]
    sups: list[float]
    particles: int
    d: int
    slope: float
    residual: float
    threshold: float
    passed: bool


class LCLTRow(Report):
    t: float
    deviation: float
    argmax: tuple[int, ...]
    scaled: float = Field(..., description="deviation * sqrt(t)")


class LCLTReport(Report):
    rows: list[LCLTRow]
    M: float
    slope: float
    residual: float
    reference_slope: float = Field(default=-0.5, description="slope of the generic c / sqrt(t) bound")
    faster_than_reference: bool = Field(..., description="slope below the reference by more than 0.15")
    bound_constant: float = Field(..., description="max over the grid of deviation * sqrt(t)")
    decreasing: bool
    passed: bool


class ScalingRow(Report):
    N: int
    covariance: float
    rescaled: float
    limit: float
    deviation: float


class ScalingReport(Report):
    field_descriptor: str
    t: float
    k: int
    d: int
    rows: list[ScalingRow]
    limit: float
    decreasing: bool
    passed: bool
