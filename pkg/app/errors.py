"""Error hierarchy shared by the engine and the command line.

Every error carries the process exit code the CLI reports for it.
"""


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code: int = 3

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ValidationFailure(ToolkitError):
    """Inputs violate a documented precondition."""

    exit_code = 2


class NumericalFailure(ToolkitError):
    """A numerical routine could not reach its declared accuracy."""

    exit_code = 3


class StatisticalFailure(ToolkitError):
    """A statistical acceptance check returned FAIL."""

    exit_code = 4


class EmptySite(ValidationFailure):
    pass


class NonPositiveDensity(ValidationFailure):
    pass


class NegativeDensityInput(ValidationFailure):
    pass


class SupportMismatch(ValidationFailure):
    pass


class NegativeTime(ValidationFailure):
    pass


class NonPositiveTime(ValidationFailure):
    pass


class ArityMismatch(ValidationFailure):
    pass


class ParticleCountMismatch(ValidationFailure):
    pass


class StateSpaceTooLarge(ValidationFailure):
    pass


class InsufficientGrid(ValidationFailure):
    pass


class NotHardcore(ValidationFailure):
    pass


class WindowTooSmall(ValidationFailure):
    pass


class SiteOverflow(ValidationFailure):
    pass


class InvalidKernel(ValidationFailure):
    pass


class InvalidParameter(ValidationFailure):
    pass


class ParseError(ValidationFailure):
    """Malformed local-function expression."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class TruncationFailure(NumericalFailure):
    pass


class QuadratureFailure(NumericalFailure):
    pass


class ConditionViolated(NumericalFailure):
    pass


class FitFailure(NumericalFailure):
    pass
