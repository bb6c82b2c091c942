"""Exception hierarchy shared by every module.

Each exception carries ``exit_code`` so the command-line front end can map a
failure to its process status without a lookup table.
"""


class TrackingError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ValidationError(TrackingError, ValueError):
    """Malformed input; ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class NonSquare(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class Singular(TrackingError, ArithmeticError):
    pass


class TooLarge(TrackingError):
    pass


class NotControllable(TrackingError):
    exit_code = 4


class AllZeroOutput(TrackingError):
    exit_code = 4


class InsufficientRegularity(TrackingError):
    exit_code = 4


class CompatibilityViolation(TrackingError):
    exit_code = 4


class ZeroCoefficient(TrackingError):
    exit_code = 4


class NoConvergence(TrackingError, RuntimeError):
    exit_code = 3

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
