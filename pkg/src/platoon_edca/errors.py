"""Exception types shared across the package."""


class PlatoonEdcaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PlatoonEdcaError, ValueError):
    """Invalid parameter set or configuration.

    ``problems`` holds every violation found, as ``(field_path, message)``.
    """

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class NumericError(PlatoonEdcaError, ArithmeticError):
    """A numerical stage could not produce a valid result."""


class InvalidEquilibriumError(NumericError):
    pass


class NoRealRootError(NumericError):
    pass


class RootFindingError(NumericError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateRegimeError(NumericError):
    pass


class ConvergenceError(NumericError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class TruncationError(NumericError):
    pass


class FitError(NumericError):
    pass
