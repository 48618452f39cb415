"""Exception hierarchy for pricebounds."""


class PriceBoundsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PriceBoundsError, ValueError):
    pass


class OutOfDomainError(InvalidInputError):
    pass


class FormatError(PriceBoundsError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyBinError(PriceBoundsError, ValueError):
    pass


class NoDataError(PriceBoundsError, ValueError):
    pass


class InsufficientDataError(PriceBoundsError, ValueError):
    pass


class InfeasibleSupportError(PriceBoundsError, ValueError):
    pass


class DegenerateModelError(PriceBoundsError, RuntimeError):
    pass


class InvalidProblemError(PriceBoundsError, ValueError):
    pass


class ConvergenceError(PriceBoundsError, RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan")):
        self.residual = residual
        super().__init__(f"{message} (final KKT residual {residual:.3e})")


class UndefinedMetricError(PriceBoundsError, ValueError):
    pass
