"""Exception types shared across the package."""


class ZildaError(Exception):
    """Base class for package errors."""


class DomainError(ZildaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataValidationError(ZildaError, ValueError):
    """Input data violate the dataset contract (shape, type, range, NaN)."""


class ConvergenceError(ZildaError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    Carries the best iterate found so far in ``best`` and the residual
    at that iterate in ``residual``.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class StratificationError(ZildaError, ValueError):
    """A cross-validation fold lost one of the classes; retry with a new seed."""
