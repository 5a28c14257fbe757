"""Exception and warning types shared across the package."""


class TowerDebiasError(Exception):
    """Base class for all package errors."""


class DataError(TowerDebiasError):
    """Raised for problems with input files, schemas, or row identifiers."""


class NumericalError(TowerDebiasError):
    """Raised when a computation is numerically impossible (singular or degenerate)."""


class ConstantColumnError(NumericalError):
    """Raised when a column has zero variance where positive variance is required."""


class DegenerateSpecError(NumericalError):
    """Raised when a Gaussian population spec has a zero-variance denominator."""


class ConvergenceWarning(UserWarning):
    """Emitted when an iterative fit stops before meeting its tolerance."""
