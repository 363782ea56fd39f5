"""Exception types shared across the package."""


class HardivoxError(Exception):
    """Base class for all package errors."""


class ValidationError(HardivoxError, ValueError):
    """Input violates a documented invariant."""


class FormatError(ValidationError):
    """On-disk data does not match its declared layout."""


class NumericalError(HardivoxError, ArithmeticError):
    """A numerical procedure cannot produce a trustworthy result."""


class TrainingError(NumericalError):
    """Classifier training failed to converge or received degenerate data."""
