"""Exception types raised across the package."""


class QdpdError(Exception):
    """Base class for all package errors."""


class ParameterError(QdpdError, ValueError):
    """An argument violates a documented precondition."""


class ResolutionError(QdpdError, ValueError):
    """A pulse cannot be represented at the requested sample rate."""


class SyncError(QdpdError, RuntimeError):
    """Preamble correlation did not produce a trustworthy peak."""

    def __init__(self, message, peak_db=None):
        super().__init__(message)
        self.peak_db = peak_db


class CalibrationError(QdpdError, RuntimeError):
    """No driving pulse was found to calibrate a downconverted channel."""


class IllConditionedError(QdpdError, ArithmeticError):
    """Least-squares design matrix is (numerically) rank deficient."""

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition
