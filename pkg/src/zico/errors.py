"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument values or mismatched shapes."""


class DataError(ValueError):
    """Count data that is negative, non-integer or otherwise malformed."""


class DomainError(ArithmeticError):
    """Matrix outside the M-matrix domain of the log-det acyclicity function."""


class TrainingAborted(RuntimeError):
    """Raised when a fit cannot continue (non-finite objective, stuck steps).

    ``trace`` carries the per-epoch rows recorded before the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
