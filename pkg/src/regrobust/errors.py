"""Exception types shared across the package."""


class RegrobustError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RegrobustError, ValueError):
    """Array shape does not match what an operation expects."""


class NonFiniteError(RegrobustError, ValueError):
    """An input carried NaN or infinity where finite values are required."""


class ConfigError(RegrobustError, ValueError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(RegrobustError, ValueError):
    """A dataset file or dataset operation is invalid."""


class TrainingDiverged(RegrobustError, RuntimeError):
    """Training produced a non-finite loss or parameters."""


class SearchFailed(RegrobustError, RuntimeError):
    """Hyperparameter search produced no usable trial.

    Carries the full trial log so callers can inspect what was attempted.
    """

    def __init__(self, message, trials):
        super().__init__(message)
        self.trials = trials
