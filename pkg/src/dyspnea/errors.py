"""Exception hierarchy shared by every stage of the pipeline."""


class DyspneaError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DyspneaError, ValueError):
    """Malformed or physically invalid input data."""


class ConfigError(DyspneaError, ValueError):
    """A configuration value violates its invariants."""


class UnusableEpochError(DataError):
    """An epoch cannot yield features.

    ``reason`` is a short machine-readable code that ends up in the
    drop log (``zero_variance``, ``few_extrema``, ``few_cycles``, ...).
    """

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


class ModelFormatError(DyspneaError, ValueError):
    """A model file is truncated, corrupt or of an unsupported version."""
