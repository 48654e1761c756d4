"""Exception types shared across the package.

The CLI maps these onto stable exit codes: config/parameter problems exit 2,
data/ingestion problems exit 3, training divergence exits 4, checkpoint and
other I/O failures exit 5.
"""


class BusmtlError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(BusmtlError):
    """Tensor shapes incompatible with the requested operation."""


class ParameterError(BusmtlError):
    """An operation parameter is outside its valid range."""


class ConfigError(ParameterError):
    """Invalid configuration (file, flags, or config object fields)."""


class DataError(BusmtlError):
    """Input data violates a contract (non-binary mask, bad label, ...)."""


class IngestionError(DataError):
    """A dataset directory or file could not be read as expected."""


class SplitError(DataError):
    """The dataset cannot be split as requested."""


class EvaluationError(BusmtlError):
    """Metrics requested on an empty or malformed evaluation set."""


class DivergenceError(BusmtlError):
    """Training produced a non-finite loss or gradient."""


class CheckpointError(BusmtlError):
    """A checkpoint file is missing, truncated, or inconsistent."""
