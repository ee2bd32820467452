"""Exception hierarchy shared by all modules.

Each family maps to one CLI exit code (see ``parcelcast.cli``).
"""


class ParcelcastError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(ParcelcastError):
    """Invalid configuration, network spec or parameters."""

    exit_code = 2


class DataError(ParcelcastError):
    """Event log content is missing, inconsistent or insufficient."""

    exit_code = 3


class ColdStartError(DataError):
    """Not enough history before the observation time to build a feature."""


class SequencingError(DataError):
    """Observation times are not strictly increasing by one interval."""


class EvaluationError(DataError):
    """A metric is undefined on the given records."""


class TrainingError(ParcelcastError):
    """Model fitting failed (empty data, divergence)."""

    exit_code = 4


class ShapeError(ValueError):
    """Array dimensions do not match the model or schema."""
