"""Exception hierarchy shared across the package."""


class EmaBoostError(Exception):
    """Base class for all package errors."""


class ConfigError(EmaBoostError, ValueError):
    """Invalid configuration or invalid arguments."""


class DataError(EmaBoostError, ValueError):
    """Input data violates a schema or structural requirement."""


class SchemaViolation(DataError):
    """A feature row does not fit the declared schema."""


class SchemaMismatch(DataError):
    """Two datasets that must share a schema do not."""


class InsufficientDataError(DataError):
    """Not enough rows to build targets or split."""


class EmptyStudyError(DataError):
    """Every individual was excluded by filtering."""


class CvInfeasibleError(DataError):
    """Cross-validation cannot be carried out for this data."""


class UndefinedMetricError(DataError):
    """Metric is undefined, e.g. ROC-AUC with a single class."""


class ModelFormatError(EmaBoostError, ValueError):
    """A model document is corrupted or malformed."""


class UnsupportedVersionError(ModelFormatError):
    """A model document carries a version this package cannot read."""
