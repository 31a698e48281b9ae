"""Exception types shared across the package."""


class DeepSelectiveError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DeepSelectiveError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(DeepSelectiveError):
    """A scalar argument (temperature, fraction, gain, ...) is out of range."""


class NumericalError(DeepSelectiveError):
    """A non-finite value appeared where a finite one is required."""


class SelectionError(DeepSelectiveError):
    """The selected feature support is empty or otherwise unusable."""


class DataError(DeepSelectiveError):
    """A dataset is malformed: bad cells, missing classes, bad labels."""


class ConfigError(DeepSelectiveError):
    """A run configuration is invalid (bad flag combination, bad spec)."""


class ArtifactError(DeepSelectiveError):
    """A stored artifact (checkpoint, dataset cache) is missing or incompatible."""


class MetricError(DeepSelectiveError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""
