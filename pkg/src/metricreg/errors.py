"""Exception types shared across the package."""


class MetricRegError(Exception):
    """Base class for all metricreg errors."""


class DimensionError(MetricRegError, ValueError):
    """Operands have incompatible shapes or grid sizes."""


class NotPositiveDefinite(MetricRegError, ValueError):
    """A matrix required to be SPD is not."""


class NotSymmetric(MetricRegError, ValueError):
    """A matrix required to be symmetric is not."""


class EmptyInput(MetricRegError, ValueError):
    """An operation received an empty collection."""


class IllPosedObjective(MetricRegError, ValueError):
    """Total weight is nonpositive, so the weighted mean is unbounded below."""


class BadObjective(MetricRegError, ValueError):
    """An objective returned a non-finite value at its starting point."""


class SpecMismatch(MetricRegError, ValueError):
    """Incompatible combination of link form, flavor, space, or model id."""


class DegenerateSigma(MetricRegError, ValueError):
    """A cross-moment required to be nonzero vanished."""


class BadData(MetricRegError, ValueError):
    """Input data contain non-finite or otherwise invalid entries."""


class FitFailed(MetricRegError, RuntimeError):
    """Model fitting failed after exhausting all optimizer restarts."""


class InfeasibleSpec(MetricRegError, ValueError):
    """Simulation constants violate the positivity constraints of a design."""


class DataError(MetricRegError, ValueError):
    """A data file is malformed; the message names the offending row."""


class ConfigError(MetricRegError, ValueError):
    """A config document could not be parsed."""


class ValidationError(MetricRegError, ValueError):
    """A config document parsed but failed semantic validation."""
