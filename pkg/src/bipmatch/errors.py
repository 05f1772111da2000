"""Exception hierarchy."""


class BipmatchError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(BipmatchError, ValueError):
    pass


class InvalidParameterError(BipmatchError, ValueError):
    pass


class ModelError(BipmatchError, ValueError):
    """Parameters do not fit the requested model family."""


class CapacityError(BipmatchError, ValueError):
    """Exhaustive computation requested beyond its hard size cap."""


class DegenerateModelError(BipmatchError, ValueError):
    pass


class FactorizationError(BipmatchError, ValueError):
    """Matrix is not positive definite; the message names the failing leading minor."""


class InsufficientDataError(BipmatchError, ValueError):
    pass


class DomainError(BipmatchError, ValueError):
    pass


class SeedError(BipmatchError, ValueError):
    pass


class MatchError(BipmatchError, RuntimeError):
    """Every tuning parameter failed during matching."""


class DataFormatError(BipmatchError, ValueError):
    """Malformed input file; the message carries the offending line number."""


class ConfigError(BipmatchError, ValueError):
    pass


class UndefinedMetricError(BipmatchError, ValueError):
    """Metric has no defined value for the given input (for example an empty graph)."""


class ConvergenceWarning(UserWarning):
    pass


class SeparabilityWarning(UserWarning):
    pass
