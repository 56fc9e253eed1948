"""Exception types shared across the package."""


class FeatOptError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FeatOptError, ValueError):
    """Array shapes or lengths do not line up."""


class InvalidInputError(FeatOptError, ValueError):
    """Input values violate a precondition (non-finite, negative, empty...)."""


class InvalidArgumentError(FeatOptError, ValueError):
    """A scalar argument is out of its documented range."""


class InvalidBatchError(FeatOptError, ValueError):
    """A subspace batch violates its invariants (duplicate ids, wrong size)."""


class ConfigError(FeatOptError, ValueError):
    """A configuration object is internally inconsistent."""


class LabelError(FeatOptError, ValueError):
    """A class label is outside [0, n_classes)."""


class ContractError(FeatOptError, RuntimeError):
    """Caller broke an internal protocol (stale cache, missing score...)."""


class DivergenceError(FeatOptError, RuntimeError):
    """Training produced a non-finite loss."""


class DataLoadError(FeatOptError, ValueError):
    """A CSV file could not be parsed into a dataset."""


class CannotScoreError(FeatOptError, ValueError):
    """Feature scoring is undefined (fewer than two active features)."""
