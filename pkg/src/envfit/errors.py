"""Exception types shared across the package."""


class EnvfitError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(EnvfitError):
    """Input violates a precondition (non-finite entries, bad sizes, bad flags)."""


class DimensionMismatch(EnvfitError):
    """Two operands have incompatible shapes."""


class NotPositiveDefinite(EnvfitError):
    """A matrix required to be positive definite failed factorization."""


class RankDeficient(EnvfitError):
    """A matrix required to have full column rank does not."""


class SingularProjection(EnvfitError):
    """A projected matrix G'MG is numerically singular."""


class IllConditionedContext(EnvfitError):
    """A row-update context could not be formed (near-singular anchor block)."""


class PivotFailure(EnvfitError):
    """Partial pivoting produced a (near) singular anchor block."""


class NumericalFailure(EnvfitError):
    """An iterative solver produced unusable (non-finite) quantities."""


class SingularDesign(EnvfitError):
    """The predictor sample covariance is singular."""


class FoldTooSmall(EnvfitError):
    """A cross-validation training fold is too small to compute moments."""


class CsvParseError(EnvfitError):
    """A CSV cell could not be parsed as a number."""
