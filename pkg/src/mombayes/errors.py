"""Semantic exceptions shared across the package."""


class MomBayesError(Exception):
    """Base class for all package errors."""


class DomainError(MomBayesError, ValueError):
    """Parameter vector lies outside the compact parameter box."""


class UnsupportedLoss(MomBayesError, ValueError):
    """Operation undefined for the selected loss (e.g. second derivative of |z|)."""


class InvalidK(MomBayesError, ValueError):
    """Block count outside 1 <= k <= N // 2."""


class NonFiniteInput(MomBayesError, ValueError):
    """Input contains NaN or infinity where finite values are required."""


class FlatScore(MomBayesError, ArithmeticError):
    """Every block is saturated: the implicit gradient is undefined."""


class NonDifferentiablePoint(MomBayesError, ArithmeticError):
    """Gradient requested exactly at a kink of the log-density."""


class EmptyData(MomBayesError, ValueError):
    """Estimator called on an empty dataset."""


class ConfigError(MomBayesError, ValueError):
    """Sampler or run configuration violates its invariants."""


class TooManyOutliers(MomBayesError, ValueError):
    """Contamination count exceeds the dataset size."""


class InsufficientDraws(MomBayesError, ValueError):
    """Too few pooled draws to summarize."""


class SingularCovariance(MomBayesError, ValueError):
    """Reference covariance is not symmetric positive definite."""


class ZeroVariance(MomBayesError, ValueError):
    """A column has zero standard deviation and cannot be standardized."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class ParseError(MomBayesError, ValueError):
    """A CSV cell failed numeric parsing; carries row and column."""

    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a number")


class MissingColumn(MomBayesError, KeyError):
    """A named CSV column is absent from the header."""

    def __init__(self, column, available):
        self.column = column
        super().__init__(f"column {column!r} not found; available: {', '.join(available)}")


class OptimizationWarning(UserWarning):
    """No ascent iterate improved on the starting points."""


class AllRejectedWarning(UserWarning):
    """Post-warmup acceptance rate fell below 1%."""
