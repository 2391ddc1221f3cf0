"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LevyGQLError(Exception):
    """Base class for every error raised by the package."""


class NonPositiveDefinite(LevyGQLError, ValueError):
    """The local covariance V(x, beta) failed a symmetric factorization."""


class InvalidDuration(LevyGQLError, ValueError):
    pass


class MomentsUnavailable(LevyGQLError):
    """The driver's jump law has no closed-form mixed moments."""


class NonFinite(LevyGQLError, FloatingPointError):
    """A simulated state became inf or nan (explosion)."""


class GridMismatch(LevyGQLError, ValueError):
    pass


class DomainExceeded(LevyGQLError, ValueError):
    """A parameter point fell outside the closed parameter box."""


class AllStartsFailed(LevyGQLError, RuntimeError):
    pass


class SingularInformation(LevyGQLError, ArithmeticError):
    """A Fisher-type block is numerically singular (condition number > 1e12)."""


class Unsupported(LevyGQLError, NotImplementedError):
    pass
