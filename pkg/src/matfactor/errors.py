"""Exception hierarchy shared across the package.

Every error raised by the library derives from ``MatfactorError`` so that
callers (in particular the command line driver) can map failures onto a
small set of exit codes: usage problems, data problems and numerical
problems.
"""

from __future__ import annotations


class MatfactorError(Exception):
    """Base class for all library errors."""


class InvalidInput(MatfactorError):
    """Arguments violate a documented precondition (shape, range, finiteness)."""


class DataError(MatfactorError):
    """Problems with externally supplied data files or series."""


class NumericalError(MatfactorError):
    """A computation cannot proceed for numerical reasons."""


class RankDeficient(NumericalError):
    """A basis matrix does not have full column rank."""


class InsufficientData(DataError):
    """The series is too short for the requested statistic."""


class SingularCovariance(NumericalError):
    """A covariance matrix required to be invertible is numerically singular."""


class DegenerateComponent(DataError):
    """A component series has (numerically) zero variance."""


class DegenerateSeries(DataError):
    """A scalar series is constant, so a regression on its past is undefined."""


class DegenerateSubspace(NumericalError):
    """Two subspaces required to overlap are numerically orthogonal."""


class SingularBracket(NumericalError):
    """A bracket matrix inverted during factor recovery is numerically singular."""


class OrderZero(MatfactorError):
    """Order selection returned zero factors and the caller forbade a fallback."""


class ParseError(DataError):
    """A data file cannot be parsed."""


class DuplicateEntry(DataError):
    """A panel file contains the same (t, row, col) triple twice."""


class AllMissing(DataError):
    """A series to impute contains no observed values at all."""
