"""Exception types shared across the package."""


class PsfUnmixError(Exception):
    """Base class for all package errors."""


class DomainError(PsfUnmixError):
    """A parameter lies outside its declared domain (theta range, order, ...)."""


class NumericError(PsfUnmixError):
    """A computation produced a non-finite value."""


class ValidationError(PsfUnmixError):
    """Inconsistent or malformed problem data (grids, supports, line tables)."""


class ConditioningError(PsfUnmixError):
    """Dictionary too ill-conditioned for a reliable pseudo-inverse.

    Carries the reciprocal-condition estimate of G'G in ``rcond``.
    """

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond
