# errors.py


class FaanError(Exception):
    """Base class for every error raised by faan_cov."""


class InvalidInputError(FaanError, ValueError):
    """Raised for malformed shapes, non-finite entries or out-of-range arguments."""


class MatrixFormatError(InvalidInputError):
    """Raised when a matrix or returns file cannot be parsed."""


class InfeasibleModelError(FaanError):
    """Raised when a model point leaves the feasible set (sigma^2 <= 0, R not PD)."""


class SingularMatrixError(FaanError):
    """Raised when a matrix that must be inverted is numerically singular."""


class RankDeficientError(FaanError):
    """Raised when a fit has fewer active factors than the application needs."""


class InsufficientDataError(FaanError):
    """Raised when there is not enough history for the requested window."""
