"""Exception hierarchy.

Every error raised on purpose by the package derives from ``EpicastError``
so callers (and the CLI) can catch them in one place.
"""


class EpicastError(Exception):
    """Base class for all package errors."""


class ConfigError(EpicastError, ValueError):
    pass


# data ingestion / preprocessing
class EmptyFileError(EpicastError):
    pass


class MalformedRowError(EpicastError):
    pass


class MissingDateError(EpicastError):
    pass


class NegativeValueError(EpicastError):
    pass


class ZeroDensityError(EpicastError, ValueError):
    pass


class ConstantFeatureError(EpicastError, ValueError):
    pass


class OutOfRangeError(EpicastError, ValueError):
    pass


class SeriesTooShortError(EpicastError, ValueError):
    pass


# model / training
class ShapeMismatchError(EpicastError, ValueError):
    pass


class EmptyDatasetError(EpicastError, ValueError):
    pass


class DivergedLossError(EpicastError, ArithmeticError):
    pass


# forecasting
class ContextLengthMismatchError(EpicastError, ValueError):
    pass


class NonFinitePredictionError(EpicastError, ArithmeticError):
    pass


# ensembling / metrics
class EmptyMemberListError(EpicastError, ValueError):
    pass


class ZeroRmseError(EpicastError, ValueError):
    pass


class MemberMismatchError(EpicastError, ValueError):
    pass


class DateMisalignmentError(EpicastError, ValueError):
    pass


class ZeroOriginalError(EpicastError, ZeroDivisionError):
    pass


class LengthMismatchError(EpicastError, ValueError):
    pass


class PartialFailureError(EpicastError):
    """A member model failed inside an experiment run."""

    def __init__(self, member: str, cause: BaseException):
        super().__init__(f"member {member!r} failed: {type(cause).__name__}: {cause}")
        self.member = member
        self.cause = cause
