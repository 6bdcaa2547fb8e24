"""Exception hierarchy shared by every module.

The CLI reports failures as ``<ClassName>: <message>``, so class names are
part of the user-facing contract.
"""


class AesnetError(Exception):
    """Base class for all package errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class IoFailure(AesnetError):
    pass


class ShapeMismatch(AesnetError):
    pass


class InvalidConfig(AesnetError):
    pass


# dataset
class MalformedLine(AesnetError):
    def __init__(self, line_no: int, line: str, reason: str):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no
        self.line = line
        self.reason = reason


class EmptyVotes(AesnetError):
    pass


class EmptyInput(AesnetError):
    pass


class SchemaViolation(AesnetError):
    pass


# numeric core
class DegenerateBatch(AesnetError):
    pass


class LabelOutOfRange(AesnetError):
    pass


# coherence
class UnknownId(AesnetError):
    pass


class InvalidBatchSize(AesnetError):
    pass


class DimensionMismatch(AesnetError):
    pass


class EmptyClass(UserWarning):
    """Warning: one label has no training images, so batches are single-class."""


# training / evaluation
class MissingImage(AesnetError):
    pass


class DecodeFailure(AesnetError):
    pass


class PlanMismatch(AesnetError):
    pass


class NonFiniteLoss(AesnetError):
    pass


class FormatViolation(AesnetError):
    pass


class NameMismatch(AesnetError):
    pass


class EmptySplit(AesnetError):
    pass


# configuration
class UnknownKey(AesnetError):
    pass


class ParseFailure(AesnetError):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
