"""Exception hierarchy shared across the package.

Contract violations (bad shapes, mismatched sizes, invalid configs) raise
ContractError. File-format problems raise a ParseError subclass that names
the byte offset where the problem was detected, so corrupt inputs are
diagnosable without a hex editor.
"""


class SemmatchError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(SemmatchError, ValueError):
    """A precondition or type invariant was violated."""


class ParseError(SemmatchError):
    """A binary or text artifact could not be parsed."""

    def __init__(self, message: str, *, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        prefix = f"{path}: " if path else ""
        suffix = f" (at byte offset {offset})" if offset is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")


class BadMagicError(ParseError):
    """The file does not start with the expected magic bytes."""


class UnsupportedVersionError(ParseError):
    """The file declares a format version this build does not understand."""


class TruncatedPayloadError(ParseError):
    """The payload ends before the header-declared arrays are complete."""


class NonFiniteValueError(ParseError):
    """A stored float array contains NaN or infinity."""


class MissingTensorError(ParseError):
    """A weights file lacks a tensor the model requires."""


class TensorShapeError(ParseError):
    """A stored tensor's shape disagrees with the declared config."""


class CacheCorruptionError(SemmatchError):
    """A cache entry exists on disk but cannot be decoded."""

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"cache entry {key} is corrupt: {reason}")


class InsufficientDataError(SemmatchError):
    """Too few correspondences for the requested estimation."""


class DegeneratePoseError(SemmatchError):
    """No pose candidate passed the cheirality test (e.g. zero baseline)."""


class TrainingDivergedError(SemmatchError):
    """The training loss became non-finite."""
