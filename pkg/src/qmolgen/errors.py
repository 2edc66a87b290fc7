"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data problems exit 2,
and invariant violations exit 3.
"""


class QmolgenError(Exception):
    """Base class for all package errors."""


class ValidationError(QmolgenError):
    """A caller-supplied argument or configuration is malformed."""


class ResourceLimitError(QmolgenError):
    """A request exceeds a hard resource guard (e.g. qubit count)."""


class DataError(QmolgenError):
    """An input file or dataset is malformed or unusable."""


class TokenizationError(QmolgenError):
    """A string cannot be tokenized against the vocabulary.

    ``offset`` is the 0-based character position where matching failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class InvariantError(QmolgenError):
    """A runtime self-check or invariant failed."""
