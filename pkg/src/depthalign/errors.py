"""Exception hierarchy shared by the library and the CLI.

The CLI maps each branch to a fixed exit code: configuration problems
exit 2, file/format problems exit 3, numeric failures exit 4.
"""


class DepthAlignError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(DepthAlignError):
    """Invalid configuration, arguments, or type invariant violations."""

    exit_code = 2


class DataError(DepthAlignError):
    """File I/O and format errors (missing, malformed, truncated files)."""

    exit_code = 3


class NumericError(DepthAlignError):
    """Numeric failures: empty masks, singular systems, non-finite values."""

    exit_code = 4


class EmptyMaskError(NumericError):
    """An operation that averages over a validity mask got |M| = 0."""


class SingularFitError(NumericError):
    """The 2x2 normal system of a least-squares fit is singular."""

    def __init__(self, message, image_id=None):
        if image_id is not None:
            message = f"{message} (image {image_id!r})"
        super().__init__(message)
        self.image_id = image_id


class NonFiniteError(NumericError):
    """A value that must be finite is NaN or infinite."""
