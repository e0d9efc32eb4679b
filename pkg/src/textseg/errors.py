"""Exception types shared across the package.

Every error raised to callers is one of these, so CLI and service layers
can map failures to exit codes / HTTP statuses without string matching.
"""


class TextsegError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TextsegError, ValueError):
    """An input array/value violates a precondition (non-finite, bad shape, bad range)."""


class DegenerateVectorError(TextsegError, ValueError):
    """A vector that must have positive norm is (numerically) zero."""


class ConfigurationError(TextsegError, ValueError):
    """Model/config dimensions or settings are inconsistent."""


class InvalidPromptError(TextsegError, ValueError):
    """Text prompt is empty or otherwise unusable."""


class InvalidBoxError(TextsegError, ValueError):
    """Geometric box prompt is degenerate or out of bounds."""


class EmptyPromptError(TextsegError, ValueError):
    """Neither a geometric nor a semantic prompt was supplied."""


class UnextractablePromptError(TextsegError, ValueError):
    """A filename stem contains no alphabetic category token."""


class EmptyDatasetError(TextsegError, ValueError):
    """A manifest or record list that must be non-empty is empty."""


class ManifestError(TextsegError, ValueError):
    """Dataset manifest construction failed (missing files, count mismatch)."""


class CheckpointError(TextsegError, ValueError):
    """Checkpoint container is missing, corrupt, or from an unknown version."""


class TrainingDivergedError(TextsegError, ArithmeticError):
    """Training hit a non-finite loss; the message names the step and samples."""
