"""Exception types shared across the package.

Every error that a CLI run can surface maps to one of these classes so the
command layer can assign distinct messages and exit codes.
"""

from __future__ import annotations


class ConflocError(Exception):
    """Base class for all errors raised by this package."""


class ConfigMismatchError(ConflocError):
    """Parsed logs and template store were produced under different parser configs."""


class CorruptStoreError(ConflocError):
    """Store file is truncated, has bad magic, fails its checksum, or is inconsistent."""


class VersionMismatchError(ConflocError):
    """Store file declares an unsupported format version."""


class MalformedConfigError(ConflocError):
    """A settings or catalog file could not be parsed."""

    def __init__(self, message: str, locus: str | None = None):
        super().__init__(message if locus is None else f"{message} ({locus})")
        self.locus = locus


class DuplicatePropertyError(ConflocError):
    """The same property name appears twice in one settings file."""


class EmptySegmentError(ConflocError):
    """A property name contains an empty period-separated segment."""


class UniverseTooSmallError(ConflocError):
    """The property catalog is too small to draw a trigger plus nine decoys."""


class EmptyDenominatorError(ConflocError):
    """No test case flowed into the selected phase; accuracy is undefined."""


class NotApplicableError(ConflocError):
    """False-positive rate is undefined when the ground truth was not suspected."""


class BackendError(ConflocError):
    """Base class for LLM backend failures."""


class RateLimitedError(BackendError):
    """Remote endpoint kept rate-limiting past the retry budget."""


class NetworkFailureError(BackendError):
    """Remote endpoint unreachable or serving errors past the retry budget."""


class AuthFailureError(BackendError):
    """Remote endpoint rejected the credentials; not retried."""


class MissingFixtureError(BackendError):
    """Mock backend has no scripted response for the requested task."""


class InconclusiveError(ConflocError):
    """Indirect inference produced no valid suspect; no trigger could be named."""
