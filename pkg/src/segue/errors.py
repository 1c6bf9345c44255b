"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SegueError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SegueError, ValueError):
    """A caller-supplied parameter is out of its documented range."""


class InputError(SegueError, ValueError):
    """Input data violates a documented precondition (shape, finiteness, ...)."""


class ParseError(SegueError, ValueError):
    """A score document could not be parsed.

    ``location`` points at the offending line or field, e.g. ``"line 3"``
    or ``"segments[1].duration_seconds"``.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


class CompileError(SegueError):
    """A score passed validation but cannot be laid out as a frame schedule."""


class BackendError(SegueError):
    """Base class for failures on the backend boundary."""


class ProtocolError(BackendError):
    """The wire conversation violated the protocol contract.

    ``code`` carries the remote error code when the failure was reported by
    the backend ("bad_request", "internal", ...).
    """

    def __init__(self, message: str, code: str | None = None):
        self.code = code
        super().__init__(message)


class HandshakeError(ProtocolError):
    """Handshake failed: version mismatch, malformed reply, or refusal."""


class CapacityError(BackendError):
    """The backend refused an operation for resource reasons."""


class UnsupportedOperationError(BackendError):
    """The backend does not implement the requested operation."""


class BackendTimeoutError(BackendError):
    """The backend did not reply within the configured timeout."""


class EngineError(SegueError):
    """The decoding loop hit an unrecoverable inconsistency."""


class PlanError(SegueError):
    """Planning via the language-model endpoint failed."""
