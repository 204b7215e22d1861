"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ClawEnvKitError(Exception):
    """Base class for all package errors."""


class ParseError(ClawEnvKitError):
    """A task document could not be parsed into a TaskConfig.

    Carries optional field/line context for operator-facing messages.
    """

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        ctx = []
        if field:
            ctx.append(f"field={field}")
        if line is not None:
            ctx.append(f"line={line}")
        super().__init__(message + (f" ({', '.join(ctx)})" if ctx else ""))


class ClassificationError(ClawEnvKitError):
    """A task config has neither services nor files; its kind is undecidable."""


class GenerationError(ClawEnvKitError):
    """The provider returned unusable output after the allowed reprompt."""


class TaskDiscarded(ClawEnvKitError):
    """Task generation exhausted its 3 attempts; carries per-attempt issues."""

    def __init__(self, message: str, attempts: list):
        self.attempts = attempts
        super().__init__(message)


class ServiceRejected(ClawEnvKitError):
    """Service-spec generation exhausted validation retries."""


class ServiceDeclined(ClawEnvKitError):
    """The user declined the generated service at the confirm prompt."""


class FixtureError(ClawEnvKitError):
    """A fixture record could not be produced conforming to its schema."""


class StartError(ClawEnvKitError):
    """The mock service runtime failed to start."""


class SandboxError(ClawEnvKitError):
    """Sandbox initialization failed (e.g. service health wait exhausted)."""


class EgressBlocked(ClawEnvKitError):
    """An outbound request was refused by the sandbox egress policy."""


class ProviderError(ClawEnvKitError):
    """An LLM provider call failed after exhausting retries.

    ``status`` is the last HTTP status observed, or None for
    timeout/connection failures.
    """

    def __init__(self, message: str, *, status: int | None = None, attempts: int = 1):
        self.status = status
        self.attempts = attempts
        super().__init__(message)
