"""Exception hierarchy shared across the toolkit."""


class ThamesError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ThamesError):
    """Invalid or incomplete configuration."""


class InputError(ThamesError):
    """Caller supplied invalid input (empty text, bad dimensions, ...)."""


class CorpusError(ThamesError):
    """Corpus ingestion failed (unreadable file, no extractable text)."""


class TransportError(ThamesError):
    """Backend unreachable or failing after all retries."""


class ContentError(ThamesError):
    """Backend refused the request; carries the refusal text."""


class SchemaError(ThamesError):
    """Model output did not match the required JSON schema after repairs.

    The raw completion is attached for audit.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ScoringError(ThamesError):
    """Scorer endpoint failed or returned an unusable value."""


class GenerationError(ThamesError):
    """A generation stage could not produce the required output."""


class BudgetExceeded(ThamesError):
    """Token budget exhausted; run aborted before the next stage."""
