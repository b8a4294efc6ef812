"""Exception hierarchy shared across the toolchain."""


class ArxivRollError(Exception):
    """Base class for every domain error raised by this package."""


class RetryableFetchError(ArxivRollError):
    """Transient network failure; the caller may retry."""


class FeedParseError(ArxivRollError):
    """Malformed Atom feed. Carries the offending byte offset when known."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class ConflictError(ArxivRollError):
    """An identifier is already taken (article or benchmark)."""


class IntegrityError(ArxivRollError):
    """Stored content no longer matches its recorded digest."""


class EmptyBenchmarkError(ArxivRollError):
    """Generation found no eligible fragments at all."""


class LifecycleError(ArxivRollError):
    """Benchmark lifecycle rule violated (unknown id, expired reuse, ...)."""


class AuthError(ArxivRollError):
    """Endpoint rejected our credentials; fatal for the whole model run."""


class QueryFailedError(ArxivRollError):
    """A single model query failed after exhausting retries."""


class RunAbortedError(ArxivRollError):
    """Evaluation aborted as unreliable (too many transport failures)."""


class UndefinedCorrelationError(ArxivRollError):
    """Correlation undefined for this input (constant vector / all ties)."""
