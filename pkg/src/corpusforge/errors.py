"""Exception types shared across the toolchain.

Every error raised on purpose by this package derives from CorpusForgeError,
so callers can catch one base class at process boundaries (the CLI does).
"""

from __future__ import annotations


class CorpusForgeError(Exception):
    """Base class for all errors raised by corpusforge."""


class ParseError(CorpusForgeError):
    """Malformed input that cannot be interpreted (source lists, config files)."""


class DuplicateIdError(ParseError):
    """Two source entries share the same id."""


class NetworkError(CorpusForgeError):
    """A transport failure or non-retryable HTTP error."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class RateLimitedError(NetworkError):
    """Retry budget exhausted while the server kept answering 429/503."""


class ChecksumMismatchError(CorpusForgeError):
    """A stored payload no longer matches the hash recorded for it."""

    def __init__(self, source_id: str, expected: str, actual: str):
        super().__init__(
            f"stored payload for {source_id!r} does not match its recorded hash "
            f"(expected {expected}, got {actual})"
        )
        self.source_id = source_id
        self.expected = expected
        self.actual = actual


class EncodingError(CorpusForgeError):
    """Input bytes could not be decoded as UTF-8 text."""


class EmptyDocumentError(CorpusForgeError):
    """A document with no blocks was handed to a stage that needs content."""


class TemplateError(CorpusForgeError):
    """A prompt template does not contain exactly one $TEXT placeholder."""


class ContextOverflowError(CorpusForgeError):
    """A prompt would exceed the endpoint's context window; nothing was sent."""

    def __init__(self, message: str, est_tokens: int, limit: int):
        super().__init__(message)
        self.est_tokens = est_tokens
        self.limit = limit


class EndpointError(CorpusForgeError):
    """The generation endpoint answered with an HTTP error status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"endpoint returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ManifestError(CorpusForgeError):
    """A fine-tune manifest violates one of its invariants."""
