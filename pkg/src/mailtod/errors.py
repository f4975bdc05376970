"""Exception hierarchy shared across the toolkit.

Every error carries a stable machine-readable ``code`` so the CLI can emit
structured error JSON and tests can match on semantics instead of messages.
"""

from __future__ import annotations


class MailtodError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, "details": self.details}


# --- corpus ---------------------------------------------------------------

class UnreadableFileError(MailtodError):
    code = "UNREADABLE_FILE"


class MalformedRecordError(MailtodError):
    code = "MALFORMED_RECORD"


class MTUnavailableError(MailtodError):
    code = "MT_UNAVAILABLE"


class MTRejectedError(MailtodError):
    code = "MT_REJECTED"


class InsufficientCorpusError(MailtodError):
    code = "INSUFFICIENT_CORPUS"


# --- ontology ---------------------------------------------------------------

class SchemaParseError(MailtodError):
    code = "SCHEMA_PARSE_ERROR"


class DuplicateSlotError(MailtodError):
    code = "DUPLICATE_SLOT"


class UnknownSlotError(MailtodError):
    code = "UNKNOWN_SLOT"


class AmbiguousSlotError(MailtodError):
    code = "AMBIGUOUS_SLOT"

    def __init__(self, message: str, candidates=(), **details):
        super().__init__(message, candidates=list(candidates), **details)
        self.candidates = tuple(candidates)


# --- annotation DSL ---------------------------------------------------------

class AnnotationParseError(MailtodError):
    """Raised on any malformed annotation text; never returns partial items."""

    code = "PARSE_ERROR"

    def __init__(self, message: str, offset: int, expected: str, **details):
        super().__init__(message, offset=offset, expected=expected, **details)
        self.offset = offset
        self.expected = expected


# --- prompts ----------------------------------------------------------------

class MissingPlaceholderError(MailtodError):
    code = "MISSING_PLACEHOLDER"


class TemplateNotFoundError(MailtodError):
    code = "TEMPLATE_NOT_FOUND"


class IndexOutOfRangeError(MailtodError, IndexError):
    code = "INDEX_OUT_OF_RANGE"


# --- LLM orchestration --------------------------------------------------------

class EndpointUnavailableError(MailtodError):
    code = "ENDPOINT_UNAVAILABLE"


class RateLimitedError(MailtodError):
    code = "RATE_LIMITED"


class BadResponseError(MailtodError):
    code = "BAD_RESPONSE"


class NoDialogueFoundError(MailtodError):
    code = "NO_DIALOGUE_FOUND"


class InvalidDialogueError(MailtodError):
    code = "INVALID_DIALOGUE"


class ExcessiveFailuresError(MailtodError):
    code = "EXCESSIVE_FAILURES"


# --- metrics -----------------------------------------------------------------

class MismatchedIdsError(MailtodError):
    code = "MISMATCHED_IDS"


class MismatchedTurnCountsError(MailtodError):
    code = "MISMATCHED_TURN_COUNTS"


# --- review service -----------------------------------------------------------

class NoRatingsError(MailtodError):
    code = "NO_RATINGS"


class UnknownDialogueError(MailtodError):
    code = "UNKNOWN_DIALOGUE"


class UnknownSplitError(MailtodError):
    code = "UNKNOWN_SPLIT"


class NotTestSplitError(MailtodError):
    code = "NOT_TEST_SPLIT"


class GoldValidationError(MailtodError):
    code = "VALIDATION_FAILED"

    def __init__(self, message: str, violations=(), **details):
        super().__init__(
            message,
            violations=[v if isinstance(v, dict) else v.to_dict() for v in violations],
            **details,
        )
