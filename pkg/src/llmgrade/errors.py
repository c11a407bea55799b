"""Exception hierarchy shared by every stage of the grading pipeline."""

from __future__ import annotations


class GradingError(Exception):
    """Base class for all errors raised by llmgrade."""


class ConfigurationError(GradingError):
    """Bad endpoint, credentials, rubric or run configuration. Never retried."""


class TransientError(GradingError):
    """Transport failure that survived every retry."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class CacheMissError(GradingError):
    """Offline mode asked for a completion that is not in the cache."""


class FixtureMissError(GradingError):
    """The mock provider has no fixture matching a request."""


class ResponseFormatError(GradingError):
    """A model reply could not be turned into a structured value.

    ``raw`` keeps the offending text so retry loops and reports can show it.
    """

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class ParseError(ResponseFormatError):
    """No balanced JSON object in the reply."""


class SchemaError(ResponseFormatError):
    """A JSON object was found but fields are missing or mistyped."""


class EnsembleFailure(GradingError):
    def __init__(self, submission_id: str, valid_count: int, min_valid: int):
        super().__init__(
            f"submission {submission_id}: only {valid_count} valid samples "
            f"(need {min_valid})"
        )
        self.submission_id = submission_id
        self.valid_count = valid_count
        self.min_valid = min_valid


class SummarizationFailure(ResponseFormatError):
    pass


class ProbabilityExtractionError(GradingError):
    """No returned token alternative matched a member of the score set."""


class InsufficientDataError(GradingError):
    pass


class IncompleteMatrixError(GradingError):
    def __init__(self, gaps: list[tuple[str, str]]):
        shown = ", ".join(f"({s}, {r})" for s, r in gaps[:20])
        more = f" and {len(gaps) - 20} more" if len(gaps) > 20 else ""
        super().__init__(f"rating matrix has {len(gaps)} missing cells: {shown}{more}")
        self.gaps = gaps


class DegenerateMatrixError(GradingError):
    """ICC is undefined: no between-subject and no residual variance."""


class KeyMismatchError(GradingError):
    def __init__(self, missing_human: list[str], missing_model: list[str]):
        parts = []
        if missing_human:
            parts.append(f"no human score for: {', '.join(missing_human)}")
        if missing_model:
            parts.append(f"no model score for: {', '.join(missing_model)}")
        super().__init__("; ".join(parts))
        self.missing_human = missing_human
        self.missing_model = missing_model
