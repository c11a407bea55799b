"""Q-fold sampling of one grading prompt and aggregation of the sampled scores."""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .errors import ConfigurationError, EnsembleFailure, ResponseFormatError, TransientError
from .gateway import DEFAULT_RETRIES, GenerationParams, GradeResponse, ModelEndpoint, ModelGateway, parse_for_style
from .templates import ProblemSpec, PromptStyle, Submission, render_prompt
from .utils import round_half_away

logger = logging.getLogger(__name__)


class Method(str, enum.Enum):
    MODE = "mode"
    MEAN = "mean"
    MEDIAN = "median"


def exact_median(scores: Sequence[int]) -> Fraction:
    s = sorted(scores)
    n = len(s)
    mid = n // 2
    return Fraction(s[mid]) if n % 2 else Fraction(s[mid - 1] + s[mid], 2)


def aggregate_scores(scores: Sequence[int], method: Method | str) -> int:
    """Collapse ensemble scores into one integer grade.

    Mode ties go to the tied value closest to the (unrounded) median of all
    scores, then to the lower value. Mean and even-length medians round half
    away from zero.
    """
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    method = Method(method)
    if method is Method.MEAN:
        return round_half_away(Fraction(sum(scores), len(scores)))
    if method is Method.MEDIAN:
        return round_half_away(exact_median(scores))
    counts = Counter(scores)
    top = max(counts.values())
    tied = [v for v, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    med = exact_median(scores)
    return min(tied, key=lambda v: (abs(v - med), v))


@dataclass(frozen=True)
class EnsembleConfig:
    size: int = 10
    method: Method = Method.MODE
    min_valid: Optional[int] = None
    max_retries: int = DEFAULT_RETRIES

    def __post_init__(self):
        if self.size < 1:
            raise ConfigurationError("ensemble size must be >= 1")
        object.__setattr__(self, "method", Method(self.method))
        if self.min_valid is None:
            object.__setattr__(self, "min_valid", math.ceil(self.size / 2))
        if not 1 <= self.min_valid <= self.size:
            raise ConfigurationError(f"min_valid must be in [1, {self.size}], got {self.min_valid}")


@dataclass(frozen=True)
class QuerySample:
    submission_id: str
    query_index: int
    response: Optional[GradeResponse]
    completion_digest: Optional[str]
    error: Optional[str] = None
    attempts: int = 1

    @property
    def valid(self) -> bool:
        return self.response is not None

    def to_dict(self) -> dict:
        r = self.response
        return {
            "query_index": self.query_index,
            "score": r.score if r else None,
            "comment": r.comment if r else None,
            "reasoning_steps": r.reasoning_steps if r else None,
            "digest": self.completion_digest,
            "attempts": self.attempts,
            "error": self.error,
        }


@dataclass(frozen=True)
class AggregatedGrade:
    submission_id: str
    final_score: int
    method: Method
    samples: tuple[QuerySample, ...]
    valid_count: int
    comment_set: tuple[str, ...] = field(default=())

    @property
    def valid_scores(self) -> list[int]:
        return [s.response.score for s in self.samples if s.response is not None]

    @classmethod
    def from_samples(cls, submission_id: str, samples: Sequence[QuerySample], method: Method | str, min_valid: int = 1):
        samples = tuple(sorted(samples, key=lambda s: s.query_index))
        valid = [s for s in samples if s.valid]
        if len(valid) < min_valid:
            raise EnsembleFailure(submission_id, len(valid), min_valid)
        return cls(
            submission_id=submission_id,
            final_score=aggregate_scores([s.response.score for s in valid], method),
            method=Method(method),
            samples=samples,
            valid_count=len(valid),
            comment_set=tuple(s.response.comment for s in valid),
        )

    def reaggregate(self, method: Method | str) -> int:
        return aggregate_scores(self.valid_scores, method)


def run_slot(
    gateway: ModelGateway,
    endpoint: ModelEndpoint,
    problem: ProblemSpec,
    submission_id: str,
    prompt,
    params: GenerationParams,
    query_index: int,
    max_retries: int = DEFAULT_RETRIES,
) -> QuerySample:
    """One ensemble slot: query, parse, and re-query a fresh sample on malformed output."""
    error = None
    digest = None
    for attempt in range(max_retries + 1):
        try:
            raw = gateway.complete_chat(endpoint, prompt, params, query_index, attempt)
        except TransientError as exc:
            return QuerySample(submission_id, query_index, None, None, f"transient: {exc}", attempt + 1)
        digest = raw.request_digest
        try:
            resp = parse_for_style(raw.text, prompt.style, problem.rubric.total_scale)
            return QuerySample(submission_id, query_index, resp, digest, None, attempt + 1)
        except ResponseFormatError as exc:
            error = f"{type(exc).__name__}: {exc}"
            logger.debug("%s q%d attempt %d: %s", submission_id, query_index, attempt, error)
    return QuerySample(submission_id, query_index, None, digest, error, max_retries + 1)


def run_ensemble(
    problem: ProblemSpec,
    submission: Submission,
    endpoint: ModelEndpoint,
    style: PromptStyle,
    params: GenerationParams,
    config: EnsembleConfig,
    gateway: ModelGateway,
    *,
    submission_id: Optional[str] = None,
    first_index: int = 0,
) -> AggregatedGrade:
    """Issue ``config.size`` independent grading queries and aggregate them.

    Raises :class:`EnsembleFailure` when fewer than ``min_valid`` slots
    produced a parseable reply.
    """
    if config.size > 1 and params.temperature <= 0:
        logger.warning("ensemble of %d with temperature 0 will not produce distinct samples", config.size)
    sid = submission_id or submission.student_id
    prompt = render_prompt(problem, submission, style)
    samples = [
        run_slot(gateway, endpoint, problem, sid, prompt, params, q, config.max_retries)
        for q in range(first_index, first_index + config.size)
    ]
    return AggregatedGrade.from_samples(sid, samples, config.method, config.min_valid)
