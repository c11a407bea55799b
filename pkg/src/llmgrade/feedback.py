"""Comment summarization, probability-weighted feedback scoring and review queue."""

from __future__ import annotations

import enum
import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .ensemble import AggregatedGrade
from .errors import ConfigurationError, ProbabilityExtractionError, SummarizationFailure
from .gateway import DEFAULT_RETRIES, GenerationParams, ModelEndpoint, ModelGateway, TokenLogprob
from .templates import ProblemSpec, RenderedPrompt, format_criteria

logger = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = "summary-v1"
GEVAL_SCHEMA_VERSION = "geval-v1"
OVERVIEW_HEADING = "Overview Comments"


@dataclass(frozen=True)
class SummaryComment:
    sections: tuple[tuple[str, str], ...]
    overview: str
    source_sample_count: int

    def render(self) -> str:
        parts = [f"{name}:\n{text}" for name, text in self.sections]
        parts.append(f"{OVERVIEW_HEADING}:\n{self.overview}")
        return "\n\n".join(parts) + "\n"

    def to_dict(self) -> dict:
        return {
            "sections": [{"criterion": n, "text": t} for n, t in self.sections],
            "overview": self.overview,
            "source_sample_count": self.source_sample_count,
        }


def render_summary_prompt(grade: AggregatedGrade, problem: ProblemSpec) -> RenderedPrompt:
    names = [c.name for c in problem.rubric.criteria]
    comments = "\n\n".join(f"Comment {i + 1}:\n{c.strip()}" for i, c in enumerate(grade.comment_set))
    skeleton = "\n\n".join(f"{n}:\n[summary for this criterion]" for n in names)
    user = (
        f"problem statement:\n{problem.statement.rstrip()}\n"
        f"criteria:\n{format_criteria(problem.rubric)}\n\n"
        f"The following {len(grade.comment_set)} comments were written independently about the same "
        f"student code:\n\n{comments}\n\n"
        "Summarize them into one review. Keep points the comments agree on, drop contradictions "
        "that only a single comment raises, and do not add new criticism. Use exactly these headings, "
        "in this order, each on its own line followed by a colon:\n\n"
        f"{skeleton}\n\n{OVERVIEW_HEADING}:\n[overall assessment and the most useful suggestions]"
    )
    return RenderedPrompt(
        system_text="You summarize code review comments for students in introductory programming courses.",
        user_text=user,
        style=None,
        response_schema_version=SUMMARY_SCHEMA_VERSION,
        task="summarize",
    )


def _heading_pattern(name: str) -> re.Pattern:
    return re.compile(
        r"^[ \t]*(?:#+[ \t]*)?(?:\*\*)?" + re.escape(name) + r"(?:\*\*)?[ \t]*:[ \t]*(?:\*\*)?[ \t]*(.*)$",
        re.IGNORECASE | re.MULTILINE,
    )


def parse_summary(text: str, criteria: Sequence[str], source_sample_count: int) -> SummaryComment:
    """Split a summary reply into rubric sections plus the overview."""
    headings = list(criteria) + [OVERVIEW_HEADING]
    found = []
    for name in headings:
        match = _heading_pattern(name).search(text)
        if match is None:
            raise SummarizationFailure(f"summary is missing the {name!r} section", raw=text)
        found.append((match.start(), match.start(1), name))
    order = sorted(found)
    bodies = {}
    for i, (_, body_start, name) in enumerate(order):
        end = order[i + 1][0] if i + 1 < len(order) else len(text)
        bodies[name] = text[body_start:end].strip().strip("`").strip()
    return SummaryComment(
        sections=tuple((n, bodies[n]) for n in criteria),
        overview=bodies[OVERVIEW_HEADING],
        source_sample_count=source_sample_count,
    )


def summarize_comments(
    grade: AggregatedGrade,
    problem: ProblemSpec,
    endpoint: ModelEndpoint,
    params: GenerationParams,
    gateway: ModelGateway,
    max_retries: int = DEFAULT_RETRIES,
) -> SummaryComment:
    if not grade.comment_set:
        raise ValueError(f"{grade.submission_id}: nothing to summarize")
    prompt = render_summary_prompt(grade, problem)
    names = [c.name for c in problem.rubric.criteria]
    last: Optional[SummarizationFailure] = None
    for attempt in range(max_retries + 1):
        raw = gateway.complete_chat(endpoint, prompt, params, 0, attempt)
        try:
            return parse_summary(raw.text, names, grade.valid_count)
        except SummarizationFailure as exc:
            last = exc
    raise SummarizationFailure(f"{grade.submission_id}: {last}", raw=last.raw)


# -- G-Eval -----------------------------------------------------------------

class ProbabilitySource(str, enum.Enum):
    TOKEN_LOGPROBS = "token_logprobs"
    EMPIRICAL_SAMPLING = "empirical_sampling"


@dataclass(frozen=True)
class GEvalConfig:
    score_set: tuple[int, ...] = (1, 2, 3, 4, 5)
    evaluator: Optional[str] = None
    probability_source: ProbabilitySource = ProbabilitySource.TOKEN_LOGPROBS
    sample_count: int = 20
    review_threshold: float = 0.5

    def __post_init__(self):
        s = tuple(int(v) for v in self.score_set)
        if len(set(s)) < 2 or list(s) != sorted(set(s)):
            raise ConfigurationError("score_set needs at least two distinct ascending values")
        object.__setattr__(self, "score_set", s)
        object.__setattr__(self, "probability_source", ProbabilitySource(self.probability_source))
        if self.sample_count < 1:
            raise ConfigurationError("sample_count must be positive")
        if not 0 <= self.review_threshold <= 1:
            raise ConfigurationError("review_threshold must be in [0, 1]")


@dataclass(frozen=True)
class GEvalResult:
    distribution: Mapping[int, float]
    raw_score: float
    normalized: float
    flagged_for_review: bool
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "distribution": {str(k): v for k, v in sorted(self.distribution.items())},
            "raw_score": self.raw_score,
            "normalized": self.normalized,
            "flagged_for_review": self.flagged_for_review,
            "source": self.source,
        }


def geval_from_distribution(
    distribution: Mapping[int, float],
    score_set: Sequence[int] = (1, 2, 3, 4, 5),
    review_threshold: float = 0.5,
    source: str = "",
) -> GEvalResult:
    """Weighted sum of the score set, rescaled to [0, 1].

    Probabilities are read through their decimal repr and combined as exact
    fractions, so hand-checkable inputs give hand-checkable outputs.
    """
    lo, hi = min(score_set), max(score_set)
    probs = {int(s): Fraction(repr(float(distribution.get(s, 0.0)))) for s in score_set}
    total = sum(probs.values())
    if total <= 0:
        raise ProbabilityExtractionError("distribution has no mass on the score set")
    raw = sum(p * s for s, p in probs.items()) / total
    raw = min(Fraction(hi), max(Fraction(lo), raw))
    normalized = (raw - lo) / (hi - lo)
    dist = {s: float(p / total) for s, p in probs.items()}
    return GEvalResult(
        distribution=dist,
        raw_score=float(raw),
        normalized=float(normalized),
        flagged_for_review=float(normalized) < review_threshold,
        source=source,
    )


def distribution_from_logprobs(tokens: Sequence[TokenLogprob], score_set: Sequence[int]) -> dict[int, float]:
    """Renormalized probabilities of score tokens at the score position.

    The score position is the first generated token that is itself a member
    of the score set; failing that, the first position where any top
    alternative is. Alternatives that do not spell a score are dropped.
    """
    wanted = {str(s): s for s in score_set}

    def score_mass(tok: TokenLogprob) -> dict[int, float]:
        mass: dict[int, float] = {}
        alts = dict(tok.top)
        alts.setdefault(tok.token, tok.logprob)
        for text, lp in alts.items():
            s = wanted.get(text.strip())
            if s is not None:
                mass[s] = mass.get(s, 0.0) + math.exp(lp)
        return mass

    position = next((t for t in tokens if t.token.strip() in wanted), None)
    if position is None:
        position = next((t for t in tokens if score_mass(t)), None)
    if position is None:
        raise ProbabilityExtractionError("no returned token matches a member of the score set")
    mass = score_mass(position)
    total = math.fsum(mass.values())
    return {s: mass.get(s, 0.0) / total for s in score_set}


_INT = re.compile(r"-?\d+")


def distribution_from_samples(texts: Sequence[str], score_set: Sequence[int]) -> dict[int, float]:
    counts = {s: 0 for s in score_set}
    for text in texts:
        m = _INT.search(text)
        if m and int(m.group()) in counts:
            counts[int(m.group())] += 1
    n = sum(counts.values())
    if n == 0:
        raise ProbabilityExtractionError(f"none of {len(texts)} samples contained a score from the set")
    return {s: c / n for s, c in counts.items()}


def render_geval_prompt(task_description: str, feedback_text: str, score_set: Sequence[int]) -> RenderedPrompt:
    lo, hi = min(score_set), max(score_set)
    user = (
        "You will be given a programming task and the feedback a grader wrote about one student's "
        "solution. Rate the quality of the feedback.\n\n"
        "Evaluation criteria:\n"
        f"Quality ({lo}-{hi}) - the feedback is accurate with respect to the task, specific to the "
        "code, constructive, and stays within what the task actually requires. Penalize claims that "
        "are wrong or unfounded and demands that go beyond the task.\n\n"
        "Evaluation steps:\n"
        "1. Read the task and note what it requires.\n"
        "2. Read the feedback and check every claim against the task.\n"
        f"3. Assign a quality score from {lo} to {hi}.\n\n"
        f"Task:\n{task_description.rstrip()}\n\n"
        f"Feedback:\n{feedback_text.rstrip()}\n\n"
        f"Output a single score from {lo} to {hi} and nothing else.\nScore:"
    )
    return RenderedPrompt(
        system_text="You are a careful evaluator of written feedback on student code.",
        user_text=user,
        style=None,
        response_schema_version=GEVAL_SCHEMA_VERSION,
        task="geval",
    )


def geval_score(
    task_description: str,
    feedback: SummaryComment | str,
    config: GEvalConfig,
    endpoint: ModelEndpoint,
    params: GenerationParams,
    gateway: ModelGateway,
) -> GEvalResult:
    text = feedback.render() if isinstance(feedback, SummaryComment) else feedback
    prompt = render_geval_prompt(task_description, text, config.score_set)
    if config.probability_source is ProbabilitySource.TOKEN_LOGPROBS:
        if not endpoint.supports_logprobs:
            raise ProbabilityExtractionError(f"endpoint {endpoint.name} does not return log-probabilities")
        raw = gateway.complete_chat(endpoint, prompt, params, 0)
        if not raw.token_logprobs:
            raise ProbabilityExtractionError("evaluator reply carried no log-probabilities")
        dist = distribution_from_logprobs(raw.token_logprobs, config.score_set)
    else:
        texts = [gateway.complete_chat(endpoint, prompt, params, q).text for q in range(config.sample_count)]
        dist = distribution_from_samples(texts, config.score_set)
    return geval_from_distribution(dist, config.score_set, config.review_threshold, config.probability_source.value)


def review_queue(results: Sequence[tuple[str, GEvalResult]]) -> list[tuple[str, GEvalResult]]:
    """Flagged items, lowest normalized score first, ties by submission id."""
    flagged = [(sid, r) for sid, r in results if r.flagged_for_review]
    return sorted(flagged, key=lambda item: (item[1].normalized, item[0]))
