"""Problems, rubrics, submissions and the two grading prompt templates.

The chain-of-thought template is kept verbatim. Details it leaves open, such
as the criteria layout, where the student code goes and the zero-shot
wording, are fixed here and tracked by ``SCHEMA_VERSION`` so cached runs stay
auditable.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "grade-v1"

DEFAULT_TOTAL_SCALE = 100


class PromptStyle(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_COT = "zero_shot_cot"


@dataclass(frozen=True)
class CriterionSpec:
    name: str
    max_points: int
    description: str = ""


@dataclass(frozen=True)
class Rubric:
    criteria: tuple[CriterionSpec, ...]
    total_scale: int = DEFAULT_TOTAL_SCALE

    @classmethod
    def from_dict(cls, data: dict) -> "Rubric":
        criteria = tuple(
            CriterionSpec(
                name=str(c["name"]),
                max_points=int(c["max_points"]),
                description=str(c.get("description", "")),
            )
            for c in data.get("criteria") or []
        )
        return cls(criteria=criteria, total_scale=int(data.get("total_scale", DEFAULT_TOTAL_SCALE)))

    def to_dict(self) -> dict:
        return {
            "criteria": [
                {"name": c.name, "max_points": c.max_points, "description": c.description}
                for c in self.criteria
            ],
            "total_scale": self.total_scale,
        }


DEFAULT_RUBRIC = Rubric(
    criteria=(
        CriterionSpec(
            "Correctness of Output", 80,
            "The program produces the required output for valid inputs and test data.",
        ),
        CriterionSpec(
            "Code Readability", 10,
            "Naming, layout and comments make the code easy to follow.",
        ),
        CriterionSpec(
            "Functionality", 10,
            "The program implements every requirement in the problem statement.",
        ),
    )
)


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    statement: str
    rubric: Rubric = DEFAULT_RUBRIC

    def __post_init__(self):
        if not self.statement.strip():
            raise ConfigurationError(f"problem {self.id!r} has an empty statement")


@dataclass(frozen=True)
class Submission:
    student_id: str
    source_code: str
    execution_output: Optional[str] = None

    def __post_init__(self):
        if not self.source_code.strip():
            raise ConfigurationError(f"submission {self.student_id!r} has empty source code")


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    style: Optional[PromptStyle]
    response_schema_version: str = SCHEMA_VERSION
    # grade | summarize | geval; lets fixtures and logs tell request kinds apart
    task: str = "grade"

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


@dataclass
class RubricValidation:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_rubric(rubric: Rubric) -> RubricValidation:
    result = RubricValidation()
    if not rubric.criteria:
        result.violations.append("no criteria")
        return result
    seen: set[str] = set()
    for c in rubric.criteria:
        if not c.name.strip():
            result.violations.append("criterion with empty name")
        elif c.name in seen:
            result.violations.append(f"duplicate criterion name {c.name!r}")
        seen.add(c.name)
        if c.max_points <= 0:
            result.violations.append(f"criterion {c.name!r} has max_points {c.max_points} (must be > 0)")
    total = sum(c.max_points for c in rubric.criteria)
    if total != rubric.total_scale:
        result.violations.append(f"points sum {total} ≠ {rubric.total_scale}")
    if rubric.total_scale != DEFAULT_TOTAL_SCALE:
        result.warnings.append(
            f"total_scale {rubric.total_scale} differs from the 0-{DEFAULT_TOTAL_SCALE} scale"
        )
    return result


SYSTEM_TEXT = (
    "As a professional and knowledgeable expert in programming and education, you excel at "
    "reading code and can provide fair and accurate evaluations based on the given information."
)

JSON_DIRECTIVE = "Only generate JSON objects in your output without using a ```json block."


def format_criteria(rubric: Rubric) -> str:
    lines = []
    for c in rubric.criteria:
        line = f"- {c.name} (0-{c.max_points})"
        if c.description:
            line += f": {c.description}"
        lines.append(line)
    return "\n".join(lines)


def _submission_block(submission: Submission) -> str:
    block = f"student code:\n{submission.source_code.rstrip()}\n"
    if submission.execution_output is not None:
        block += f"\nexecution output on test data:\n{submission.execution_output.rstrip()}\n"
    return block


def _cot_body(rubric: Rubric) -> str:
    names = ", ".join(c.name.lower() for c in rubric.criteria)
    first = rubric.criteria[0]
    example = f"'{first.name} ({first.max_points * 3 // 4}/{first.max_points})'"
    skeleton = "\n".join(f"{c.name} (?/{c.max_points}): [Reason for the score]" for c in rubric.criteria)
    return (
        f"Your task is to evaluate the code based on the provided criteria. For each criterion "
        f"({names}), provide a step-by-step breakdown of the evaluation in smaller steps. Each "
        f"criterion must have a score (e.g., {example}) and an explanation of how that score "
        f"was determined.\n\n"
        f"Please respond using the following template for 'reasoning_steps', ensuring the "
        f"response is a single string in narrative form:\n\n"
        f"- 'reasoning_steps': A comprehensive text explanation in string format, following "
        f"the structure below:\n\n"
        f"\"Step-by-step breakdown of the evaluation process:\n{skeleton}\"\n\n"
        f"- 'comment': Detailed feedback on the code's performance, considering the {names}, "
        f"based on the 'reasoning_steps'.\n\n"
        f"- 'score': The total score (0-{rubric.total_scale}) based on the evaluations.\n\n"
    )


def _zero_shot_body(rubric: Rubric) -> str:
    return (
        "Your task is to evaluate the code based on the provided criteria and give it a score "
        "together with constructive feedback.\n\n"
        "Please respond with the following fields:\n\n"
        "- 'comment': Constructive feedback on the code.\n\n"
        f"- 'score': The total score (0-{rubric.total_scale}).\n\n"
    )


def render_prompt(problem: ProblemSpec, submission: Submission, style: PromptStyle) -> RenderedPrompt:
    """Build the grading prompt for one submission.

    Pure function of its arguments and ``SCHEMA_VERSION``. Raises
    ``ConfigurationError`` carrying the validation result if the rubric is
    invalid.
    """
    style = PromptStyle(style)
    check = validate_rubric(problem.rubric)
    if not check.ok:
        err = ConfigurationError(f"invalid rubric for {problem.id}: {'; '.join(check.violations)}")
        err.validation = check
        raise err
    intro = (
        "Below are the problem statements and criteria; please use them to assess the code step by step."
        if style is PromptStyle.ZERO_SHOT_COT
        else "Below are the problem statements and criteria; please use them to assess the code."
    )
    head = (
        f"{intro}\n\n"
        f"problem statement:\n{problem.statement.rstrip()}\n"
        f"criteria:\n{format_criteria(problem.rubric)}\n\n"
        f"{_submission_block(submission)}\n"
    )
    body = _cot_body(problem.rubric) if style is PromptStyle.ZERO_SHOT_COT else _zero_shot_body(problem.rubric)
    return RenderedPrompt(
        system_text=SYSTEM_TEXT,
        user_text=head + body + JSON_DIRECTIVE,
        style=style,
        response_schema_version=SCHEMA_VERSION,
        task="grade",
    )


# -- dataset loading -------------------------------------------------------

RUBRIC_NAMES = ("rubric.yaml", "rubric.yml", "rubric.json")


def load_rubric(path: Path) -> Rubric:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return Rubric.from_dict(data)


def load_problem(problem_dir: Path) -> ProblemSpec:
    statement = (problem_dir / "statement.txt").read_text(encoding="utf-8")
    for name in RUBRIC_NAMES:
        if (problem_dir / name).exists():
            rubric = load_rubric(problem_dir / name)
            break
    else:
        raise ConfigurationError(f"{problem_dir}: no rubric file ({', '.join(RUBRIC_NAMES)})")
    return ProblemSpec(id=problem_dir.name, statement=statement, rubric=rubric)


def load_submission(sub_dir: Path) -> Submission:
    code_files = sorted(p for p in sub_dir.glob("code.*") if p.is_file())
    if not code_files:
        raise ConfigurationError(f"{sub_dir}: no code.* file")
    if len(code_files) > 1:
        raise ConfigurationError(f"{sub_dir}: several code files {[p.name for p in code_files]}")
    output = sub_dir / "run_output.txt"
    return Submission(
        student_id=sub_dir.name,
        source_code=code_files[0].read_text(encoding="utf-8"),
        execution_output=output.read_text(encoding="utf-8") if output.exists() else None,
    )
