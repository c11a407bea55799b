from __future__ import annotations

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llmgrade.errors import ConfigurationError
from llmgrade.templates import (
    DEFAULT_RUBRIC,
    JSON_DIRECTIVE,
    CriterionSpec,
    ProblemSpec,
    PromptStyle,
    Rubric,
    Submission,
    load_problem,
    load_submission,
    render_prompt,
    validate_rubric,
)

PROBLEM = ProblemSpec("p2", "Print the sum of the proper factors of n.")
SUB = Submission("s01", "int main(void) { return 0; }\n", "input: 6\n6\n")


def test_cot_prompt_layout():
    p = render_prompt(PROBLEM, SUB, PromptStyle.ZERO_SHOT_COT)
    assert p.style is PromptStyle.ZERO_SHOT_COT
    assert p.task == "grade"
    assert p.user_text.endswith(JSON_DIRECTIVE)
    for line in (
        "Correctness of Output (?/80): [Reason for the score]",
        "Code Readability (?/10): [Reason for the score]",
        "Functionality (?/10): [Reason for the score]",
        "'Correctness of Output (60/80)'",
        "- 'score': The total score (0-100) based on the evaluations.",
        "step by step",
    ):
        assert line in p.user_text
    assert "int main(void)" in p.user_text
    assert "execution output on test data:\ninput: 6" in p.user_text
    assert [m["role"] for m in p.messages()] == ["system", "user"]


def test_zero_shot_prompt_has_no_reasoning_field():
    p = render_prompt(PROBLEM, SUB, PromptStyle.ZERO_SHOT)
    assert "reasoning_steps" not in p.user_text
    assert "step by step" not in p.user_text
    assert "- 'score': The total score (0-100)." in p.user_text
    assert p.user_text.endswith(JSON_DIRECTIVE)


def test_render_is_pure():
    a = render_prompt(PROBLEM, SUB, "zero_shot_cot")
    b = render_prompt(PROBLEM, SUB, PromptStyle.ZERO_SHOT_COT)
    assert a == b


def test_execution_output_optional():
    p = render_prompt(PROBLEM, Submission("s02", "x"), PromptStyle.ZERO_SHOT)
    assert "execution output" not in p.user_text


@pytest.mark.parametrize(
    "criteria, message",
    [
        ((), "no criteria"),
        ((CriterionSpec("A", 80), CriterionSpec("B", 10)), "points sum 90 ≠ 100"),
        ((CriterionSpec("A", 100), CriterionSpec("A", 0)), "duplicate criterion name 'A'"),
        ((CriterionSpec("A", 110), CriterionSpec("B", -10)), "max_points -10"),
    ],
)
def test_invalid_rubrics_rejected(criteria, message):
    rubric = Rubric(criteria)
    check = validate_rubric(rubric)
    assert not check.ok
    assert any(message in v for v in check.violations)
    with pytest.raises(ConfigurationError) as err:
        render_prompt(ProblemSpec("p", "s", rubric), SUB, PromptStyle.ZERO_SHOT)
    assert err.value.validation is not None


def test_non_default_scale_warns():
    rubric = Rubric((CriterionSpec("A", 7), CriterionSpec("B", 3)), total_scale=10)
    check = validate_rubric(rubric)
    assert check.ok and check.warnings


def test_empty_text_rejected():
    with pytest.raises(ConfigurationError):
        ProblemSpec("p", "   ")
    with pytest.raises(ConfigurationError):
        Submission("s", "\n")


def test_loaders(tmp_path):
    pdir = tmp_path / "p1"
    (pdir / "submissions" / "s01").mkdir(parents=True)
    (pdir / "statement.txt").write_text("Do it.\n")
    (pdir / "rubric.json").write_text('{"criteria": [{"name": "All", "max_points": 100}]}')
    (pdir / "submissions" / "s01" / "code.py").write_text("print(1)\n")
    problem = load_problem(pdir)
    assert problem.id == "p1" and problem.rubric.criteria[0].max_points == 100
    sub = load_submission(pdir / "submissions" / "s01")
    assert sub.execution_output is None and sub.source_code == "print(1)\n"
    (pdir / "submissions" / "s01" / "code.c").write_text("int x;\n")
    with pytest.raises(ConfigurationError, match="several code files"):
        load_submission(pdir / "submissions" / "s01")
    (pdir / "rubric.json").unlink()
    with pytest.raises(ConfigurationError, match="no rubric file"):
        load_problem(pdir)


def test_rubric_roundtrip():
    assert Rubric.from_dict(DEFAULT_RUBRIC.to_dict()) == DEFAULT_RUBRIC


@st.composite
def rubrics(draw):
    n = draw(st.integers(1, 6))
    cuts = sorted(draw(st.lists(st.integers(1, 99), min_size=n - 1, max_size=n - 1, unique=True)))
    points = [b - a for a, b in zip([0, *cuts], [*cuts, 100])]
    names = draw(st.lists(st.text("abcdefgh ", min_size=1, max_size=12).map(str.strip).filter(bool),
                          min_size=n, max_size=n, unique=True))
    return Rubric(tuple(CriterionSpec(name.title(), p) for name, p in zip(names, points)))


@settings(max_examples=60, deadline=None)
@given(rubrics(), st.sampled_from(list(PromptStyle)))
def test_every_criterion_rendered(rubric, style):
    assert validate_rubric(rubric).ok
    p = render_prompt(ProblemSpec("p", "statement", rubric), SUB, style)
    for c in rubric.criteria:
        assert f"- {c.name} (0-{c.max_points})" in p.user_text
        if style is PromptStyle.ZERO_SHOT_COT:
            assert f"{c.name} (?/{c.max_points}): [Reason for the score]" in p.user_text
    # no leftover format fields or stringified missing values
    assert not re.search(r"\{[A-Za-z_]\w*\}", p.user_text.replace(SUB.source_code, ""))
    assert "None" not in p.user_text
