"""Provider-agnostic LLM grading of programming assignments.

Ensemble sampling with mode/mean/median aggregation, MAE benchmarking
against human scores, intraclass-correlation agreement tests, feedback
summarization and probability-weighted feedback quality scoring.
"""

from __future__ import annotations

from .agreement import IccKind, IccReport, RatingMatrix, anova_decompose, icc_2k, icc_3k
from .benchmark import compare_methods, compare_styles, mae, mean_case_mae, worst_case_curve, worst_case_mae
from .ensemble import AggregatedGrade, EnsembleConfig, Method, aggregate_scores, run_ensemble
from .feedback import GEvalConfig, GEvalResult, geval_from_distribution, geval_score, review_queue, summarize_comments
from .gateway import GenerationParams, ModelEndpoint, ModelGateway, MockTransport, ResponseCache, parse_grade_response
from .templates import CriterionSpec, ProblemSpec, PromptStyle, Rubric, Submission, render_prompt, validate_rubric

__version__ = "0.1.0"

__all__ = [
    "AggregatedGrade", "CriterionSpec", "EnsembleConfig", "GEvalConfig", "GEvalResult", "GenerationParams",
    "IccKind", "IccReport", "Method", "MockTransport", "ModelEndpoint", "ModelGateway", "ProblemSpec",
    "PromptStyle", "RatingMatrix", "ResponseCache", "Rubric", "Submission", "aggregate_scores",
    "anova_decompose", "compare_methods", "compare_styles", "geval_from_distribution", "geval_score",
    "icc_2k", "icc_3k", "mae", "mean_case_mae", "parse_grade_response", "render_prompt", "review_queue",
    "run_ensemble", "summarize_comments", "validate_rubric", "worst_case_curve", "worst_case_mae",
]
