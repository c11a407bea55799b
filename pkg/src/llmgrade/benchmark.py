"""MAE against human grades, ensemble stability curves and comparison tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .ensemble import Method, aggregate_scores
from .errors import ConfigurationError, KeyMismatchError

METHOD_LABELS = {Method.MEAN: "Average", Method.MODE: "Sampling and Voting", Method.MEDIAN: "Median"}
DEFAULT_TRIALS = 50


def read_human_scores(path: Path | str) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"submission_id", "score"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: expected header 'submission_id,score'")
        scores = {}
        for row in reader:
            score = int(row["score"])
            if not 0 <= score <= 100:
                raise ConfigurationError(f"{path}: score {score} for {row['submission_id']} outside [0, 100]")
            scores[row["submission_id"]] = score
    return scores


def _check_keys(finals: Mapping[str, object], human: Mapping[str, int]) -> None:
    missing_human = sorted(set(finals) - set(human))
    missing_model = sorted(set(human) - set(finals))
    if missing_human or missing_model:
        raise KeyMismatchError(missing_human, missing_model)


def mae(finals: Mapping[str, int], human: Mapping[str, int]) -> float:
    """Mean absolute error between aggregated model scores and human scores."""
    _check_keys(finals, human)
    if not finals:
        raise ValueError("mae over zero submissions")
    return sum(abs(finals[k] - human[k]) for k in finals) / len(finals)


@dataclass(frozen=True)
class MaeReport:
    model: str
    style: str
    method: Method
    q: int
    mae: float
    m: int

    def to_dict(self) -> dict:
        return {"model": self.model, "style": self.style, "method": self.method.value,
                "Q": self.q, "mae": self.mae, "m": self.m}


# -- stability curves ------------------------------------------------------

@dataclass(frozen=True)
class StabilityCurve:
    sizes: tuple[int, ...]
    mean_case: tuple[float, ...]
    worst_case: tuple[float, ...]
    method: Method = Method.MODE
    trials: int = DEFAULT_TRIALS

    def rows(self):
        return zip(self.sizes, self.mean_case, self.worst_case)


def worst_indices(scores: Sequence[int], human: int, e: int) -> list[int]:
    """Indices of the ``e`` samples farthest from the human score.

    Ties prefer the larger score, then the earlier sample.
    """
    order = sorted(range(len(scores)), key=lambda i: (-abs(scores[i] - human), -scores[i], i))
    return order[:e]


def _validate_pool(pool: Mapping[str, Sequence[int]], human: Mapping[str, int], sizes: Sequence[int]) -> list[str]:
    _check_keys(pool, human)
    if list(sizes) != sorted(set(sizes)) or not sizes or sizes[0] < 1:
        raise ValueError("sizes must be positive and strictly increasing")
    smallest = min(len(v) for v in pool.values())
    if sizes[-1] > smallest:
        raise ValueError(f"ensemble size {sizes[-1]} exceeds the smallest sample pool ({smallest})")
    return sorted(pool)


def worst_case_mae(pool: Mapping[str, Sequence[int]], human: Mapping[str, int], method: Method | str, e: int) -> float:
    finals = {
        sid: aggregate_scores([scores[i] for i in worst_indices(scores, human[sid], e)], method)
        for sid, scores in pool.items()
    }
    return mae(finals, human)


def mean_case_mae(
    pool: Mapping[str, Sequence[int]],
    human: Mapping[str, int],
    method: Method | str,
    e: int,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> float:
    """Average MAE over ``trials`` random size-``e`` subsets per submission."""
    sids = sorted(pool)
    q_total = min(len(pool[s]) for s in sids)
    rng = np.random.default_rng([seed, e])
    picks = np.argsort(rng.random((trials, len(sids), q_total)), axis=2)[:, :, :e]
    scores = np.array([list(pool[s])[:q_total] for s in sids])
    chosen = scores[np.arange(len(sids))[None, :, None], picks].tolist()
    h = [human[s] for s in sids]
    # integer error total, one division: the whole-pool case then equals mae() bit for bit
    total = sum(
        abs(aggregate_scores(subset, method) - h[j])
        for trial in chosen
        for j, subset in enumerate(trial)
    )
    return total / (trials * len(sids))


def worst_case_curve(
    pool: Mapping[str, Sequence[int]],
    human: Mapping[str, int],
    method: Method | str = Method.MODE,
    sizes: Sequence[int] = tuple(range(1, 11)),
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> StabilityCurve:
    """Mean-case and worst-case MAE for each ensemble size drawn from one pool."""
    sizes = tuple(sizes)
    _validate_pool(pool, human, sizes)
    method = Method(method)
    return StabilityCurve(
        sizes=sizes,
        mean_case=tuple(mean_case_mae(pool, human, method, e, trials, seed) for e in sizes),
        worst_case=tuple(worst_case_mae(pool, human, method, e) for e in sizes),
        method=method,
        trials=trials,
    )


# -- comparison tables -----------------------------------------------------

@dataclass
class MethodComparison:
    methods: tuple[Method, ...] = (Method.MEAN, Method.MODE, Method.MEDIAN)
    cells: dict[str, dict[Method, float]] = field(default_factory=dict)
    q: int = 0

    def render(self) -> str:
        head = "| Model | " + " | ".join(METHOD_LABELS[m] for m in self.methods) + " |"
        sep = "|---|" + "---:|" * len(self.methods)
        lines = [head, sep]
        for model, row in self.cells.items():
            lines.append(f"| {model} | " + " | ".join(f"{row[m]:.2f}" for m in self.methods) + " |")
        return "\n".join(lines) + "\n"


def compare_methods(
    pools: Mapping[str, Mapping[str, Sequence[int]]],
    human: Mapping[str, int],
    methods: Sequence[Method | str] = (Method.MEAN, Method.MODE, Method.MEDIAN),
) -> MethodComparison:
    """MAE per (model, method), every method aggregating the same sample pool."""
    methods = tuple(Method(m) for m in methods)
    table = MethodComparison(methods=methods)
    sizes = set()
    for model, pool in pools.items():
        _check_keys(pool, human)
        sizes.update(len(v) for v in pool.values())
        table.cells[model] = {
            m: mae({sid: aggregate_scores(list(scores), m) for sid, scores in pool.items()}, human)
            for m in methods
        }
    table.q = max(sizes) if sizes else 0
    return table


@dataclass(frozen=True)
class StyleComparisonRow:
    model: str
    mae_zero_shot: float
    mae_cot: float

    @property
    def diff(self) -> float:
        return self.mae_cot - self.mae_zero_shot


def format_diff(value: float) -> str:
    text = f"{value:+.2f}"
    return "0.00" if text in ("+0.00", "-0.00") else text


def compare_styles(
    zero_shot: Mapping[str, Mapping[str, int]],
    cot: Mapping[str, Mapping[str, int]],
    human: Mapping[str, int],
) -> list[StyleComparisonRow]:
    """Per model MAE under both prompt styles; ``diff`` is CoT minus zero-shot."""
    if set(zero_shot) != set(cot):
        raise ValueError(f"models differ between styles: {sorted(set(zero_shot) ^ set(cot))}")
    rows = []
    for model in zero_shot:
        if set(zero_shot[model]) != set(cot[model]):
            raise KeyMismatchError(sorted(set(cot[model]) - set(zero_shot[model])),
                                   sorted(set(zero_shot[model]) - set(cot[model])))
        rows.append(StyleComparisonRow(model, mae(zero_shot[model], human), mae(cot[model], human)))
    return rows


def render_style_table(rows: Sequence[StyleComparisonRow]) -> str:
    lines = ["| Model | Zero-Shot | Zero-Shot-CoT | diff |", "|---|---:|---:|---:|"]
    for r in rows:
        lines.append(f"| {r.model} | {r.mae_zero_shot:.2f} | {r.mae_cot:.2f} | {format_diff(r.diff)} |")
    return "\n".join(lines) + "\n"


# -- noisy rater simulation ------------------------------------------------

@dataclass(frozen=True)
class SimRaterModel:
    true_scores: Mapping[str, int]
    offsets: tuple[int, ...]
    weights: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.offsets) != len(self.weights) or not self.offsets:
            raise ValueError("offsets and weights must be non-empty and the same length")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")


def discrete_gaussian(sigma: float, width: Optional[int] = None) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Symmetric unimodal integer offsets, weights ∝ exp(-k²/2σ²), |k| ≤ width."""
    width = int(math.ceil(4 * sigma)) if width is None else width
    offsets = tuple(range(-width, width + 1))
    raw = [math.exp(-(k * k) / (2 * sigma * sigma)) for k in offsets]
    total = math.fsum(raw)
    return offsets, tuple(w / total for w in raw)


def simulate_rater_pool(sim: SimRaterModel, q_total: int) -> dict[str, list[int]]:
    """Draw ``q_total`` clamped noisy scores per submission, reproducibly."""
    rng = np.random.default_rng(sim.seed)
    offsets = np.asarray(sim.offsets)
    p = np.asarray(sim.weights, dtype=float)
    p = p / p.sum()
    pool = {}
    for sid in sorted(sim.true_scores):
        draws = rng.choice(offsets, size=q_total, p=p)
        pool[sid] = [int(min(100, max(0, sim.true_scores[sid] + d))) for d in draws]
    return pool
