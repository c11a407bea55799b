"""Average-measures intraclass correlations, ICC(2,k) and ICC(3,k).

ICC(2,k) (two-way random, absolute agreement) measures how well repeated
queries of one model agree; ICC(3,k) (two-way mixed, consistency) measures
agreement among a fixed panel of models. Both come from the same two-way
ANOVA over an n-subjects by k-raters matrix. Confidence intervals follow
McGraw & Wong (1996); F tails come from :mod:`llmgrade.fdist`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateMatrixError, IncompleteMatrixError, InsufficientDataError
from .fdist import f_isf, f_sf


class IccKind(str, enum.Enum):
    ICC2K = "ICC(2,k)"
    ICC3K = "ICC(3,k)"


@dataclass(frozen=True)
class RatingMatrix:
    values: np.ndarray
    subject_ids: tuple[str, ...]
    rater_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InsufficientDataError("rating matrix must be two-dimensional")
        n, k = values.shape
        if n < 2 or k < 2:
            raise InsufficientDataError(f"need at least 2 subjects and 2 raters, got {n}x{k}")
        if not np.all(np.isfinite(values)):
            raise IncompleteMatrixError(
                [(self.subject_ids[i], self.rater_ids[j]) for i, j in zip(*np.nonzero(~np.isfinite(values)))]
            )
        if len(self.subject_ids) != n or len(self.rater_ids) != k:
            raise ValueError("id lists do not match the matrix shape")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "rater_ids", tuple(self.rater_ids))

    @classmethod
    def from_array(cls, values, subject_ids: Optional[Sequence[str]] = None, rater_ids: Optional[Sequence[str]] = None):
        values = np.asarray(values, dtype=float)
        n, k = values.shape if values.ndim == 2 else (len(values), 0)
        return cls(
            values,
            tuple(subject_ids) if subject_ids is not None else tuple(f"s{i}" for i in range(n)),
            tuple(rater_ids) if rater_ids is not None else tuple(f"r{j}" for j in range(k)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def read_csv(cls, path: Path | str) -> "RatingMatrix":
        """Header row holds rater ids, first column holds subject ids."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        header, body = rows[0], rows[1:]
        gaps = []
        values = []
        for row in body:
            line = []
            for j, cell in enumerate(row[1:]):
                if cell.strip() == "":
                    gaps.append((row[0], header[j + 1]))
                    line.append(math.nan)
                else:
                    line.append(float(cell))
            values.append(line)
        if gaps:
            raise IncompleteMatrixError(gaps)
        return cls(np.array(values, dtype=float), tuple(r[0] for r in body), tuple(header[1:]))

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", *self.rater_ids])
            for sid, row in zip(self.subject_ids, self.values):
                w.writerow([sid, *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class AnovaDecomposition:
    n: int
    k: int
    ssr: float
    ssc: float
    sse: float
    sst: float

    @property
    def df_rows(self) -> int:
        return self.n - 1

    @property
    def df_cols(self) -> int:
        return self.k - 1

    @property
    def df_err(self) -> int:
        return (self.n - 1) * (self.k - 1)

    @property
    def msr(self) -> float:
        return self.ssr / self.df_rows

    @property
    def msc(self) -> float:
        return self.ssc / self.df_cols

    @property
    def mse(self) -> float:
        return self.sse / self.df_err


def anova_decompose(matrix: RatingMatrix) -> AnovaDecomposition:
    x = matrix.values
    n, k = x.shape
    grand = x.mean()
    rows = x.mean(axis=1)
    cols = x.mean(axis=0)
    ssr = k * float(np.sum((rows - grand) ** 2))
    ssc = n * float(np.sum((cols - grand) ** 2))
    resid = x - rows[:, None] - cols[None, :] + grand
    sse = float(np.sum(resid**2))
    sst = float(np.sum((x - grand) ** 2))
    # Rounding residue of exactly-zero components would otherwise turn an
    # exact 1.0 into 0.9999999999.
    floor = n * k * (1e3 * np.finfo(float).eps * float(np.max(np.abs(x)))) ** 2
    ssr, ssc, sse, sst = (0.0 if v <= floor else v for v in (ssr, ssc, sse, sst))
    return AnovaDecomposition(n=n, k=k, ssr=ssr, ssc=ssc, sse=sse, sst=sst)


@dataclass(frozen=True)
class IccReport:
    kind: IccKind
    estimate: float
    f_value: float
    df1: float
    df2: float
    p_value: float
    ci95_low: float
    ci95_high: float
    n: int = 0
    k: int = 0
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "label": self.label,
            "estimate": self.estimate,
            "f_value": self.f_value if math.isfinite(self.f_value) else "inf",
            "df1": self.df1,
            "df2": self.df2,
            "p_value": self.p_value,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "n": self.n,
            "k": self.k,
        }


def format_p(p: float) -> str:
    if p < 1e-12:
        return "<1e-12"
    if p < 1e-3:
        return f"{p:.2e}"
    return f"{p:.4f}"


def _checked(matrix: RatingMatrix) -> AnovaDecomposition:
    a = anova_decompose(matrix)
    if a.ssr == 0.0 and a.sse == 0.0:
        raise DegenerateMatrixError("no between-subject and no residual variance; ICC is undefined")
    if a.ssr == 0.0:
        raise DegenerateMatrixError("all subjects have the same mean score; ICC is undefined")
    return a


def _f_test(a: AnovaDecomposition) -> tuple[float, float]:
    if a.mse == 0.0:
        return math.inf, 0.0
    f = a.msr / a.mse
    return f, f_sf(f, a.df_rows, a.df_err)


def icc_3k(matrix: RatingMatrix, alpha: float = 0.05) -> IccReport:
    a = _checked(matrix)
    f, p = _f_test(a)
    estimate = (a.msr - a.mse) / a.msr
    if math.isinf(f):
        low = high = 1.0
    else:
        f_low = f / f_isf(alpha / 2, a.df_rows, a.df_err)
        f_high = f * f_isf(alpha / 2, a.df_err, a.df_rows)
        low, high = 1.0 - 1.0 / f_low, 1.0 - 1.0 / f_high
    return IccReport(IccKind.ICC3K, estimate, f, a.df_rows, a.df_err, p, low, high, a.n, a.k)


def icc_2k(matrix: RatingMatrix, alpha: float = 0.05) -> IccReport:
    a = _checked(matrix)
    n, k = a.n, a.k
    msr, msc, mse = a.msr, a.msc, a.mse
    f, p = _f_test(a)
    denom = msr + (msc - mse) / n
    if denom <= 0:
        # only reachable with F < 1; the ratio would be infinite or exceed 1
        raise DegenerateMatrixError("residual variance swamps subject and rater variance; ICC(2,k) is undefined")
    estimate = (msr - mse) / denom

    # Bounds for the single-rater ICC(A,1) with Satterthwaite degrees of
    # freedom, then stepped up to k raters (Spearman-Brown).
    single = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
    if mse == 0.0:
        v = float(k - 1)
    else:
        fj = msc / mse
        c = n * (1 + (k - 1) * single) - k * single
        v = (k - 1) * (n - 1) * (k * single * fj + c) ** 2 / (
            (n - 1) * k**2 * single**2 * fj**2 + c**2
        )
    f_low = f_isf(alpha / 2, n - 1, v)
    f_high = f_isf(alpha / 2, v, n - 1)
    spread = k * msc + (k * n - k - n) * mse
    low1 = n * (msr - f_low * mse) / (f_low * spread + n * msr)
    high1 = n * (f_high * msr - mse) / (spread + n * f_high * msr)
    low, high = _step_up(low1, k), _step_up(high1, k)
    return IccReport(IccKind.ICC2K, estimate, f, a.df_rows, a.df_err, p, low, high, n, k)


def _step_up(r: float, k: int) -> float:
    """Spearman-Brown: single-rater reliability to the mean of k raters.

    Increasing on (-1/(k-1), 1] and unbounded below at the left end, so
    single-rater bounds at or beyond that pole map to -inf.
    """
    denom = 1 + (k - 1) * r
    return -math.inf if denom <= 0 else k * r / denom


# -- matrix builders -------------------------------------------------------

def _get(rec, key):
    return rec[key] if isinstance(rec, Mapping) else getattr(rec, key)


def build_intra_matrix(records: Iterable, model: str, repeats: int) -> RatingMatrix:
    """Rows are submissions (sorted by id), columns are repeats q0..q{repeats-1}.

    ``records`` carry ``model``, ``submission_id``, ``query_index`` and
    ``score`` (``None`` for an invalid sample).
    """
    cells: dict[tuple[str, int], float] = {}
    subjects: set[str] = set()
    for rec in records:
        if _get(rec, "model") != model:
            continue
        sid = _get(rec, "submission_id")
        subjects.add(sid)
        q = int(_get(rec, "query_index"))
        score = _get(rec, "score")
        if 0 <= q < repeats and score is not None:
            cells[(sid, q)] = float(score)
    sids = sorted(subjects)
    raters = [f"q{q}" for q in range(repeats)]
    gaps = [(s, f"q{q}") for s in sids for q in range(repeats) if (s, q) not in cells]
    if gaps:
        raise IncompleteMatrixError(gaps)
    if len(sids) < 2:
        raise InsufficientDataError(f"model {model}: {len(sids)} submission(s), need at least 2")
    values = np.array([[cells[(s, q)] for q in range(repeats)] for s in sids], dtype=float)
    return RatingMatrix(values, tuple(sids), tuple(raters))


def build_inter_matrix(records: Iterable, models: Sequence[str]) -> RatingMatrix:
    """Rows are submissions, columns are models, cells are ensemble final scores.

    ``records`` carry ``model``, ``submission_id`` and ``final_score``
    (``None`` when the ensemble failed).
    """
    models = list(models)
    if len(models) < 2:
        raise InsufficientDataError(f"inter-model agreement needs at least 2 models, got {len(models)}")
    cells: dict[tuple[str, str], float] = {}
    subjects: set[str] = set()
    for rec in records:
        m = _get(rec, "model")
        if m not in models:
            continue
        sid = _get(rec, "submission_id")
        subjects.add(sid)
        score = _get(rec, "final_score")
        if score is not None:
            cells[(sid, m)] = float(score)
    sids = sorted(subjects)
    gaps = [(s, m) for s in sids for m in models if (s, m) not in cells]
    if gaps:
        raise IncompleteMatrixError(gaps)
    values = np.array([[cells[(s, m)] for m in models] for s in sids], dtype=float).reshape(len(sids), len(models))
    return RatingMatrix(values, tuple(sids), tuple(models))
