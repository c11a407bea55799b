from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from llmgrade.agreement import (
    IccKind,
    RatingMatrix,
    anova_decompose,
    build_inter_matrix,
    build_intra_matrix,
    format_p,
    icc_2k,
    icc_3k,
)
from llmgrade.errors import DegenerateMatrixError, IncompleteMatrixError, InsufficientDataError
from oracles import icc_reference

# Shrout & Fleiss (1979) six targets rated by four judges
SHROUT_FLEISS = [[9, 2, 5, 8], [6, 1, 3, 2], [8, 4, 6, 8], [7, 1, 2, 6], [10, 5, 6, 9], [6, 2, 4, 7]]


def report_tuple(r):
    return (r.estimate, r.f_value, r.p_value, r.ci95_low, r.ci95_high)


def test_shrout_fleiss_reference_values():
    # values printed by R psych::ICC for this data set
    m = RatingMatrix.from_array(SHROUT_FLEISS)
    r2, r3 = icc_2k(m), icc_3k(m)
    assert r2.kind is IccKind.ICC2K and r3.kind is IccKind.ICC3K
    assert report_tuple(r2) == pytest.approx((0.6200505, 11.027248, 0.000134567, 0.0711368, 0.927232), abs=1e-6)
    assert report_tuple(r3) == pytest.approx((0.9093155, 11.027248, 0.000134567, 0.6756747, 0.9858917), abs=1e-6)
    assert (r2.df1, r2.df2, r2.n, r2.k) == (5, 15, 6, 4)


def test_anova_matches_statsmodels():
    from statsmodels.formula.api import ols
    from statsmodels.stats.anova import anova_lm

    rng = np.random.default_rng(3)
    x = rng.integers(0, 100, size=(9, 5)).astype(float)
    a = anova_decompose(RatingMatrix.from_array(x))
    df = pd.DataFrame([(f"s{i}", f"r{j}", x[i, j]) for i in range(9) for j in range(5)],
                      columns=["subject", "rater", "score"])
    table = anova_lm(ols("score ~ C(subject) + C(rater)", data=df).fit(), typ=2)
    assert a.ssr == pytest.approx(table.loc["C(subject)", "sum_sq"], rel=1e-10)
    assert a.ssc == pytest.approx(table.loc["C(rater)", "sum_sq"], rel=1e-10)
    assert a.sse == pytest.approx(table.loc["Residual", "sum_sq"], rel=1e-10)


def noisy_matrix(rng, n, k, noise):
    subject = rng.normal(60, 15, size=(n, 1))
    rater = rng.normal(0, 5, size=(1, k))
    return np.clip(np.rint(subject + rater + rng.normal(0, noise, size=(n, k))), 0, 100)


@pytest.mark.parametrize("seed", range(8))
def test_matches_reference(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(4, 31)), int(rng.integers(2, 21))
    x = noisy_matrix(rng, n, k, noise=float(rng.uniform(1, 30)))
    ref = icc_reference(x.tolist())
    m = RatingMatrix.from_array(x)
    assert report_tuple(icc_2k(m)) == pytest.approx(ref["icc2k"], abs=1e-6)
    assert report_tuple(icc_3k(m)) == pytest.approx(ref["icc3k"], abs=1e-6)


def test_identical_columns_exactly_one():
    col = np.array([55.0, 70, 81, 92, 64, 13, 100])
    m = RatingMatrix.from_array(np.repeat(col[:, None], 6, axis=1))
    for r in (icc_2k(m), icc_3k(m)):
        assert r.estimate == 1.0
        assert r.f_value == math.inf and r.p_value == 0.0
        assert (r.ci95_low, r.ci95_high) == (1.0, 1.0)


def test_column_offset_affects_only_absolute_agreement():
    rng = np.random.default_rng(11)
    x = noisy_matrix(rng, 12, 4, 4.0)
    shifted = x.copy()
    shifted[:, 0] += 25
    a, b = RatingMatrix.from_array(x), RatingMatrix.from_array(shifted)
    assert icc_3k(b).estimate == pytest.approx(icc_3k(a).estimate, abs=1e-12)
    assert icc_2k(b).estimate < icc_2k(a).estimate


@pytest.mark.parametrize(
    "values",
    [
        [[50, 50], [50, 50], [50, 50]],
        [[10, 20], [20, 10], [15, 15]],  # equal subject means
    ],
)
def test_degenerate(values):
    m = RatingMatrix.from_array(values)
    with pytest.raises(DegenerateMatrixError):
        icc_2k(m)
    with pytest.raises(DegenerateMatrixError):
        icc_3k(m)


def test_shape_checks(tmp_path):
    with pytest.raises(InsufficientDataError):
        RatingMatrix.from_array([[1, 2, 3]])
    with pytest.raises(InsufficientDataError):
        RatingMatrix.from_array([[1], [2]])
    with pytest.raises(IncompleteMatrixError) as err:
        RatingMatrix.from_array([[1, np.nan], [2, 3]])
    assert err.value.gaps == [("s0", "r1")]

    path = tmp_path / "m.csv"
    path.write_text("subject_id,a,b\nx,1,\ny,2,3\n")
    with pytest.raises(IncompleteMatrixError) as err:
        RatingMatrix.read_csv(path)
    assert err.value.gaps == [("x", "b")]


def test_csv_roundtrip(tmp_path):
    m = RatingMatrix.from_array(SHROUT_FLEISS, [f"t{i}" for i in range(6)], ["j1", "j2", "j3", "j4"])
    m.write_csv(tmp_path / "sf.csv")
    back = RatingMatrix.read_csv(tmp_path / "sf.csv")
    assert back.subject_ids == m.subject_ids and back.rater_ids == m.rater_ids
    assert np.array_equal(back.values, m.values)


def test_intra_builder():
    recs = [{"model": "a", "submission_id": s, "query_index": q, "score": 10 * i + q}
            for i, s in enumerate(["p2/s01", "p1/s01", "p1/s02"]) for q in range(3)]
    recs.append({"model": "b", "submission_id": "p9", "query_index": 0, "score": 1})
    m = build_intra_matrix(recs, "a", 3)
    assert m.subject_ids == ("p1/s01", "p1/s02", "p2/s01")
    assert m.rater_ids == ("q0", "q1", "q2")
    assert m.values[2].tolist() == [0, 1, 2]
    recs[4]["score"] = None
    with pytest.raises(IncompleteMatrixError) as err:
        build_intra_matrix(recs, "a", 3)
    assert err.value.gaps == [("p1/s01", "q1")]
    with pytest.raises(IncompleteMatrixError):
        build_intra_matrix(recs, "a", 4)


def test_inter_builder():
    recs = [{"model": m, "submission_id": f"s{i}", "final_score": i * 10 + j}
            for j, m in enumerate(["x", "y"]) for i in range(4)]
    m = build_inter_matrix(recs, ["y", "x"])
    assert m.rater_ids == ("y", "x") and m.values[1].tolist() == [11, 10]
    with pytest.raises(InsufficientDataError):
        build_inter_matrix(recs, ["x"])
    recs[0]["final_score"] = None
    with pytest.raises(IncompleteMatrixError, match=r"\(s0, x\)"):
        build_inter_matrix(recs, ["x", "y"])


def test_format_p():
    assert format_p(0.0) == "<1e-12"
    assert format_p(0.000134567) == "1.35e-04"
    assert format_p(0.25) == "0.2500"


matrices = st.integers(3, 12).flatmap(
    lambda n: st.integers(2, 8).flatmap(
        lambda k: arrays(np.int64, (n, k), elements=st.integers(0, 100))
    )
)


@settings(max_examples=150, deadline=None)
@given(matrices)
def test_anova_identity_and_bounds(x):
    m = RatingMatrix.from_array(x)
    a = anova_decompose(m)
    assert a.ssr + a.ssc + a.sse == pytest.approx(a.sst, rel=1e-9, abs=1e-9)
    try:
        r2, r3 = icc_2k(m), icc_3k(m)
    except DegenerateMatrixError:
        return
    for r in (r2, r3):
        assert 0.0 <= r.p_value <= 1.0
        assert r.ci95_low <= r.ci95_high <= 1.0 + 1e-12
    # the consistency interval is exact and always covers its estimate; the
    # absolute-agreement one is a Satterthwaite approximation and need not
    assert r3.ci95_low <= r3.estimate + 1e-9 and r3.estimate <= r3.ci95_high + 1e-9
    assert r3.estimate <= 1.0
    if r2.f_value >= 1:
        assert 0.0 <= r2.estimate <= 1.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(matrices, st.randoms(), st.floats(0.5, 20), st.floats(-50, 50))
def test_invariant_to_order_and_affine_maps(x, rnd, scale, shift):
    m = RatingMatrix.from_array(x)
    rows, cols = list(range(x.shape[0])), list(range(x.shape[1]))
    rnd.shuffle(rows)
    rnd.shuffle(cols)
    moved = RatingMatrix.from_array(x[np.ix_(rows, cols)] * scale + shift)
    try:
        base = (icc_2k(m), icc_3k(m))
    except DegenerateMatrixError:
        return
    for a, b in zip(base, (icc_2k(moved), icc_3k(moved))):
        assert b.estimate == pytest.approx(a.estimate, abs=1e-9)
        if abs(a.ci95_low) < 10:  # the step-up is ill-conditioned next to its pole
            assert b.ci95_low == pytest.approx(a.ci95_low, abs=1e-7)


@settings(max_examples=300, deadline=None)
@given(matrices)
def test_rater_bias_penalizes_only_absolute_agreement(x):
    m = RatingMatrix.from_array(x)
    a = anova_decompose(m)
    n, k = x.shape
    msr, msc, mse = a.ssr / (n - 1), a.ssc / (k - 1), a.sse / ((n - 1) * (k - 1))
    # with MSR < MSE both estimates are negative and the larger ICC(2,k) denominator shrinks its magnitude
    if not (msc > mse and msr >= mse):
        return
    try:
        r2, r3 = icc_2k(m), icc_3k(m)
    except DegenerateMatrixError:
        return
    assert r3.estimate >= r2.estimate - 1e-12


def test_rater_bias_ordering_flips_below_chance():
    m = RatingMatrix.from_array([[8, 86], [2, 54], [8, 29], [48, 42], [40, 2], [0, 12], [0, 67]])
    r2, r3 = icc_2k(m), icc_3k(m)
    assert r3.estimate < r2.estimate < 0
