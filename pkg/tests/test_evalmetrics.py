"""Recognition metrics against brute-force and scipy oracles."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from energylm.evalmetrics import (
    cer,
    corpus_cer,
    corpus_cer_report,
    edit_distance,
    matched_pair_test,
    pr_curve,
    softmax_confidence,
)

# ---------------------------------------------------------------------------
# oracle: full dynamic-programming matrix, kept deliberately naive


def edit_distance_matrix(a, b):
    n, m = len(a), len(b)
    D = np.zeros((n + 1, m + 1), dtype=int)
    D[:, 0] = np.arange(n + 1)
    D[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            D[i, j] = min(D[i - 1, j] + 1, D[i, j - 1] + 1, D[i - 1, j - 1] + cost)
    return int(D[n, m])


def test_edit_distance_trivia():
    assert edit_distance("", "") == 0
    assert edit_distance("abc", "abc") == 0
    assert edit_distance("abc", "") == 3
    assert edit_distance("", "ab") == 2
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance("abc", "acb") == 2


def test_edit_distance_thousand_random_pairs_vs_matrix_oracle():
    r = np.random.default_rng(0)
    letters = "abcd"
    for _ in range(1000):
        a = "".join(r.choice(list(letters), size=r.integers(0, 9)))
        b = "".join(r.choice(list(letters), size=r.integers(0, 9)))
        assert edit_distance(a, b) == edit_distance_matrix(a, b), (a, b)


@settings(max_examples=120, deadline=None)
@given(st.text("ab", max_size=7), st.text("ab", max_size=7), st.text("ab", max_size=7))
def test_edit_distance_triangle_bound(a, b, c):
    """|d(a,c) - d(a,b)| <= d(b,c): editing via b can't beat the direct route."""
    assert abs(edit_distance(a, c) - edit_distance(a, b)) <= edit_distance(b, c)


@given(st.text("abc", max_size=8), st.text("abc", max_size=8))
def test_edit_distance_symmetry(a, b):
    assert edit_distance(a, b) == edit_distance(b, a)


def test_cer_tuple():
    errors, ref_len, rate = cer("abcd", "abxd")
    assert (errors, ref_len, rate) == (1, 4, 0.25)
    assert cer("ab", "ab") == (0, 2, 0.0)


def test_cer_empty_reference_convention():
    assert cer("", "") == (0, 0, 0.0)
    errors, ref_len, rate = cer("", "xy")
    assert errors == 2 and ref_len == 0 and rate == math.inf


def test_corpus_pooling():
    """Pooled errors over pooled length, not a mean of ratios."""
    refs = ["aaaa", "bbbbbb"]
    hyps = ["aaab", "bbbbbb"]
    assert abs(corpus_cer(refs, hyps) - 0.1) < 1e-15


def test_corpus_pooling_is_permutation_invariant():
    refs = ["ab", "cde", "f"]
    hyps = ["ax", "cde", "g"]
    a = corpus_cer(refs, hyps)
    b = corpus_cer(refs[::-1], hyps[::-1])
    assert a == b


def test_corpus_report_holds_out_empty_references():
    report = corpus_cer_report(["abc", "", "de"], ["abc", "xx", "df"])
    assert report["empty_refs"] == 1
    assert report["empty_ref_insertions"] == 2
    assert report["ref_len"] == 5
    assert report["errors"] == 1
    assert abs(report["rate"] - 0.2) < 1e-15


def test_corpus_report_all_empty():
    report = corpus_cer_report([""], ["x"])
    assert report["rate"] == 0.0 and report["empty_ref_insertions"] == 1


def test_corpus_validation():
    with pytest.raises(ValueError):
        corpus_cer(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        corpus_cer([], [])


# ---------------------------------------------------------------------------
# matched-pair significance


def test_matched_pair_identical_errors_is_exactly_one():
    res = matched_pair_test([1.0, 2.0, 0.0], [1.0, 2.0, 0.0])
    assert res.p_value == 1.0
    assert res.z == 0.0 and res.mean_diff == 0.0


def test_matched_pair_constant_nonzero_difference():
    res = matched_pair_test([2.0, 2.0], [1.0, 1.0])
    assert res.p_value == 0.0
    assert res.mean_diff == 1.0
    assert math.isinf(res.z)


def test_matched_pair_vs_normal_cdf_oracle():
    """p = 2 * (1 - Phi(|z|)) with z from the plain t-style statistic."""
    r = np.random.default_rng(5)
    for _ in range(50):
        n = int(r.integers(3, 40))
        a = r.poisson(3.0, size=n).astype(float)
        b = a + r.normal(0.3, 1.0, size=n)
        d = a - b
        if np.allclose(d.std(ddof=1), 0):
            continue
        z = d.mean() / (d.std(ddof=1) / math.sqrt(n))
        want = 2.0 * norm.sf(abs(z))
        res = matched_pair_test(a, b)
        assert abs(res.z - z) < 1e-10
        assert abs(res.p_value - want) < 1e-10


def test_matched_pair_antisymmetry():
    a = [3.0, 1.0, 4.0, 1.0, 5.0]
    b = [2.0, 2.0, 4.0, 0.0, 6.0]
    ra = matched_pair_test(a, b)
    rb = matched_pair_test(b, a)
    assert abs(ra.mean_diff + rb.mean_diff) < 1e-15
    assert abs(ra.z + rb.z) < 1e-12
    assert abs(ra.p_value - rb.p_value) < 1e-12


def test_matched_pair_validation():
    with pytest.raises(ValueError):
        matched_pair_test([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        matched_pair_test([], [])


# ---------------------------------------------------------------------------
# confidences


def test_softmax_confidence_fixtures():
    assert abs(softmax_confidence([0.0, 0.0], 0) - 0.5) < 1e-15
    p = softmax_confidence([1.0, 0.0], 0)
    assert abs(p - math.e / (1 + math.e)) < 1e-12
    # temperature flattens
    hot = softmax_confidence([1.0, 0.0], 0, temperature=10.0)
    assert 0.5 < hot < p


def test_softmax_confidence_with_neg_inf_scores():
    p = softmax_confidence([0.0, -math.inf], 0)
    assert p == 1.0
    p_all = softmax_confidence([-math.inf, -math.inf], 0)
    assert abs(p_all - 0.5) < 1e-15


def test_softmax_confidence_validation():
    with pytest.raises(ValueError):
        softmax_confidence([1.0], 0, temperature=0.0)
    with pytest.raises(IndexError):
        softmax_confidence([1.0], 5)


# ---------------------------------------------------------------------------
# precision-recall


def average_precision_bruteforce(confs, labels):
    """Step-integration of the descending-threshold PR sweep, recomputing
    precision and recall from scratch at every distinct confidence."""
    confs = np.asarray(confs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = labels.sum()
    if pos == 0:
        return [], float("nan")
    points = []
    for t in sorted(set(confs), reverse=True):
        kept = confs >= t
        tp = int((labels[kept] == 1).sum())
        precision = tp / int(kept.sum())
        recall = tp / pos
        points.append((float(t), precision, recall))
    auc, prev = 0.0, 0.0
    for _, p, r in points:
        auc += (r - prev) * p
        prev = r
    return points, auc


def test_pr_curve_trivial_cases():
    points, auc = pr_curve([0.9, 0.1], [1, 0])
    assert auc == 1.0
    points, auc = pr_curve([0.1, 0.9], [1, 0])
    assert abs(auc - 0.5) < 1e-12
    points, auc = pr_curve([0.5, 0.4], [0, 0])
    assert points == [] and math.isnan(auc)


def test_pr_curve_ties_collapse_to_one_operating_point():
    points, _ = pr_curve([0.5, 0.5, 0.2], [1, 0, 1])
    thresholds = [t for t, _, _ in points]
    assert thresholds == [0.5, 0.2]


def test_pr_curve_hundred_fixtures_vs_bruteforce():
    r = np.random.default_rng(11)
    for trial in range(100):
        n = int(r.integers(1, 30))
        confs = np.round(r.random(n), 2)  # rounding forces ties
        labels = r.integers(0, 2, size=n)
        want_points, want_auc = average_precision_bruteforce(confs, labels)
        got_points, got_auc = pr_curve(confs, labels)
        if math.isnan(want_auc):
            assert math.isnan(got_auc) and got_points == []
            continue
        assert len(got_points) == len(want_points), trial
        for (gt, gp, gr), (wt, wp, wr) in zip(got_points, want_points):
            assert abs(gt - wt) < 1e-12
            assert abs(gp - wp) < 1e-12
            assert abs(gr - wr) < 1e-12
        assert abs(got_auc - want_auc) < 1e-12, trial


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=25))
def test_pr_curve_recall_is_monotone(pairs):
    confs = [c for c, _ in pairs]
    labels = [l for _, l in pairs]
    points, auc = pr_curve(confs, labels)
    recalls = [r for _, _, r in points]
    assert recalls == sorted(recalls)
    if points:
        assert recalls[-1] == 1.0
        assert 0.0 <= auc <= 1.0


def test_pr_curve_validation():
    with pytest.raises(ValueError):
        pr_curve([0.5], [2])
    with pytest.raises(ValueError):
        pr_curve([0.5, 0.4], [1])
    with pytest.raises(ValueError):
        pr_curve([], [])
