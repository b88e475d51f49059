"""Character error rate, matched-pair significance, and confidence metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance with unit costs, two-row dynamic program."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, rc in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, hc in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (rc != hc),
            )
        prev = cur
    return prev[-1]


def cer(ref: str, hyp: str):
    """(errors, reference length, rate).

    An empty reference has no denominator: rate is 0.0 when the hypothesis
    is empty too, inf otherwise.  Corpus pooling handles the case separately.
    """
    errors = edit_distance(ref, hyp)
    n = len(ref)
    if n == 0:
        return errors, 0, 0.0 if errors == 0 else math.inf
    return errors, n, errors / n


def corpus_cer_report(refs, hyps) -> dict:
    """Pooled errors over pooled reference length, empty references held out.

    Errors against empty references are reported as a separate insertion
    diagnostic instead of entering the pooled ratio.
    """
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("no utterances")
    errors = 0
    ref_len = 0
    empty_refs = 0
    empty_ref_insertions = 0
    for r, h in zip(refs, hyps):
        e, n, _ = cer(r, h)
        if n == 0:
            empty_refs += 1
            empty_ref_insertions += e
        else:
            errors += e
            ref_len += n
    if ref_len == 0:
        rate = 0.0 if errors == 0 else math.inf
    else:
        rate = errors / ref_len
    return {
        "errors": errors,
        "ref_len": ref_len,
        "rate": rate,
        "empty_refs": empty_refs,
        "empty_ref_insertions": empty_ref_insertions,
    }


def corpus_cer(refs, hyps) -> float:
    return corpus_cer_report(refs, hyps)["rate"]


@dataclass(frozen=True)
class SignificanceResult:
    mean_diff: float
    z: float
    p_value: float
    n: int


def matched_pair_test(errors_a, errors_b) -> SignificanceResult:
    """Two-sided normal test on per-utterance error differences a - b.

    Identical error vectors give exactly p = 1.0; zero variance with a
    nonzero mean gives exactly p = 0.0.  Sample standard deviation (n-1).
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need aligned 1-d error vectors, got {a.shape} vs {b.shape}")
    n = a.size
    if n == 0:
        raise ValueError("no utterances")
    d = a - b
    mean = float(d.mean())
    if np.all(d == 0.0):
        return SignificanceResult(0.0, 0.0, 1.0, n)
    sd = float(d.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        return SignificanceResult(mean, math.inf if mean > 0 else -math.inf, 0.0, n)
    z = mean / (sd / math.sqrt(n))
    return SignificanceResult(mean, z, math.erfc(abs(z) / math.sqrt(2.0)), n)


def softmax_confidence(scores, index: int, temperature: float = 1.0) -> float:
    """Softmax probability of scores[index] at the given temperature.

    -inf scores carry zero mass; if every score is -inf the candidates are
    indistinguishable and the mass is split evenly.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    s = np.asarray(scores, dtype=np.float64) / temperature
    m = s.max()
    if m == -math.inf:
        return 1.0 / s.size
    w = np.exp(s - m)
    return float(w[index] / w.sum())


def pr_curve(confidences, labels):
    """Precision/recall along a descending confidence sweep, ties grouped.

    Returns (points, auc): points are (threshold, precision, recall) per
    distinct confidence value; auc is average precision, the sum of
    precision * recall-increment over the sweep.  With no positive labels
    the curve is empty and the auc is nan.
    """
    c = np.asarray(confidences, dtype=np.float64)
    y = np.asarray(labels)
    if c.shape != y.shape or c.ndim != 1:
        raise ValueError(f"need aligned 1-d arrays, got {c.shape} vs {y.shape}")
    if c.size == 0:
        raise ValueError("no points")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.float64)
    n_pos = y.sum()
    if n_pos == 0:
        return [], math.nan
    order = np.argsort(-c, kind="stable")
    c_sorted = c[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    pred = np.arange(1, c.size + 1)
    # last index of each tie group = the operating point at that threshold
    is_last = np.empty(c.size, dtype=bool)
    is_last[:-1] = c_sorted[:-1] != c_sorted[1:]
    is_last[-1] = True
    last = np.flatnonzero(is_last)
    points = []
    auc = 0.0
    prev_recall = 0.0
    for i in last:
        precision = tp[i] / pred[i]
        recall = tp[i] / n_pos
        points.append((float(c_sorted[i]), float(precision), float(recall)))
        auc += (recall - prev_recall) * precision
        prev_recall = recall
    return points, float(auc)
