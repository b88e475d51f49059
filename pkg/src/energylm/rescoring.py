"""N-best list rescoring with interpolated scores.

Per hypothesis the combined score is am + alpha * lm + beta * length; the
selection is the combined-score argmax with ties broken toward the earlier
first-pass rank.  LM scores of -inf are legal (a model may place a
hypothesis outside its support but still has to rank it); a scorer that
raises marks the utterance and falls back to the first-pass best.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import CorpusError
from .evalmetrics import corpus_cer, softmax_confidence


@dataclass
class Hypothesis:
    text: str
    am: float
    lm: float | None = None
    combined: float | None = None

    @property
    def length(self) -> int:
        return len(self.text)


@dataclass
class NBestList:
    utt: str
    ref: str
    hyps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.hyps:
            raise ValueError(f"utterance {self.utt!r} has no hypotheses")


@dataclass(frozen=True)
class InterpWeights:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("weights must be finite")


def combined_score(h: Hypothesis, w: InterpWeights) -> float:
    """am + alpha * lm + beta * length; alpha of 0 ignores the lm score
    entirely so an unscored or -inf hypothesis still ranks by am."""
    if w.alpha == 0.0:
        lm_term = 0.0
    else:
        if h.lm is None:
            raise ValueError("hypothesis has no lm score")
        lm_term = w.alpha * h.lm
    return h.am + lm_term + w.beta * h.length


def fill_lm_scores(lists, scorer) -> set:
    """Run the scorer over every hypothesis; returns the utterance ids where
    some hypothesis failed to score (their lm slots stay None)."""
    failed = set()
    for nb in lists:
        try:
            scores = [float(scorer(h.text)) for h in nb.hyps]
        except Exception:
            failed.add(nb.utt)
            for h in nb.hyps:
                h.lm = None
            continue
        for h, s in zip(nb.hyps, scores):
            h.lm = s
    return failed


def _select(nb: NBestList, w: InterpWeights, temperature: float):
    scores = []
    for h in nb.hyps:
        h.combined = combined_score(h, w)
        scores.append(h.combined)
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best, softmax_confidence(scores, best, temperature)


def rescore(lists, scorer, w: InterpWeights, temperature: float = 1.0):
    """Selections as dicts {utt, choice_index, confidence, fell_back}.

    A scorer failure anywhere in an utterance falls back to the first-pass
    best; its confidence is then computed from am scores alone.
    """
    failed = fill_lm_scores(lists, scorer)
    out = []
    for nb in lists:
        if nb.utt in failed:
            choice = 0
            conf = softmax_confidence([h.am for h in nb.hyps], 0, temperature)
        else:
            choice, conf = _select(nb, w, temperature)
        out.append(
            {
                "utt": nb.utt,
                "choice_index": choice,
                "confidence": conf,
                "fell_back": nb.utt in failed,
            }
        )
    return out


def selection_texts(lists, selections):
    by_utt = {nb.utt: nb for nb in lists}
    return [by_utt[sel["utt"]].hyps[sel["choice_index"]].text for sel in selections]


def tune_weights(dev_lists, scorer, grid, temperature: float = 1.0):
    """Grid-search (alpha, beta) minimizing pooled dev CER.

    Ties prefer smaller |alpha|, then smaller |beta|, then the raw values,
    so the result never depends on grid order.  Returns (weights, dev_cer).
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("empty grid")
    fill_lm_scores(dev_lists, scorer)
    refs = [nb.ref for nb in dev_lists]
    best = None
    for a, b in grid:
        w = InterpWeights(a, b)
        sels = []
        for nb in dev_lists:
            has_scores = all(h.lm is not None for h in nb.hyps)
            choice, _ = _select(nb, w if has_scores else InterpWeights(0.0, 0.0), temperature)
            if not has_scores:
                choice = 0
            sels.append(nb.hyps[choice].text)
        rate = corpus_cer(refs, sels)
        key = (rate, abs(a), abs(b), a, b)
        if best is None or key < best[0]:
            best = (key, w, rate)
    return best[1], best[2]


def confidence_of_selection(nb: NBestList, w: InterpWeights, temperature: float = 1.0) -> float:
    """Softmax share of the selected hypothesis among the n-best."""
    choice, conf = _select(nb, w, temperature)
    return conf


# ---- model-backed scorers ------------------------------------------------------


def elm_scorer(elm, vocab):
    """log of the unnormalized probability; -inf outside the support.

    The normalizer is shared by every hypothesis of an utterance, so
    ranking never needs it.
    """

    def score(text: str) -> float:
        try:
            ids = vocab.encode(text)
        except KeyError:
            return -math.inf  # unknown character: probability zero
        if not elm.in_support(ids):
            return -math.inf
        return float(elm.log_score_batch([ids]).data[0])

    return score


def alm_scorer(alm, vocab):
    def score(text: str) -> float:
        try:
            ids = vocab.encode(text)
        except KeyError:
            return -math.inf
        if len(ids) > alm.max_len:
            return -math.inf
        return float(alm.log_prob_values([ids])[0])

    return score


def pll_scorer(backbone, vocab):
    from .energy import pll_score

    def score(text: str) -> float:
        try:
            ids = vocab.encode(text)
        except KeyError:
            return -math.inf
        if len(ids) > backbone.cfg.max_len:
            return -math.inf
        return pll_score(backbone, ids, vocab)

    return score


# ---- file formats ---------------------------------------------------------------


def read_nbest(path):
    """JSON-lines, one utterance per line:
    {"utt": str, "ref": str, "hyps": [{"text": str, "am": float}, ...]}"""
    lists = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: invalid JSON ({e.msg})") from None
            try:
                utt = rec["utt"]
                ref = rec["ref"]
                hyps = [Hypothesis(text=h["text"], am=float(h["am"])) for h in rec["hyps"]]
            except (KeyError, TypeError) as e:
                raise CorpusError(f"line {lineno}: malformed record ({e})") from None
            if not isinstance(utt, str) or not isinstance(ref, str):
                raise CorpusError(f"line {lineno}: utt and ref must be strings")
            if utt in seen:
                raise CorpusError(f"line {lineno}: duplicate utterance id {utt!r}")
            seen.add(utt)
            try:
                lists.append(NBestList(utt=utt, ref=ref, hyps=hyps))
            except ValueError as e:
                raise CorpusError(f"line {lineno}: {e}") from None
    return lists


def write_selections(path, selections) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sel in selections:
            f.write(json.dumps(sel, sort_keys=True) + "\n")


def read_selections(path):
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: invalid JSON ({e.msg})") from None
            if "utt" not in rec or "choice_index" not in rec:
                raise CorpusError(f"line {lineno}: selection needs utt and choice_index")
            out.append(rec)
    return out
