"""Synthetic rescoring benchmark around a toy syllable grammar.

Sentences are 1..4 consonant-vowel syllables over {b,d,g} x {a,i,u} with a
skewed syllable distribution, so there is real structure for a language
model to learn.  N-best lists are built by corrupting the reference with
random character edits and scoring each candidate with a noisy first-pass
log-score that decays with its edit distance, which leaves the first pass
wrong often enough for rescoring to matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbones import BackboneConfig, CausalBackbone
from .energy import EnergyModel, empirical_length_prior
from .evalmetrics import corpus_cer, edit_distance
from .optim import Adam
from .proposal import AutoregressiveLM
from .rescoring import NBestList, Hypothesis, elm_scorer, rescore, selection_texts, tune_weights
from .rng import stream
from .training import NceConfig, train_nce
from .data import shuffled_batches
from .vocab import Vocab

CONSONANTS = "bdg"
VOWELS = "aiu"
CONSONANT_P = (0.5, 0.3, 0.2)
VOWEL_P = (0.5, 0.3, 0.2)
SYLLABLE_COUNT_P = (0.25, 0.40, 0.25, 0.10)  # 1..4 syllables
MAX_LEN = 8


def make_vocab() -> Vocab:
    return Vocab.from_characters(CONSONANTS + VOWELS)


def sample_sentence(rng: np.random.Generator) -> str:
    n = 1 + int(rng.choice(4, p=SYLLABLE_COUNT_P))
    parts = []
    for _ in range(n):
        c = CONSONANTS[int(rng.choice(3, p=CONSONANT_P))]
        v = VOWELS[int(rng.choice(3, p=VOWEL_P))]
        parts.append(c + v)
    return "".join(parts)


def sample_corpus(rng: np.random.Generator, n: int) -> list:
    return [sample_sentence(rng) for _ in range(n)]


def corrupt(text: str, rng: np.random.Generator, n_edits: int) -> str:
    alphabet = CONSONANTS + VOWELS
    chars = list(text)
    for _ in range(n_edits):
        ops = ["sub"]
        if len(chars) > 1:
            ops.append("del")
        if len(chars) < MAX_LEN:
            ops.append("ins")
        op = ops[int(rng.integers(len(ops)))]
        if op == "sub":
            i = int(rng.integers(len(chars)))
            choices = [ch for ch in alphabet if ch != chars[i]]
            chars[i] = choices[int(rng.integers(len(choices)))]
        elif op == "del":
            del chars[int(rng.integers(len(chars)))]
        else:
            i = int(rng.integers(len(chars) + 1))
            chars.insert(i, alphabet[int(rng.integers(len(alphabet)))])
    return "".join(chars)


@dataclass(frozen=True)
class NbestSpec:
    n_hyps: int = 6
    max_edits: int = 3
    am_per_char: float = -1.5  # length-dependent base so am looks like a log-score
    am_per_edit: float = -2.0
    am_noise: float = 1.6
    drop_ref_prob: float = 0.12


def make_nbest(refs, rng: np.random.Generator, spec: NbestSpec = NbestSpec()) -> list:
    lists = []
    for i, ref in enumerate(refs):
        cands = {}
        if rng.random() >= spec.drop_ref_prob:
            cands[ref] = 0
        attempts = 0
        while len(cands) < spec.n_hyps and attempts < 50 * spec.n_hyps:
            attempts += 1
            n_edits = 1 + int(rng.integers(spec.max_edits))
            cand = corrupt(ref, rng, n_edits)
            if cand not in cands:
                cands[cand] = edit_distance(ref, cand)
        hyps = []
        for text, edits in cands.items():
            am = (
                spec.am_per_char * len(text)
                + spec.am_per_edit * edits
                + spec.am_noise * rng.normal()
            )
            hyps.append(Hypothesis(text=text, am=float(am)))
        hyps.sort(key=lambda h: (-h.am, h.text))
        lists.append(NBestList(utt=f"utt{i:05d}", ref=ref, hyps=hyps))
    return lists


@dataclass(frozen=True)
class BenchmarkData:
    vocab: Vocab
    train_texts: list
    dev_lists: list
    test_lists: list


def build_benchmark(seed: int, n_train: int = 1600, n_dev: int = 120, n_test: int = 300) -> BenchmarkData:
    vocab = make_vocab()
    train = sample_corpus(stream(seed, "bench-train"), n_train)
    dev = make_nbest(sample_corpus(stream(seed, "bench-dev"), n_dev), stream(seed, "bench-dev-nbest"))
    test = make_nbest(sample_corpus(stream(seed, "bench-test"), n_test), stream(seed, "bench-test-nbest"))
    return BenchmarkData(vocab, train, dev, test)


def first_pass_cer(lists) -> float:
    return corpus_cer([nb.ref for nb in lists], [nb.hyps[0].text for nb in lists])


DEFAULT_GRID = tuple(
    (a, b) for a in (0.0, 0.2, 0.4, 0.7, 1.0, 1.5) for b in (-1.0, -0.5, 0.0, 0.5, 1.0)
)


def tuned_test_cer(elm, vocab, dev_lists, test_lists, grid=DEFAULT_GRID, temperature: float = 1.0):
    """Tune (alpha, beta) on dev, rescore test; returns (test CER, weights)."""
    scorer = elm_scorer(elm, vocab)
    weights, _ = tune_weights(dev_lists, scorer, grid, temperature)
    sels = rescore(test_lists, scorer, weights, temperature)
    texts = selection_texts(test_lists, sels)
    return corpus_cer([nb.ref for nb in test_lists], texts), weights


def _make_backbone(vocab: Vocab, rng, d_model: int = 32) -> CausalBackbone:
    cfg = BackboneConfig(
        vocab_size=vocab.size, max_len=MAX_LEN, d_model=d_model, n_heads=2, n_blocks=2
    )
    return CausalBackbone(cfg, rng)


def pretrain_alm(
    vocab: Vocab,
    texts,
    seed: int,
    steps: int = 500,
    batch_size: int = 64,
    lr: float = 2e-3,
    name: str = "alm",
) -> AutoregressiveLM:
    alm = AutoregressiveLM(_make_backbone(vocab, stream(seed, f"{name}-init")), vocab)
    seqs = [vocab.encode(t) for t in texts]
    opt = Adam(lr)
    batches = shuffled_batches(seqs, batch_size, stream(seed, f"{name}-batching"))
    for _ in range(steps):
        alm.mle_step(next(batches), opt)
    return alm


def run_method_comparison(seed: int, train_steps: int = 1200, batch_size: int = 48) -> dict:
    """Train a static-noise and a dynamic-noise energy model of the same
    architecture on one benchmark instance and compare tuned test CERs
    against the first pass.  Returns the three rates plus tuned weights.

    Both noise models start from the same pretraining recipe; the dynamic
    one keeps taking likelihood steps during energy training.
    """
    bench = build_benchmark(seed)
    vocab = bench.vocab
    seqs = [vocab.encode(t) for t in bench.train_texts]

    noise = pretrain_alm(vocab, bench.train_texts, seed, name="nce-noise")
    elm_nce = EnergyModel(
        "sum_target_logit", "global", _make_backbone(vocab, stream(seed, "elm-nce-init")), vocab
    )
    train_nce(elm_nce, noise, seqs, NceConfig(steps=train_steps, batch_size=batch_size, lr=2e-3), seed)

    dyn_noise = pretrain_alm(vocab, bench.train_texts, seed, name="dnce-noise")
    elm_dnce = EnergyModel(
        "sum_target_logit", "global", _make_backbone(vocab, stream(seed, "elm-dnce-init")), vocab
    )
    train_nce(
        elm_dnce,
        dyn_noise,
        seqs,
        NceConfig(
            steps=train_steps,
            batch_size=batch_size,
            lr=2e-3,
            dynamic_noise=True,
            proposal_lr=2e-3,
        ),
        seed,
    )

    cer_nce, w_nce = tuned_test_cer(elm_nce, vocab, bench.dev_lists, bench.test_lists)
    cer_dnce, w_dnce = tuned_test_cer(elm_dnce, vocab, bench.dev_lists, bench.test_lists)
    return {
        "no_lm": first_pass_cer(bench.test_lists),
        "nce": cer_nce,
        "dnce": cer_dnce,
        "nce_weights": (w_nce.alpha, w_nce.beta),
        "dnce_weights": (w_dnce.alpha, w_dnce.beta),
    }
