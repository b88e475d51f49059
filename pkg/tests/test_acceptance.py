"""End-to-end acceptance checks for the package.

Each test covers one release criterion and prints a single [PASS]/[FAIL]
line (run with -s to see them as they happen).  The slow ones, noise
contrastive convergence and the four-seed method comparison, dominate the
runtime of the whole suite; their budgets are stated in the docstrings.
"""

import itertools
import json
import os
import time

import numpy as np
import pytest
from scipy.stats import norm

from energylm import cli
from energylm.backbones import BackboneConfig, BidirBackbone, CausalBackbone
from energylm.energy import ARCHS, CAUSAL_ARCHS, KINDS, EnergyModel, empirical_length_prior
from energylm.evalmetrics import cer, edit_distance, matched_pair_test, pr_curve
from energylm.proposal import AutoregressiveLM
from energylm.rng import stream
from energylm.synthbench import run_method_comparison
from energylm.tensor import Tape, sum_all
from energylm.training import (
    enumeration_kl,
    exact_mle_loss,
    mis_chain,
    nce_objective,
    nce_step,
    snis_estimate,
    snis_weights,
)
from energylm.optim import Adam
from energylm.vocab import Vocab


class criterion:
    """Prints one verdict line per acceptance criterion."""

    def __init__(self, number, text):
        self.number = number
        self.text = text

    def __enter__(self):
        self.t0 = time.time()
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "FAIL" if exc_type else "PASS"
        print(f"[{verdict}] criterion {self.number}: {self.text} ({time.time() - self.t0:.1f}s)")
        return False


def enumerate_support(vocab, max_len):
    return [
        s
        for l in range(1, max_len + 1)
        for s in itertools.product(vocab.regular_ids, repeat=l)
    ]


def build_elm(arch, kind, bb_cfg, vocab, rng, lengths=None):
    backbone = CausalBackbone(bb_cfg, rng) if arch in CAUSAL_ARCHS else BidirBackbone(bb_cfg, rng)
    prior = (
        empirical_length_prior(lengths, bb_cfg.max_len)
        if kind == "per_length"
        else None
    )
    return EnergyModel(arch, kind, backbone, vocab, length_prior=prior)


# ------------------------------------------------------------- criterion 1


def finite_difference_mismatch(model, objective, rng, coords_per_param=2, h=1e-5):
    """Worst relative error between tape gradients and central differences.

    Near-zero coordinates are compared against a 1e-3 floor so that finite
    difference roundoff on a genuinely zero gradient does not register as a
    relative error.
    """
    with Tape() as tape:
        tape.backward(objective())
    grads = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in model.params.items()
    }
    model.params.zero_grad()
    worst = 0.0
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        for idx in rng.choice(flat.size, size=min(coords_per_param, flat.size), replace=False):
            keep = flat[idx]
            flat[idx] = keep + h
            hi = float(objective().data)
            flat[idx] = keep - h
            lo = float(objective().data)
            flat[idx] = keep
            fd = (hi - lo) / (2.0 * h)
            an = float(grads[name].reshape(-1)[idx])
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-3))
    return worst


def test_c1_gradients_match_finite_differences():
    """Every architecture and normalization, three objectives, five seeds."""
    with criterion(1, "analytic gradients match central finite differences"):
        vocab = Vocab.from_characters("ab")
        bb_cfg = BackboneConfig(vocab_size=vocab.size, d_model=4, n_heads=2, n_blocks=1, max_len=3)
        batch = [(4,), (4, 5), (5, 4, 5)]  # includes a maximum-length sentence
        worst = 0.0
        for arch in ARCHS:
            for kind in KINDS:
                for seed in range(5):
                    m = build_elm(arch, kind, bb_cfg, vocab, stream(seed, f"c1-{arch}-{kind}"), lengths=[1, 2, 3])
                    alm = AutoregressiveLM(CausalBackbone(bb_cfg, stream(seed, "c1-prop")), vocab)
                    noise = alm.sample(stream(seed, "c1-noise"), 3)
                    r = stream(seed, f"c1-coords-{arch}-{kind}")
                    worst = max(
                        worst,
                        finite_difference_mismatch(m, lambda: sum_all(m.energy_batch(batch)), r),
                        finite_difference_mismatch(m, lambda: nce_objective(m, alm, batch, noise, 1.0)[0], r),
                        finite_difference_mismatch(m, lambda: exact_mle_loss(m, batch), r),
                    )
        assert worst < 1e-4, f"worst relative gradient error {worst:g}"


# ------------------------------------------------------------- criterion 2


def test_c2_enumerated_probabilities_normalize():
    with criterion(2, "enumerated probabilities sum to one / to the length prior"):
        vocab = Vocab.from_characters("abcd")
        bb_cfg = BackboneConfig(vocab_size=vocab.size, d_model=8, n_heads=2, n_blocks=1, max_len=5)

        m = build_elm("sum_target_logit", "global", bb_cfg, vocab, stream(0, "c2-global"))
        support = enumerate_support(vocab, 5)
        mass = float(np.exp(m.log_prob_batch(support)).sum())
        assert abs(mass - 1.0) < 1e-10, f"global mass {mass!r}"

        lengths = [1, 1, 1, 2, 3, 3, 4, 4, 4, 4, 5]  # deliberately lopsided prior
        m = build_elm("hidden2scalar", "per_length", bb_cfg, vocab, stream(0, "c2-perlen"), lengths=lengths)
        prior = empirical_length_prior(lengths, 5)
        lp = m.log_prob_batch(support)
        by_len = {}
        for s, p in zip(support, np.exp(lp)):
            by_len[len(s)] = by_len.get(len(s), 0.0) + p
        for l in range(1, 6):
            assert abs(by_len[l] - prior[l]) < 1e-10, f"length {l}: mass {by_len[l]!r} prior {prior[l]!r}"


# ------------------------------------------------------------- criterion 3


def test_c3_nce_recovers_a_known_law():
    """20k noise contrastive steps drive enumerated KL below 0.05 nats.

    Data is drawn iid from an explicit law over the 14 sentences of a
    two-letter world, the proposal is pretrained on the same draws, and
    the learning rate is dropped once for the second half so parameter
    noise settles.  Budget: under 15 minutes.
    """
    with criterion(3, "noise contrastive training reaches KL < 0.05 nats"):
        vocab = Vocab.from_characters("ab")
        bb_cfg = BackboneConfig(vocab_size=vocab.size, d_model=8, n_heads=2, n_blocks=1, max_len=3)
        elm = build_elm("sum_target_logit", "global", bb_cfg, vocab, stream(0, "c3-elm"))

        support = enumerate_support(vocab, 3)
        a_id = vocab.encode("a")[0]
        tilt = np.array([sum(1.0 if t == a_id else -1.0 for t in s) for s in support])
        probs = np.exp(0.5 * tilt)
        probs /= probs.sum()
        law = dict(zip(support, probs))

        draws = stream(0, "c3-draws")
        alm = AutoregressiveLM(CausalBackbone(bb_cfg, stream(0, "c3-prop")), vocab)
        opt_phi = Adam(3e-3)
        for _ in range(400):
            idx = draws.choice(len(support), size=32, p=probs)
            alm.mle_step([support[i] for i in idx], opt_phi)

        steps = 20_000
        opt = Adam(3e-3)
        noise_rng = stream(0, "c3-noise")
        for step in range(steps):
            if step == steps // 2:
                opt.lr = 1e-3
            idx = draws.choice(len(support), size=16, p=probs)
            nce_step(elm, alm, [support[i] for i in idx], 1.0, opt, noise_rng)

        kl = enumeration_kl(law, elm)
        assert kl < 0.05, f"KL after {steps} steps is {kl!r} nats"


# ------------------------------------------------------------- criterion 4


def test_c4_independence_sampler_stationarity():
    with criterion(4, "two-state chain hits {0.269, 0.731} and never rejects uphill"):
        lo, hi = (4,), (5,)
        weights = {lo: 0.0, hi: 1.0}  # log weights: ratio e between the states

        r = stream(0, "c4")
        n = 100_000
        proposals = [hi if b else lo for b in r.integers(0, 2, size=n)]
        states, _ = mis_chain(weights.__getitem__, proposals, r.random(n), start=lo)
        freq_hi = sum(1 for s in states if s == hi) / n
        expect = np.e / (1.0 + np.e)
        assert abs(freq_hi - expect) < 0.01, f"frequency {freq_hi!r} vs {expect!r}"
        assert abs((1.0 - freq_hi) - 1.0 / (1.0 + np.e)) < 0.01

        # ratio >= 1 must accept even under the most adversarial draw
        us = np.full(2, 1.0 - 1e-12)
        states, n_acc = mis_chain(weights.__getitem__, [hi, hi], us, start=lo)
        assert n_acc == 2 and states == [hi, hi]


# ------------------------------------------------------------- criterion 5


def test_c5_importance_sampled_gradient_converges():
    """Self-normalized IS estimate of the model expectation of the energy
    gradient lands within three standard errors of enumeration, for every
    parameter coordinate, at 1e5 draws."""
    with criterion(5, "importance-sampled energy gradient within 3 SE of enumeration"):
        vocab = Vocab.from_characters("ab")
        bb_cfg = BackboneConfig(vocab_size=vocab.size, d_model=4, n_heads=2, n_blocks=1, max_len=2)
        elm = build_elm("sum_target_logit", "global", bb_cfg, vocab, stream(11, "c5-elm"))
        alm = AutoregressiveLM(CausalBackbone(bb_cfg, stream(11, "c5-alm")), vocab)

        support = enumerate_support(vocab, 2)
        names = sorted(elm.params.names())

        def grad_vector(x):
            with Tape() as tape:
                tape.backward(elm.energy(x))
            out = np.concatenate(
                [
                    (elm.params[n].grad if elm.params[n].grad is not None else np.zeros_like(elm.params[n].data)).reshape(-1)
                    for n in names
                ]
            )
            elm.params.zero_grad()
            return out

        n_coords = sum(elm.params[n].data.size for n in names)
        # the proposal can emit the empty sentence, which carries zero weight
        g_unique = np.stack([grad_vector(x) for x in support] + [np.zeros(n_coords)])
        probs = np.exp(elm.log_prob_batch(support))
        exact = probs @ g_unique[:-1]

        n = 100_000
        draws = alm.sample(stream(11, "c5-draws"), n)
        index = {s: j for j, s in enumerate(support)}
        empty_slot = len(support)
        inv = np.array([index.get(d, empty_slot) for d in draws])
        log_score = np.append(elm.log_score_batch(support).data, -np.inf)
        log_q = np.append(alm.log_prob_values(support), alm.log_prob_values([()])[0])
        w = snis_weights(log_score[inv], log_q[inv])

        for c0 in range(0, n_coords, 40):
            vals = g_unique[inv, c0 : c0 + 40]
            est, se = snis_estimate(vals, w)
            err = np.abs(est - exact[c0 : c0 + 40])
            assert np.all(err < 3.0 * se + 1e-12), (
                f"coords {c0}..{c0 + vals.shape[1]}: err {err.max()!r} vs 3se {(3 * se).min()!r}"
            )


# ------------------------------------------------------------- criterion 6


def test_c6_dynamic_noise_ordering_on_benchmark():
    """Dev-tuned test CER ordering on the synthetic rescoring benchmark:
    dynamic-noise training <= static-noise training, both beat the first
    pass, on at least 3 of 4 seeds.  Budget: under 30 minutes."""
    with criterion(6, "dynamic noise <= static noise < no-LM on >= 3 of 4 seeds"):
        wins = 0
        table = []
        for seed in range(4):
            res = run_method_comparison(seed)
            ok = (
                res["dnce"] <= res["nce"]
                and res["nce"] < res["no_lm"]
                and res["dnce"] < res["no_lm"]
            )
            wins += ok
            table.append(f"seed {seed}: no_lm={res['no_lm']:.4f} nce={res['nce']:.4f} dnce={res['dnce']:.4f} {'ok' if ok else 'violated'}")
        assert wins >= 3, "ordering held on only %d of 4 seeds\n%s" % (wins, "\n".join(table))


# ------------------------------------------------------------- criterion 7


def test_c7_evaluation_kernels_match_oracles():
    with criterion(7, "CER, matched-pair p, and PR-AUC match independent oracles"):
        r = stream(0, "c7")

        def dp_distance(a, b):
            d = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
            d[:, 0] = np.arange(len(a) + 1)
            d[0, :] = np.arange(len(b) + 1)
            for i in range(1, len(a) + 1):
                for j in range(1, len(b) + 1):
                    d[i, j] = min(
                        d[i - 1, j] + 1,
                        d[i, j - 1] + 1,
                        d[i - 1, j - 1] + (a[i - 1] != b[j - 1]),
                    )
            return int(d[len(a), len(b)])

        alphabet = "abc"
        for _ in range(1000):
            ref = "".join(r.choice(list(alphabet), size=r.integers(0, 8)))
            hyp = "".join(r.choice(list(alphabet), size=r.integers(0, 8)))
            want = dp_distance(ref, hyp)
            assert edit_distance(ref, hyp) == want
            if ref:
                assert cer(ref, hyp) == (want, len(ref), want / len(ref))

        same = [2.0, 0.0, 1.0, 3.0]
        assert matched_pair_test(same, same).p_value == 1.0
        for _ in range(50):
            refs, a_sys, b_sys = [], [], []
            for _ in range(int(r.integers(3, 12))):
                refs.append("".join(r.choice(list(alphabet), size=r.integers(1, 7))))
                a_sys.append("".join(r.choice(list(alphabet), size=r.integers(0, 7))))
                b_sys.append("".join(r.choice(list(alphabet), size=r.integers(0, 7))))
            errs_a = [float(edit_distance(rf, x)) for rf, x in zip(refs, a_sys)]
            errs_b = [float(edit_distance(rf, y)) for rf, y in zip(refs, b_sys)]
            res = matched_pair_test(errs_a, errs_b)
            diffs = np.array(errs_a) - np.array(errs_b)
            if np.all(diffs == 0.0):
                want = 1.0
            else:
                sd = diffs.std(ddof=1)
                if sd == 0.0:
                    want = 0.0
                else:
                    z = diffs.mean() / (sd / np.sqrt(len(diffs)))
                    want = 2.0 * norm.sf(abs(z))
            assert abs(res.p_value - want) < 1e-10

        def average_precision(labels, scores):
            order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
            y = np.asarray(labels, dtype=np.float64)[order]
            total = y.sum()
            hits, area, i = 0.0, 0.0, 0
            prev_recall = 0.0
            s = np.asarray(scores, dtype=np.float64)[order]
            while i < len(y):
                j = i
                while j < len(y) and s[j] == s[i]:
                    hits += y[j]
                    j += 1
                recall = hits / total
                precision = hits / j
                area += (recall - prev_recall) * precision
                prev_recall = recall
                i = j
            return area

        for case in range(100):
            n = int(r.integers(2, 30))
            labels = (r.random(n) < 0.4).astype(int)
            if labels.sum() == 0:
                labels[int(r.integers(n))] = 1
            scores = np.round(r.random(n), 1)  # coarse grid forces ties
            _, auc = pr_curve(scores.tolist(), labels.tolist())
            want = average_precision(labels, scores)
            assert abs(auc - want) < 1e-12, f"case {case}: {auc!r} vs {want!r}"


# ------------------------------------------------------------- criterion 8


def test_c8_divergence_guard_aborts_cleanly(tmp_path, capsys):
    """An oversized learning rate with a tiny sample count must trip the
    mean-energy guard and exit through the dedicated status code without
    leaving a checkpoint behind."""
    with criterion(8, "misconfigured sampled-likelihood run aborts via the divergence guard"):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(
            "schema_version=1\nmodel=elm\narch=sum_target_logit\nkind=global\n"
            "method=mle-is\nmax_len=4\nd_model=8\nn_heads=2\nn_blocks=1\n"
            "steps=60\nbatch_size=8\nn_samples=2\nlr=25.0\nseed=0\nlog_every=10\n"
        )
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("ab\nba\naabb\nbb\na\nabab\n")
        out = tmp_path / "out"
        rc = cli.main(["train-elm", str(cfg), str(corpus), str(out)])
        err = capsys.readouterr().err
        assert rc == 4, f"expected exit code 4, got {rc}"
        assert err.startswith("diverged: training diverged at step")
        assert not os.path.exists(out / "checkpoints" / "elm.ckpt")


# ------------------------------------------------------------- criterion 9


def test_c9_pipeline_is_byte_deterministic(tmp_path, capsys):
    with criterion(9, "train/rescore/evaluate reruns are byte-identical"):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "schema_version=1\nmodel=elm\narch=sum_target_logit\nkind=global\n"
            "method=dnce\nmax_len=5\nd_model=8\nn_heads=2\nn_blocks=1\n"
            "steps=6\nbatch_size=4\nlr=0.05\nproposal_lr=0.05\nseed=9\n"
            "log_every=3\nalpha=0.4\nbeta=0.0\n"
        )
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("ab\nba\naab\nabb\nb\na\nabab\nbb\n")
        nbest = tmp_path / "nbest.jsonl"
        nbest.write_text(
            "\n".join(
                json.dumps(rec)
                for rec in [
                    {"utt": "u1", "ref": "ab", "hyps": [{"text": "ab", "am": -1.0}, {"text": "ba", "am": -1.2}]},
                    {"utt": "u2", "ref": "ba", "hyps": [{"text": "aa", "am": -0.5}, {"text": "ba", "am": -0.7}]},
                ]
            )
            + "\n"
        )

        def run(tag):
            out = tmp_path / tag
            assert cli.main(["train-elm", str(cfg), str(corpus), str(out / "train")]) == 0
            model = out / "train" / "checkpoints" / "elm.ckpt"
            assert cli.main(["rescore", str(nbest), str(out / "res"), "--model", str(model), "--config", str(cfg)]) == 0
            sel = out / "res" / "selections" / "selections.jsonl"
            assert cli.main(["evaluate", str(nbest), str(sel), str(out / "eval")]) == 0
            return {
                "selections": sel.read_bytes(),
                "metrics": (out / "train" / "metrics" / "train_elm.jsonl").read_bytes(),
                "checkpoint": model.read_bytes(),
                "report": (out / "eval" / "reports" / "evaluation.txt").read_bytes(),
            }

        first = run("one")
        second = run("two")
        capsys.readouterr()
        for name in first:
            assert first[name] == second[name], f"{name} differs between identical runs"
