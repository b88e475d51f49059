"""Command-line surface tying the library into runnable experiments.

Every command writes into a fixed output layout under OUT_DIR:
checkpoints/, metrics/, selections/, reports/.  Exit codes are
categorized: 0 ok, 2 configuration, 3 data, 4 divergence, 5 enumeration
budget, 1 anything else.  No artifact contains a timestamp, so reruns with
identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from .backbones import BackboneConfig, BidirBackbone, CausalBackbone
from .config import load_run_config, parse_overrides
from .data import load_corpus
from .energy import CAUSAL_ARCHS, EnergyModel, empirical_length_prior
from .errors import BudgetError, ConfigError, CorpusError, DivergenceError
from .evalmetrics import corpus_cer_report, edit_distance, matched_pair_test, pr_curve
from .optim import Adam
from .proposal import AutoregressiveLM
from .rescoring import (
    InterpWeights,
    alm_scorer,
    elm_scorer,
    pll_scorer,
    read_nbest,
    read_selections,
    rescore,
    write_selections,
)
from .rng import stream
from .training import MleConfig, NceConfig, mis_states, train_mle, train_nce
from .vocab import Vocab

LAYOUT = ("checkpoints", "metrics", "selections", "reports")


def _prepare(out_dir: str) -> str:
    for sub in LAYOUT:
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    return out_dir


def _write_jsonl(path: str, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _vocab_from_corpus(path: str) -> Vocab:
    with open(path, "r", encoding="utf-8") as f:
        chars = sorted(set(f.read()) - {"\n"})
    if not chars:
        raise CorpusError(f"{path}: no characters to build a vocabulary from")
    return Vocab.from_characters(chars)


def _backbone_config(cfg, vocab: Vocab) -> BackboneConfig:
    return BackboneConfig(
        vocab_size=vocab.size,
        max_len=cfg.max_len,
        d_model=cfg.d_model,
        n_heads=cfg.n_heads,
        n_blocks=cfg.n_blocks,
    )


def _load_config(args):
    path = getattr(args, "config", None)
    return load_run_config(path, parse_overrides(getattr(args, "set", None)))


def cmd_train_alm(args) -> int:
    cfg = _load_config(args)
    if cfg.model != "alm":
        raise ConfigError("train-alm needs model=alm in the configuration")
    out = _prepare(args.out_dir)
    vocab = _vocab_from_corpus(args.corpus)
    seqs = load_corpus(args.corpus, vocab, cfg.max_len)
    alm = AutoregressiveLM(CausalBackbone(_backbone_config(cfg, vocab), stream(cfg.seed, "init")), vocab)
    from .data import shuffled_batches

    opt = Adam(cfg.lr)
    batches = shuffled_batches(seqs, cfg.batch_size, stream(cfg.seed, "batching"))
    records = []
    for step in range(cfg.steps):
        nll = alm.mle_step(next(batches), opt)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            records.append({"step": step, "nll": nll})
    vocab.save(os.path.join(out, "checkpoints", "vocab.txt"))
    alm.save(os.path.join(out, "checkpoints", "alm.ckpt"))
    _write_jsonl(os.path.join(out, "metrics", "train_alm.jsonl"), records)
    final = records[-1]["nll"] if records else float("nan")
    print(f"trained autoregressive model: steps={cfg.steps} final_nll={final}")
    return 0


def cmd_train_elm(args) -> int:
    cfg = _load_config(args)
    if cfg.model != "elm":
        raise ConfigError("train-elm needs model=elm in the configuration")
    out = _prepare(args.out_dir)
    vocab = _vocab_from_corpus(args.corpus)
    seqs = load_corpus(args.corpus, vocab, cfg.max_len)
    bb_cfg = _backbone_config(cfg, vocab)
    rng_init = stream(cfg.seed, "init")
    backbone = (
        CausalBackbone(bb_cfg, rng_init)
        if cfg.arch in CAUSAL_ARCHS
        else BidirBackbone(bb_cfg, rng_init)
    )
    prior = (
        empirical_length_prior([len(s) for s in seqs], cfg.max_len)
        if cfg.kind == "per_length"
        else None
    )
    elm = EnergyModel(cfg.arch, cfg.kind, backbone, vocab, length_prior=prior)
    if args.noise:
        alm = AutoregressiveLM.load(args.noise)
        if alm.vocab.tokens != vocab.tokens:
            raise ConfigError("noise model vocabulary does not match the corpus")
        if alm.max_len != cfg.max_len:
            raise ConfigError("noise model max_len does not match the configuration")
    else:
        alm = AutoregressiveLM(CausalBackbone(bb_cfg, stream(cfg.seed, "proposal-init")), vocab)
    if cfg.method in ("nce", "dnce"):
        tc = NceConfig(
            steps=cfg.steps,
            batch_size=cfg.batch_size,
            nu=cfg.nu,
            lr=cfg.lr,
            dynamic_noise=cfg.method == "dnce",
            proposal_lr=cfg.proposal_lr,
            log_every=cfg.log_every,
        )
        records = train_nce(elm, alm, seqs, tc, cfg.seed)
    else:
        tc = MleConfig(
            steps=cfg.steps,
            batch_size=cfg.batch_size,
            sampler="mis" if cfg.method == "mle-mis" else "is",
            n_samples=cfg.n_samples,
            lr=cfg.lr,
            proposal_lr=cfg.proposal_lr,
            divergence_bound=cfg.divergence_bound,
            log_every=cfg.log_every,
        )
        records = train_mle(elm, alm, seqs, tc, cfg.seed)
    vocab.save(os.path.join(out, "checkpoints", "vocab.txt"))
    elm.save(os.path.join(out, "checkpoints", "elm.ckpt"))
    if cfg.method != "nce":
        alm.save(os.path.join(out, "checkpoints", "noise.ckpt"))
    _write_jsonl(os.path.join(out, "metrics", "train_elm.jsonl"), records)
    print(f"trained energy model: arch={cfg.arch} kind={cfg.kind} method={cfg.method} steps={cfg.steps}")
    return 0


def _build_scorer(kind: str, path: str):
    if kind == "elm":
        m = EnergyModel.load(path)
        return elm_scorer(m, m.vocab)
    if kind == "alm":
        m = AutoregressiveLM.load(path)
        return alm_scorer(m, m.vocab)
    if kind == "pll":
        m = EnergyModel.load(path)
        if not isinstance(m.backbone, BidirBackbone):
            raise ConfigError("pll scoring needs a model with a bidirectional backbone")
        return pll_scorer(m.backbone, m.vocab)
    raise ConfigError(f"unknown scorer {kind!r}")


def cmd_rescore(args) -> int:
    cfg = _load_config(args)
    out = _prepare(args.out_dir)
    scorer = _build_scorer(args.scorer, args.model)
    lists = read_nbest(args.nbest)
    sels = rescore(lists, scorer, InterpWeights(cfg.alpha, cfg.beta), cfg.temperature)
    write_selections(os.path.join(out, "selections", "selections.jsonl"), sels)
    n_fallback = sum(1 for s in sels if s["fell_back"])
    print(f"rescored {len(sels)} utterances (alpha={cfg.alpha} beta={cfg.beta} fallbacks={n_fallback})")
    return 0


def _chosen_texts(lists, selections):
    by_utt = {nb.utt: nb for nb in lists}
    missing = [s["utt"] for s in selections if s["utt"] not in by_utt]
    if missing:
        raise CorpusError(f"selections mention unknown utterances: {missing[:3]}")
    if len(selections) != len(lists):
        raise CorpusError(f"{len(selections)} selections for {len(lists)} utterances")
    texts = {}
    for sel in selections:
        nb = by_utt[sel["utt"]]
        idx = sel["choice_index"]
        if not 0 <= idx < len(nb.hyps):
            raise CorpusError(f"utterance {nb.utt}: choice_index {idx} out of range")
        texts[sel["utt"]] = nb.hyps[idx].text
    return [texts[nb.utt] for nb in lists]


def cmd_evaluate(args) -> int:
    out = _prepare(args.out_dir)
    lists = read_nbest(args.nbest)
    sels = read_selections(args.selections)
    texts = _chosen_texts(lists, sels)
    report = corpus_cer_report([nb.ref for nb in lists], texts)
    lines = [f"utterances={len(lists)}"]
    lines += [f"{k}={report[k]!r}" for k in sorted(report)]
    _write_text(os.path.join(out, "reports", "evaluation.txt"), "\n".join(lines) + "\n")
    print(f"CER {report['rate']!r} ({report['errors']} errors / {report['ref_len']} chars)")
    return 0


def _per_utt_errors(lists, texts):
    return [float(edit_distance(nb.ref, t)) for nb, t in zip(lists, texts)]


def cmd_significance(args) -> int:
    out = _prepare(args.out_dir)
    lists = read_nbest(args.nbest)
    errs_a = _per_utt_errors(lists, _chosen_texts(lists, read_selections(args.selections_a)))
    errs_b = _per_utt_errors(lists, _chosen_texts(lists, read_selections(args.selections_b)))
    res = matched_pair_test(errs_a, errs_b)
    pair = f"{args.name_a} vs {args.name_b}"
    text = (
        f"pair={pair}\n"
        f"n={res.n}\n"
        f"mean_diff={res.mean_diff!r}\n"
        f"z={res.z!r}\n"
        f"p_value={res.p_value!r}\n"
    )
    _write_text(os.path.join(out, "reports", "significance.txt"), text)
    print(f"{pair}: p={res.p_value!r} (z={res.z!r}, n={res.n})")
    return 0


def cmd_confidence(args) -> int:
    out = _prepare(args.out_dir)
    lists = read_nbest(args.nbest)
    sels = read_selections(args.selections)
    texts = _chosen_texts(lists, sels)
    conf_by_utt = {}
    for sel in sels:
        if "confidence" not in sel:
            raise CorpusError(f"utterance {sel['utt']}: selection has no confidence")
        conf_by_utt[sel["utt"]] = float(sel["confidence"])
    confs = [conf_by_utt[nb.utt] for nb in lists]
    labels = [1 if t == nb.ref else 0 for nb, t in zip(lists, texts)]
    points, auc = pr_curve(confs, labels)
    rows = ["threshold,precision,recall"]
    rows += [f"{t!r},{p!r},{r!r}" for t, p, r in points]
    _write_text(os.path.join(out, "reports", "pr_curve.csv"), "\n".join(rows) + "\n")
    print(f"AUC {auc!r} over {len(lists)} utterances ({sum(labels)} correct)")
    return 0


def cmd_logz(args) -> int:
    cfg = _load_config(args)
    out = _prepare(args.out_dir)
    elm = EnergyModel.load(args.model)
    table = elm.logz_by_length(budget=cfg.enum_budget)
    with open(args.model, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    lines = [f"checksum=sha256:{digest}", f"kind={elm.kind}"]
    for l in sorted(table):
        lines.append(f"logz_{l}={table[l]!r}")
    if elm.kind == "global":
        total = float(np.logaddexp.reduce(np.array([table[l] for l in sorted(table)])))
        lines.append(f"logz={total!r}")
        summary = f"log Z = {total!r}"
    else:
        summary = f"per-length log Z over lengths {min(table)}..{max(table)}"
    _write_text(os.path.join(out, "reports", "normalizers.txt"), "\n".join(lines) + "\n")
    print(summary)
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    out = _prepare(args.out_dir)
    alm = AutoregressiveLM.load(args.proposal)
    count = args.count if args.count is not None else cfg.n_samples
    if count < 1:
        raise ConfigError("count must be >= 1")
    if args.model:
        elm = EnergyModel.load(args.model)
        if elm.vocab.tokens != alm.vocab.tokens:
            raise ConfigError("model and proposal vocabularies differ")
        states, n_acc = mis_states(elm, alm, stream(cfg.seed, "mis"), count)
        header = f"# chain samples={count} acceptance_rate={n_acc / count!r}\n"
        body = "".join(alm.vocab.decode(s) + "\n" for s in states)
        print(f"chain of {count} states, acceptance rate {n_acc / count:.3f}")
    else:
        samples = alm.sample(stream(cfg.seed, "sample"), count)
        header = f"# ancestral samples={count}\n"
        body = "".join(alm.vocab.decode(s) + "\n" for s in samples)
        print(f"{count} ancestral samples")
    _write_text(os.path.join(out, "reports", "samples.txt"), header + body)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="energylm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config_positional=False):
        if config_positional:
            sp.add_argument("config", help="key=value run configuration file")
        else:
            sp.add_argument("--config", help="key=value run configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("train-alm", help="fit the autoregressive model on a corpus")
    add_common(sp, config_positional=True)
    sp.add_argument("corpus")
    sp.add_argument("out_dir")
    sp.set_defaults(fn=cmd_train_alm)

    sp = sub.add_parser("train-elm", help="fit an energy model on a corpus")
    add_common(sp, config_positional=True)
    sp.add_argument("corpus")
    sp.add_argument("out_dir")
    sp.add_argument("--noise", help="autoregressive checkpoint for the noise/proposal")
    sp.set_defaults(fn=cmd_train_elm)

    sp = sub.add_parser("rescore", help="pick the best hypothesis per n-best list")
    add_common(sp)
    sp.add_argument("nbest")
    sp.add_argument("out_dir")
    sp.add_argument("--model", required=True, help="checkpoint to score with")
    sp.add_argument("--scorer", default="elm", choices=("elm", "alm", "pll"))
    sp.set_defaults(fn=cmd_rescore)

    sp = sub.add_parser("evaluate", help="corpus CER of selections against references")
    sp.add_argument("nbest")
    sp.add_argument("selections")
    sp.add_argument("out_dir")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("significance", help="matched-pair test between two selection files")
    sp.add_argument("nbest")
    sp.add_argument("selections_a")
    sp.add_argument("selections_b")
    sp.add_argument("out_dir")
    sp.add_argument("--name-a", default="A")
    sp.add_argument("--name-b", default="B")
    sp.set_defaults(fn=cmd_significance)

    sp = sub.add_parser("confidence", help="precision-recall curve of selection confidences")
    sp.add_argument("nbest")
    sp.add_argument("selections")
    sp.add_argument("out_dir")
    sp.set_defaults(fn=cmd_confidence)

    sp = sub.add_parser("logz", help="exact enumeration normalizers of a checkpoint")
    add_common(sp)
    sp.add_argument("out_dir")
    sp.add_argument("--model", required=True)
    sp.set_defaults(fn=cmd_logz)

    sp = sub.add_parser("sample", help="draw sentences from a proposal or a chain")
    add_common(sp)
    sp.add_argument("out_dir")
    sp.add_argument("--proposal", required=True, help="autoregressive checkpoint")
    sp.add_argument("--model", help="energy checkpoint; if given, run the chain")
    sp.add_argument("--count", type=int)
    sp.set_defaults(fn=cmd_sample)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except CorpusError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        return 4
    except BudgetError as e:
        print(f"enumeration budget exceeded: {e}", file=sys.stderr)
        return 5
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
