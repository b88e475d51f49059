"""Sequence-level energy models over sentences of regular tokens.

Four ways to turn a transformer into a scalar energy:

  sum_target_logit   causal net, E = -(sum of next-token logits of each token,
                     plus the end-of-sentence logit unless the sequence is at
                     the length cap and therefore counts as truncated)
  hidden2scalar      bidirectional net, E = -linear(sum of hidden states)
  sum_masked_logit   bidirectional net, one forward per position with that
                     position masked, E = -(sum of each position's own logit)
  sum_token_logit    bidirectional net, single forward, same readout

Two normalization kinds:

  global       p(x) = exp(-E(x)) / Z
  per_length   p(x) = pi_l * exp(-E(x)) / Z_l   with l = |x|

Every model carries a trainable offset added to the energy (a scalar for
global, a per-length vector otherwise) so the family is closed under the
constant shifts that self-normalized training needs to absorb.
"""

from __future__ import annotations

import numpy as np

from .backbones import BackboneConfig, BidirBackbone, CausalBackbone
from .checkpoint import load as ckpt_load
from .checkpoint import save as ckpt_save
from .errors import BudgetError, ConfigError
from .tensor import (
    Tensor,
    add,
    concat,
    index_select,
    matmul,
    neg,
    no_grad,
    reshape,
    sum_axis,
    take_along_last,
)
from .vocab import Vocab

ARCHS = ("sum_target_logit", "hidden2scalar", "sum_masked_logit", "sum_token_logit")
KINDS = ("global", "per_length")
CAUSAL_ARCHS = ("sum_target_logit",)

DEFAULT_ENUM_BUDGET = 2_000_000.0


def empirical_length_prior(lengths, max_len: int) -> np.ndarray:
    """Relative frequency of each sentence length, index = length."""
    counts = np.zeros(max_len + 1, dtype=np.float64)
    for l in lengths:
        l = int(l)
        if not 1 <= l <= max_len:
            raise ValueError(f"length {l} outside [1, {max_len}]")
        counts[l] += 1.0
    total = counts.sum()
    if total == 0:
        raise ValueError("no lengths given")
    return counts / total


class EnergyModel:
    def __init__(self, arch: str, kind: str, backbone, vocab: Vocab, length_prior=None):
        if arch not in ARCHS:
            raise ConfigError(f"unknown arch {arch!r}, expected one of {ARCHS}")
        if kind not in KINDS:
            raise ConfigError(f"unknown kind {kind!r}, expected one of {KINDS}")
        wants_causal = arch in CAUSAL_ARCHS
        if wants_causal and not isinstance(backbone, CausalBackbone):
            raise ConfigError(f"arch {arch!r} needs a causal backbone")
        if not wants_causal and not isinstance(backbone, BidirBackbone):
            raise ConfigError(f"arch {arch!r} needs a bidirectional backbone")
        if backbone.cfg.vocab_size != vocab.size:
            raise ConfigError(
                f"backbone vocab_size {backbone.cfg.vocab_size} != vocabulary size {vocab.size}"
            )
        self.arch = arch
        self.kind = kind
        self.backbone = backbone
        self.vocab = vocab
        self.max_len = backbone.cfg.max_len
        self.params = backbone.params
        if kind == "per_length":
            if length_prior is None:
                raise ConfigError("per_length models need a length prior")
            pi = np.asarray(length_prior, dtype=np.float64)
            if pi.shape != (self.max_len + 1,):
                raise ConfigError(
                    f"length prior must have shape ({self.max_len + 1},), got {pi.shape}"
                )
            if pi[0] != 0.0 or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-8:
                raise ConfigError("length prior must be a distribution over lengths >= 1")
            self.length_prior = pi
        else:
            if length_prior is not None:
                raise ConfigError("global models take no length prior")
            self.length_prior = None
        if arch == "hidden2scalar":
            # zero init keeps the starting model exactly uniform
            self.e2s_w = self.params.add("e2s_w", np.zeros((backbone.cfg.d_model, 1)))
            self.e2s_b = self.params.add("e2s_b", np.zeros(()))
        off_shape = () if kind == "global" else (self.max_len + 1,)
        self.norm_offset = self.params.add("norm_offset", np.zeros(off_shape))

    # ---- support ----------------------------------------------------------

    def _check_sentence(self, x):
        x = tuple(int(t) for t in x)
        if not 1 <= len(x) <= self.max_len:
            raise ValueError(f"sentence length {len(x)} outside [1, {self.max_len}]")
        for t in x:
            if t not in self.vocab.regular_ids:
                raise ValueError(f"token id {t} is not a regular token")
        return x

    def in_support(self, x) -> bool:
        x = tuple(int(t) for t in x)
        if not 1 <= len(x) <= self.max_len:
            return False
        if any(t not in self.vocab.regular_ids for t in x):
            return False
        if self.kind == "per_length" and self.length_prior[len(x)] == 0.0:
            return False
        return True

    # ---- energies ----------------------------------------------------------

    def _arch_energy(self, ids: np.ndarray) -> Tensor:
        """Architecture energy, no offset.  ids: (g, l) of equal-length sentences."""
        g, l = ids.shape
        V = self.vocab.size
        if self.arch == "sum_target_logit":
            bos = np.full((g, 1), self.vocab.bos, dtype=np.int64)
            if l == self.max_len:
                # at the cap the sentence counts as truncated: no EOS term
                logits = self.backbone.forward_ids(np.concatenate([bos, ids[:, :-1]], axis=1))
                picked = take_along_last(logits, ids)
            else:
                logits = self.backbone.forward_ids(np.concatenate([bos, ids], axis=1))
                eos = np.full((g, 1), self.vocab.eos, dtype=np.int64)
                picked = take_along_last(logits, np.concatenate([ids, eos], axis=1))
            return neg(sum_axis(picked, 1))
        if self.arch == "hidden2scalar":
            pooled = sum_axis(self.backbone.hidden_ids(ids), 1)
            score = add(matmul(pooled, self.e2s_w), self.e2s_b)
            return neg(reshape(score, (g,)))
        if self.arch == "sum_masked_logit":
            rep = np.repeat(ids[:, None, :], l, axis=1)
            pos = np.arange(l)
            rep[:, pos, pos] = self.vocab.mask
            logits = self.backbone.token_logits_ids(rep.reshape(g * l, l))
            flat = reshape(logits, (g * l * l, V))
            # variant i of sentence j is read out at position i only
            rows = np.arange(g * l) * l + np.tile(pos, g)
            picked = take_along_last(index_select(flat, rows), ids.reshape(-1))
            return neg(sum_axis(reshape(picked, (g, l)), 1))
        logits = self.backbone.token_logits_ids(ids)
        picked = take_along_last(logits, ids)
        return neg(sum_axis(picked, 1))

    def _energy_ids(self, ids: np.ndarray) -> Tensor:
        """Total energy (arch energy plus offset) for equal-length sentences."""
        e = self._arch_energy(ids)
        if self.kind == "global":
            return add(e, self.norm_offset)
        off = index_select(self.norm_offset, np.full(ids.shape[0], ids.shape[1]))
        return add(e, off)

    def energy_batch(self, seqs) -> Tensor:
        """Energies of a list of sentences, shape (n,), order preserved."""
        seqs = [self._check_sentence(s) for s in seqs]
        if not seqs:
            raise ValueError("empty batch")
        groups = {}
        for i, s in enumerate(seqs):
            groups.setdefault(len(s), []).append(i)
        parts, order = [], []
        for l in sorted(groups):
            idxs = groups[l]
            ids = np.array([seqs[i] for i in idxs], dtype=np.int64)
            parts.append(self._energy_ids(ids))
            order.extend(idxs)
        out = parts[0] if len(parts) == 1 else concat(parts, axis=0)
        if order != list(range(len(seqs))):
            inv = np.empty(len(seqs), dtype=np.int64)
            inv[np.array(order, dtype=np.int64)] = np.arange(len(seqs))
            out = index_select(out, inv)
        return out

    def energy(self, x) -> Tensor:
        return reshape(self.energy_batch([x]), ())

    def log_score_batch(self, seqs) -> Tensor:
        """Unnormalized log-probabilities, shape (n,).  All sentences must be
        in support; out-of-support scoring is the caller's business (it is
        -inf and has no gradient, so it never belongs on a tape)."""
        seqs = [tuple(int(t) for t in s) for s in seqs]
        for s in seqs:
            if not self.in_support(s):
                raise ValueError(f"sentence {s} is outside the model support")
        scores = neg(self.energy_batch(seqs))
        if self.kind == "per_length":
            lengths = np.array([len(s) for s in seqs], dtype=np.int64)
            scores = add(scores, Tensor(np.log(self.length_prior[lengths])))
        return scores

    def log_score(self, x) -> Tensor:
        return reshape(self.log_score_batch([x]), ())

    # ---- exact enumeration --------------------------------------------------

    def _check_lengths(self, lengths):
        if lengths is None:
            return list(range(1, self.max_len + 1))
        out = sorted({int(l) for l in lengths})
        for l in out:
            if not 1 <= l <= self.max_len:
                raise ValueError(f"length {l} outside [1, {self.max_len}]")
        return out

    def support_count(self, lengths=None) -> int:
        a = self.vocab.alphabet_size
        return sum(a**l for l in self._check_lengths(lengths))

    def iter_support_ids(self, lengths=None, chunk: int = 2048):
        """Yield (length, ids array) covering each requested length exactly once."""
        reg = np.array(self.vocab.regular_ids, dtype=np.int64)
        a = len(reg)
        for l in self._check_lengths(lengths):
            total = a**l
            place = a ** np.arange(l - 1, -1, -1, dtype=np.int64)
            for start in range(0, total, chunk):
                stop = min(start + chunk, total)
                digits = (np.arange(start, stop, dtype=np.int64)[:, None] // place) % a
                yield l, reg[digits]

    def logz_by_length(
        self, lengths=None, budget: float = DEFAULT_ENUM_BUDGET, chunk: int = 2048
    ) -> dict:
        """Exhaustive per-length normalizers {l: log Z_l}.

        Z_l sums exp(-E) over every sentence of length l, offset included.
        Raises BudgetError before doing any work if the count is too big.
        """
        lengths = self._check_lengths(lengths)
        n = self.support_count(lengths)
        if n > budget:
            raise BudgetError(
                f"enumeration would visit {n} sentences, budget is {budget:g}"
            )
        pieces = {l: [] for l in lengths}
        with no_grad():
            for l, ids in self.iter_support_ids(lengths, chunk):
                e = self._energy_ids(ids).data
                m = np.max(-e)
                pieces[l].append(m + np.log(np.sum(np.exp(-e - m))))
        return {l: float(np.logaddexp.reduce(np.array(v))) for l, v in pieces.items()}

    def exact_log_z(self, lengths=None, budget: float = DEFAULT_ENUM_BUDGET, chunk: int = 2048):
        """Exhaustive normalizer: a scalar log Z for global models, the
        per-length map {l: log Z_l} for per-length models."""
        table = self.logz_by_length(lengths, budget, chunk)
        if self.kind == "global":
            return float(np.logaddexp.reduce(np.array(list(table.values()))))
        return table

    def log_prob_batch(self, seqs, normalizers=None, budget: float = DEFAULT_ENUM_BUDGET):
        """Exact normalized log-probabilities as a plain float array.

        normalizers: optional cached result of exact_log_z.
        """
        if normalizers is None:
            normalizers = self.exact_log_z(budget=budget)
        with no_grad():
            scores = self.log_score_batch(seqs).data
        if self.kind == "global":
            return scores - float(normalizers)
        try:
            lz = np.array([normalizers[len(s)] for s in seqs], dtype=np.float64)
        except KeyError as e:
            raise ValueError(f"no normalizer for length {e.args[0]}") from None
        return scores - lz

    def log_prob(self, x, normalizers=None, budget: float = DEFAULT_ENUM_BUDGET) -> float:
        return float(self.log_prob_batch([x], normalizers=normalizers, budget=budget)[0])

    # ---- persistence --------------------------------------------------------

    def save(self, path):
        meta = {
            "model": "energy",
            "arch": self.arch,
            "kind": self.kind,
            "backbone": {
                "vocab_size": self.backbone.cfg.vocab_size,
                "max_len": self.backbone.cfg.max_len,
                "d_model": self.backbone.cfg.d_model,
                "n_heads": self.backbone.cfg.n_heads,
                "n_blocks": self.backbone.cfg.n_blocks,
                "ln_eps": self.backbone.cfg.ln_eps,
                "init_std": self.backbone.cfg.init_std,
            },
            "tokens": list(self.vocab.tokens),
            "length_prior": None
            if self.length_prior is None
            else [float(v) for v in self.length_prior],
        }
        ckpt_save(path, self.params.to_arrays(), meta)

    @classmethod
    def load(cls, path) -> "EnergyModel":
        arrays, meta = ckpt_load(path)
        if meta.get("model") != "energy":
            raise ConfigError(f"checkpoint at {path} does not hold an energy model")
        vocab = Vocab(meta["tokens"])
        cfg = BackboneConfig(**meta["backbone"])
        rng = np.random.default_rng(0)  # placeholder values, overwritten below
        if meta["arch"] in CAUSAL_ARCHS:
            backbone = CausalBackbone(cfg, rng)
        else:
            backbone = BidirBackbone(cfg, rng)
        prior = meta["length_prior"]
        model = cls(
            meta["arch"],
            meta["kind"],
            backbone,
            vocab,
            length_prior=None if prior is None else np.array(prior),
        )
        model.params.load_arrays(arrays)
        return model


def pll_score(backbone: BidirBackbone, x, vocab: Vocab) -> float:
    """Pseudo-log-likelihood: mask each position in turn and sum the masked
    position's log-probability, softmax taken over regular tokens only."""
    x = tuple(int(t) for t in x)
    for t in x:
        if t not in vocab.regular_ids:
            raise ValueError(f"token id {t} is not a regular token")
    if not x:
        return 0.0
    if len(x) > backbone.cfg.max_len:
        raise ValueError(f"sentence length {len(x)} exceeds maximum {backbone.cfg.max_len}")
    l = len(x)
    rep = np.tile(np.array(x, dtype=np.int64), (l, 1))
    pos = np.arange(l)
    rep[pos, pos] = vocab.mask
    with no_grad():
        logits = backbone.token_logits_ids(rep).data
    rows = logits[pos, pos]  # (l, V), row i from the variant with i masked
    reg = np.array(vocab.regular_ids, dtype=np.int64)
    sub = rows[:, reg]
    m = sub.max(axis=-1, keepdims=True)
    logsf = sub - m - np.log(np.sum(np.exp(sub - m), axis=-1, keepdims=True))
    cols = np.array(x, dtype=np.int64) - reg[0]
    return float(logsf[pos, cols].sum())
