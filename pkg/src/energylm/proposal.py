"""Autoregressive language model used as the noise/proposal distribution.

The model emits sentences of regular tokens.  Generation starts from BOS,
each step draws from a softmax restricted to regular tokens plus EOS, and a
sentence that reaches the length cap ends without an EOS factor, so the
model is a proper distribution over sentences of length 0..max_len.
"""

from __future__ import annotations

import numpy as np

from .backbones import NEG_INF_FILL, BackboneConfig, CausalBackbone
from .checkpoint import load as ckpt_load
from .checkpoint import save as ckpt_save
from .errors import ConfigError
from .tensor import (
    Tape,
    Tensor,
    add,
    concat,
    index_select,
    logsumexp_last,
    mean_all,
    neg,
    no_grad,
    sum_axis,
    take_along_last,
)
from .vocab import Vocab


class AutoregressiveLM:
    def __init__(self, backbone: CausalBackbone, vocab: Vocab):
        if not isinstance(backbone, CausalBackbone):
            raise ConfigError("autoregressive model needs a causal backbone")
        if backbone.cfg.vocab_size != vocab.size:
            raise ConfigError(
                f"backbone vocab_size {backbone.cfg.vocab_size} != vocabulary size {vocab.size}"
            )
        self.backbone = backbone
        self.vocab = vocab
        self.max_len = backbone.cfg.max_len
        self.params = backbone.params
        # additive mask keeping only regular tokens and EOS in the softmax
        mask = np.full(vocab.size, NEG_INF_FILL)
        mask[vocab.eos] = 0.0
        mask[np.array(vocab.regular_ids, dtype=np.int64)] = 0.0
        self._softmax_mask = mask

    def _check(self, x):
        x = tuple(int(t) for t in x)
        if len(x) > self.max_len:
            raise ValueError(f"sentence length {len(x)} exceeds maximum {self.max_len}")
        for t in x:
            if t not in self.vocab.regular_ids:
                raise ValueError(f"token id {t} is not a regular token")
        return x

    def log_prob_batch(self, seqs) -> Tensor:
        """Log-probabilities of sentences, shape (n,), differentiable.

        A sentence below the cap pays an EOS factor; one at the cap does not.
        """
        seqs = [self._check(s) for s in seqs]
        if not seqs:
            raise ValueError("empty batch")
        groups = {}
        for i, s in enumerate(seqs):
            groups.setdefault(len(s), []).append(i)
        parts, order = [], []
        for l in sorted(groups):
            idxs = groups[l]
            ids = np.array([seqs[i] for i in idxs], dtype=np.int64).reshape(len(idxs), l)
            parts.append(self._group_log_prob(ids))
            order.extend(idxs)
        out = parts[0] if len(parts) == 1 else concat(parts, axis=0)
        if order != list(range(len(seqs))):
            inv = np.empty(len(seqs), dtype=np.int64)
            inv[np.array(order, dtype=np.int64)] = np.arange(len(seqs))
            out = index_select(out, inv)
        return out

    def _group_log_prob(self, ids: np.ndarray) -> Tensor:
        g, l = ids.shape
        bos = np.full((g, 1), self.vocab.bos, dtype=np.int64)
        if l == self.max_len:
            # at the cap the sentence counts as truncated: no EOS factor
            inp = np.concatenate([bos, ids[:, :-1]], axis=1)
            targets = ids
        else:
            inp = np.concatenate([bos, ids], axis=1)
            eos = np.full((g, 1), self.vocab.eos, dtype=np.int64)
            targets = np.concatenate([ids, eos], axis=1)
        rows = add(self.backbone.forward_ids(inp), Tensor(self._softmax_mask))
        picked = take_along_last(rows, targets)
        logp = add(picked, neg(logsumexp_last(rows)))
        return sum_axis(logp, 1)

    def log_prob_values(self, seqs) -> np.ndarray:
        """Same numbers as log_prob_batch, off the tape, as a float array."""
        with no_grad():
            return self.log_prob_batch(seqs).data.copy()

    def sample(self, rng: np.random.Generator, n: int):
        """Draw n sentences by ancestral sampling; returns a list of tuples.

        Slot i of the result is the i-th sentence started, so the output
        order does not depend on which sentences finish first.
        """
        if n <= 0:
            raise ValueError("need n >= 1")
        out = [None] * n
        prefix = np.full((n, 1), self.vocab.bos, dtype=np.int64)
        alive = np.arange(n)
        for step in range(self.max_len):
            with no_grad():
                logits = self.backbone.forward_ids(prefix).data
            row = logits[:, -1, :] + self._softmax_mask
            row -= row.max(axis=1, keepdims=True)
            probs = np.exp(row)
            probs /= probs.sum(axis=1, keepdims=True)
            cum = np.cumsum(probs, axis=1)
            cum[:, -1] = np.maximum(cum[:, -1], 1.0 + 1e-12)
            u = rng.random((prefix.shape[0], 1))
            tok = np.argmax(cum > u, axis=1)
            done = tok == self.vocab.eos
            for slot, body in zip(alive[done], prefix[done, 1:]):
                out[slot] = tuple(int(t) for t in body)
            keep = ~done
            alive = alive[keep]
            if alive.size == 0:
                return out
            prefix = np.concatenate(
                [prefix[keep], tok[keep].reshape(-1, 1)], axis=1
            )
        for slot, body in zip(alive, prefix[:, 1:]):
            out[slot] = tuple(int(t) for t in body)
        return out

    def mle_step(self, seqs, opt) -> float:
        """One maximum-likelihood update; returns the pre-step mean NLL."""
        with Tape() as tape:
            nll = mean_all(neg(self.log_prob_batch(seqs)))
            tape.backward(nll)
        opt.step(self.params)
        self.params.zero_grad()
        return float(nll.data)

    def save(self, path):
        meta = {
            "model": "autoregressive",
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
        }
        ckpt_save(path, self.params.to_arrays(), meta)

    @classmethod
    def load(cls, path) -> "AutoregressiveLM":
        arrays, meta = ckpt_load(path)
        if meta.get("model") != "autoregressive":
            raise ConfigError(f"checkpoint at {path} does not hold an autoregressive model")
        vocab = Vocab(meta["tokens"])
        cfg = BackboneConfig(**meta["backbone"])
        backbone = CausalBackbone(cfg, np.random.default_rng(0))
        model = cls(backbone, vocab)
        model.params.load_arrays(arrays)
        return model
