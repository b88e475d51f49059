"""Tiny transformer encoders in the three roles the energy functions need:
causal next-token logits, bidirectional hidden states, bidirectional
per-token logits.

Desk-scale defaults (2 blocks, d=32, 2 heads) are big enough to learn toy
corpora and small enough that exact enumeration stays affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import Parameters
from .tensor import (
    Tensor,
    add,
    gelu,
    index_select,
    matmul,
    mul,
    pow_const,
    reshape,
    softmax_last,
    sum_axis,
    swapaxes,
)

NEG_INF_FILL = -1e30


@dataclass(frozen=True)
class BackboneConfig:
    vocab_size: int
    max_len: int = 16
    d_model: int = 32
    n_heads: int = 2
    n_blocks: int = 2
    ln_eps: float = 1e-5
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.max_len < 1 or self.vocab_size < 5:
            raise ValueError("max_len >= 1 and vocab_size >= 5 required")


def _layer_norm(x: Tensor, g: Tensor, b: Tensor, eps: float, d: int) -> Tensor:
    mu = mul(sum_axis(x, -1, keepdims=True), 1.0 / d)
    xc = x - mu
    var = mul(sum_axis(mul(xc, xc), -1, keepdims=True), 1.0 / d)
    inv = pow_const(add(var, eps), -0.5)
    return add(mul(mul(xc, inv), g), b)


class _Encoder:
    """Transformer stack shared by both backbones; the mask decides causality."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator, prefix: str = ""):
        self.cfg = cfg
        self.params = Parameters()
        p, std = self.params, cfg.init_std
        d, hdim = cfg.d_model, 4 * cfg.d_model
        self.tok_emb = p.add(f"{prefix}tok_emb", rng.normal(0.0, std, (cfg.vocab_size, d)))
        self.pos_emb = p.add(f"{prefix}pos_emb", rng.normal(0.0, std, (cfg.max_len, d)))
        self.blocks = []
        for i in range(cfg.n_blocks):
            bp = f"{prefix}block{i}."
            blk = {
                "ln1_g": p.add(bp + "ln1_g", np.ones(d)),
                "ln1_b": p.add(bp + "ln1_b", np.zeros(d)),
                "wq": p.add(bp + "wq", rng.normal(0.0, std, (d, d))),
                "bq": p.add(bp + "bq", np.zeros(d)),
                "wk": p.add(bp + "wk", rng.normal(0.0, std, (d, d))),
                "bk": p.add(bp + "bk", np.zeros(d)),
                "wv": p.add(bp + "wv", rng.normal(0.0, std, (d, d))),
                "bv": p.add(bp + "bv", np.zeros(d)),
                "wo": p.add(bp + "wo", rng.normal(0.0, std, (d, d))),
                "bo": p.add(bp + "bo", np.zeros(d)),
                "ln2_g": p.add(bp + "ln2_g", np.ones(d)),
                "ln2_b": p.add(bp + "ln2_b", np.zeros(d)),
                "w1": p.add(bp + "w1", rng.normal(0.0, std, (d, hdim))),
                "b1": p.add(bp + "b1", np.zeros(hdim)),
                "w2": p.add(bp + "w2", rng.normal(0.0, std, (hdim, d))),
                "b2": p.add(bp + "b2", np.zeros(d)),
            }
            self.blocks.append(blk)
        self.lnf_g = p.add(f"{prefix}lnf_g", np.ones(d))
        self.lnf_b = p.add(f"{prefix}lnf_b", np.zeros(d))

    def forward_ids(self, ids: np.ndarray, causal: bool, return_embedded: bool = False):
        """ids: int array (n, L) -> hidden Tensor (n, L, d)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError(f"ids must be 2-D (batch, positions), got shape {ids.shape}")
        n, L = ids.shape
        cfg = self.cfg
        if L > cfg.max_len:
            raise ValueError(f"input of {L} positions exceeds maximum {cfg.max_len}")
        if L == 0:
            raise ValueError("cannot encode zero positions")
        d, H = cfg.d_model, cfg.n_heads
        dh = d // H
        tok = reshape(index_select(self.tok_emb, ids.reshape(-1)), (n, L, d))
        pos = index_select(self.pos_emb, np.arange(L))
        x = add(tok, pos)
        embedded = x
        mask = None
        if causal:
            mask = Tensor(np.triu(np.full((L, L), NEG_INF_FILL), k=1))
        scale = 1.0 / np.sqrt(dh)
        for blk in self.blocks:
            h = _layer_norm(x, blk["ln1_g"], blk["ln1_b"], cfg.ln_eps, d)
            q = add(matmul(h, blk["wq"]), blk["bq"])
            k = add(matmul(h, blk["wk"]), blk["bk"])
            v = add(matmul(h, blk["wv"]), blk["bv"])
            q = swapaxes(reshape(q, (n, L, H, dh)), 1, 2)
            k = swapaxes(reshape(k, (n, L, H, dh)), 1, 2)
            v = swapaxes(reshape(v, (n, L, H, dh)), 1, 2)
            scores = mul(matmul(q, swapaxes(k, -1, -2)), scale)
            if mask is not None:
                scores = add(scores, mask)
            ctx = matmul(softmax_last(scores), v)
            ctx = reshape(swapaxes(ctx, 1, 2), (n, L, d))
            x = add(x, add(matmul(ctx, blk["wo"]), blk["bo"]))
            h2 = _layer_norm(x, blk["ln2_g"], blk["ln2_b"], cfg.ln_eps, d)
            m = add(matmul(gelu(add(matmul(h2, blk["w1"]), blk["b1"])), blk["w2"]), blk["b2"])
            x = add(x, m)
        out = _layer_norm(x, self.lnf_g, self.lnf_b, cfg.ln_eps, d)
        if return_embedded:
            return out, embedded
        return out


class CausalBackbone:
    """Next-token logits f(x_{1:i}); position i sees only positions <= i."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = _Encoder(cfg, rng)
        p = self.encoder.params
        self.head_w = p.add("head_w", rng.normal(0.0, cfg.init_std, (cfg.d_model, cfg.vocab_size)))
        self.head_b = p.add("head_b", np.zeros(cfg.vocab_size))
        self.params = p

    def forward_ids(self, ids: np.ndarray, return_embedded: bool = False):
        """ids (n, L) -> logits Tensor (n, L, V); row i predicts position i+1."""
        res = self.encoder.forward_ids(ids, causal=True, return_embedded=return_embedded)
        hidden, embedded = res if return_embedded else (res, None)
        logits = add(matmul(hidden, self.head_w), self.head_b)
        if return_embedded:
            return logits, embedded
        return logits


class BidirBackbone:
    """Unmasked encoder with a hidden output and a per-token logit head."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = _Encoder(cfg, rng)
        p = self.encoder.params
        self.head_w = p.add("head_w", rng.normal(0.0, cfg.init_std, (cfg.d_model, cfg.vocab_size)))
        self.head_b = p.add("head_b", np.zeros(cfg.vocab_size))
        self.params = p

    def hidden_ids(self, ids: np.ndarray) -> Tensor:
        """ids (n, L) -> hidden Tensor (n, L, d); every position sees all."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 2 and ids.shape[1] > self.cfg.max_len:
            raise ValueError(
                f"sequence of {ids.shape[1]} tokens exceeds maximum {self.cfg.max_len}"
            )
        return self.encoder.forward_ids(ids, causal=False)

    def token_logits_ids(self, ids: np.ndarray) -> Tensor:
        """ids (n, L) -> per-position token logits Tensor (n, L, V)."""
        return add(matmul(self.hidden_ids(ids), self.head_w), self.head_b)


def _check_seq(x, vocab_size: int, max_len: int):
    x = tuple(int(t) for t in x)
    if len(x) > max_len:
        raise ValueError(f"sequence of length {len(x)} exceeds maximum {max_len}")
    for t in x:
        if not 0 <= t < vocab_size:
            raise IndexError(f"token id {t} out of range [0, {vocab_size})")
    return x


def causal_logits(backbone: CausalBackbone, x, bos_id: int = 1) -> Tensor:
    """Logits predicting each token of x from its BOS-prefixed history.

    Row i of the (|x|, V) result scores candidates for x[i] given x[:i];
    the input is BOS + x[:-1], so |x| never exceeds the position table.
    """
    x = _check_seq(x, backbone.cfg.vocab_size, backbone.cfg.max_len)
    if not x:
        raise ValueError("need at least one token")
    ids = np.array([[bos_id] + list(x[:-1])], dtype=np.int64)
    full = backbone.forward_ids(ids)  # (1, |x|, V)
    return reshape(full, (len(x), backbone.cfg.vocab_size))


def bidir_hidden(backbone: BidirBackbone, x) -> Tensor:
    """Per-position hidden vectors of x under the unmasked encoder."""
    x = _check_seq(x, backbone.cfg.vocab_size, backbone.cfg.max_len)
    if not x:
        raise ValueError("bidirectional encoder needs at least one token")
    out = backbone.hidden_ids(np.array([x], dtype=np.int64))
    return reshape(out, (len(x), backbone.cfg.d_model))


def bidir_token_logits(backbone: BidirBackbone, x) -> Tensor:
    """Per-position token logits of x under the unmasked encoder."""
    x = _check_seq(x, backbone.cfg.vocab_size, backbone.cfg.max_len)
    if not x:
        raise ValueError("bidirectional encoder needs at least one token")
    out = backbone.token_logits_ids(np.array([x], dtype=np.int64))
    return reshape(out, (len(x), backbone.cfg.vocab_size))
