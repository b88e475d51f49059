"""Estimation procedures for energy models.

Noise-contrastive estimation with a fixed or dynamically updated noise
model, sampled maximum likelihood with either Metropolis independence
sampling or self-normalized importance sampling, and exact-enumeration
references used to verify both at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import shuffled_batches
from .errors import BudgetError, ConfigError, DivergenceError
from .optim import Adam
from .rng import stream
from .tensor import (
    Tape,
    Tensor,
    add,
    concat,
    index_select,
    logaddexp,
    logsumexp_last,
    mean_all,
    mul,
    neg,
    no_grad,
    reshape,
    sum_all,
)


@dataclass(frozen=True)
class NceConfig:
    steps: int
    batch_size: int
    nu: float = 1.0
    lr: float = 1e-3
    dynamic_noise: bool = False
    proposal_lr: float = 1e-3
    log_every: int = 200

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size positive")
        if self.nu <= 0:
            raise ConfigError("noise ratio nu must be positive")
        if int(round(self.nu * self.batch_size)) < 1:
            raise ConfigError("nu * batch_size rounds to zero noise samples")


@dataclass(frozen=True)
class MleConfig:
    steps: int
    batch_size: int
    sampler: str = "mis"  # mis | is
    n_samples: int = 256
    lr: float = 1e-3
    proposal_lr: float = 1e-3
    divergence_bound: float = 1e3
    restart_per_update: bool = True
    log_every: int = 200

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.n_samples < 1:
            raise ConfigError("steps must be >= 0, batch_size and n_samples positive")
        if self.sampler not in ("mis", "is"):
            raise ConfigError(f"unknown sampler {self.sampler!r}, expected 'mis' or 'is'")
        if self.divergence_bound <= 0:
            raise ConfigError("divergence_bound must be positive")
        if not self.restart_per_update:
            raise ConfigError("persistent chains are not supported; the chain restarts every update")


# ---- noise-contrastive estimation -------------------------------------------


def nce_objective(elm, alm, data_seqs, noise_seqs, nu: float):
    """Binary-classification objective, to be maximized.

    J = mean_data log[p/(p + nu q)] + nu * mean_noise log[nu q/(p + nu q)]
    with p the unnormalized model score.  Noise draws outside the model
    support contribute exactly zero (their p is zero), so they enter the
    noise mean only through its denominator.
    """
    if not data_seqs or not noise_seqs:
        raise ValueError("need non-empty data and noise batches")
    log_nu = math.log(nu)
    s_d = elm.log_score_batch(data_seqs)
    t_d = Tensor(log_nu + alm.log_prob_values(data_seqs))
    data_part = mean_all(add(s_d, neg(logaddexp(s_d, t_d))))
    in_sup = [tuple(int(t) for t in s) for s in noise_seqs]
    in_sup = [s for s in in_sup if elm.in_support(s)]
    k = len(noise_seqs)
    if in_sup:
        s_n = elm.log_score_batch(in_sup)
        t_n = Tensor(log_nu + alm.log_prob_values(in_sup))
        noise_part = mul(sum_all(add(t_n, neg(logaddexp(s_n, t_n)))), 1.0 / k)
    else:
        noise_part = Tensor(0.0)
    objective = add(data_part, mul(noise_part, nu))
    parts = {
        "data_term": float(data_part.data),
        "noise_term": float(nu * noise_part.data),
        "n_noise_unsupported": k - len(in_sup),
    }
    return objective, parts


def nce_step(elm, alm, data_batch, nu: float, opt, noise_rng) -> dict:
    """One estimation step with the noise model held fixed."""
    k = int(round(nu * len(data_batch)))
    if k < 1:
        raise ValueError("nu * batch size rounds to zero noise samples")
    noise = alm.sample(noise_rng, k)
    with Tape() as tape:
        objective, parts = nce_objective(elm, alm, data_batch, noise, nu)
        loss = neg(objective)
        tape.backward(loss)
    opt.step(elm.params)
    elm.params.zero_grad()
    return {"objective": float(objective.data), **parts}


def dnce_step(elm, alm, data_batch, proposal_batch, nu: float, opt, opt_phi, noise_rng) -> dict:
    """Dynamic-noise step: the usual update on the energy model, then a
    maximum-likelihood update pulling the noise model toward the data.

    The combined objective is the classification term plus the noise
    model's data log-likelihood (reported as its negative, the NLL).
    """
    rec = nce_step(elm, alm, data_batch, nu, opt, noise_rng)
    nll = alm.mle_step(proposal_batch, opt_phi)
    rec["proposal_nll"] = nll
    rec["combined_objective"] = rec["objective"] - nll
    return rec


def train_nce(elm, alm, train_seqs, cfg: NceConfig, seed: int) -> list:
    """Run cfg.steps updates over reshuffled batches; returns metric records."""
    opt = Adam(cfg.lr)
    opt_phi = Adam(cfg.proposal_lr) if cfg.dynamic_noise else None
    batches = shuffled_batches(train_seqs, cfg.batch_size, stream(seed, "batching"))
    phi_batches = (
        shuffled_batches(train_seqs, cfg.batch_size, stream(seed, "proposal-batching"))
        if cfg.dynamic_noise
        else None
    )
    noise_rng = stream(seed, "noise")
    records = []
    for step in range(cfg.steps):
        batch = next(batches)
        if cfg.dynamic_noise:
            rec = dnce_step(elm, alm, batch, next(phi_batches), cfg.nu, opt, opt_phi, noise_rng)
        else:
            rec = nce_step(elm, alm, batch, cfg.nu, opt, noise_rng)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            records.append({"step": step, **rec})
    return records


# ---- Metropolis independence sampling ----------------------------------------


def mis_chain(log_weight_fn, proposals, us, start):
    """Independence sampler: propose from q, accept with min(1, w'/w) where
    w(x) = p(x)/q(x).  Returns (visited states, acceptance count).

    A proposal with zero weight is rejected outright; a zero-weight current
    state always accepts, including when the proposal weight is zero too,
    since the chain has nothing to defend there.
    """
    cur = tuple(int(t) for t in start)
    lw_cur = float(log_weight_fn(cur))
    states, n_acc = [], 0
    for prop, u in zip(proposals, us):
        prop = tuple(int(t) for t in prop)
        lw_p = float(log_weight_fn(prop))
        if lw_p == -math.inf and lw_cur == -math.inf:
            accept = True
        else:
            accept = u < math.exp(min(0.0, lw_p - lw_cur))
        if accept:
            cur, lw_cur = prop, lw_p
            n_acc += 1
        states.append(cur)
    return states, n_acc


def _elm_log_weights(elm, alm, sentences) -> dict:
    """log(p/q) per unique sentence, -inf outside the model support."""
    uniq = sorted(set(tuple(int(t) for t in s) for s in sentences))
    in_sup = [s for s in uniq if elm.in_support(s)]
    table = {s: -math.inf for s in uniq}
    if in_sup:
        with no_grad():
            scores = elm.log_score_batch(in_sup).data
        logq = alm.log_prob_values(in_sup)
        for s, sc, q in zip(in_sup, scores, logq):
            table[s] = float(sc - q)
    return table


def mis_states(elm, alm, rng, n_steps: int, start=None):
    """Run one chain of n_steps targeting the energy model, proposing from
    the autoregressive model; the chain starts at a fresh proposal draw
    unless a start state is given.  Returns (states, acceptance count)."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    need = n_steps + (1 if start is None else 0)
    props = alm.sample(rng, need)
    if start is None:
        start, props = props[0], props[1:]
    table = _elm_log_weights(elm, alm, list(props) + [tuple(int(t) for t in start)])
    us = rng.random(n_steps)
    return mis_chain(lambda x: table[tuple(x)], props, us, start)


# ---- self-normalized importance sampling --------------------------------------


def snis_weights(log_scores, log_q) -> np.ndarray:
    """Normalized importance weights from log p (unnormalized) and log q."""
    lw = np.asarray(log_scores, dtype=np.float64) - np.asarray(log_q, dtype=np.float64)
    if not np.any(np.isfinite(lw)):
        raise ValueError("every importance weight is zero")
    w = np.exp(lw - np.max(lw[np.isfinite(lw)]))
    w[~np.isfinite(lw)] = 0.0
    return w / w.sum()


def snis_estimate(values, weights):
    """Weighted mean and its delta-method standard error, per coordinate.

    values: (n,) or (n, d); weights: normalized, shape (n,).
    """
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    est = np.tensordot(w, v, axes=1)
    se = np.sqrt(np.tensordot(w**2, (v - est) ** 2, axes=1))
    return est, se


# ---- sampled maximum likelihood ------------------------------------------------


def weighted_mle_loss(elm, data_batch, samples, weights) -> Tensor:
    """mean_data E - sum_i w_i E(sample_i): the loss whose gradient is the
    negated likelihood-ascent direction with the model expectation replaced
    by the given weighted sample estimate (weights sum to one)."""
    e_data = elm.energy_batch(data_batch)
    e_samp = elm.energy_batch(samples)
    return add(mean_all(e_data), neg(sum_all(mul(e_samp, Tensor(np.asarray(weights))))))


def mle_step(elm, alm, data_batch, opt, opt_phi, rng, cfg: MleConfig, step: int = 0) -> dict:
    """One gradient step on mean data energy minus the model-expectation of
    the energy, the expectation estimated by the configured sampler; the
    proposal then takes its own likelihood step on the same batch.

    Raises DivergenceError before touching any parameters if the mean
    absolute energy of the step exceeds cfg.divergence_bound.
    """
    if elm.kind != "global":
        raise ConfigError("sampled maximum likelihood needs global normalization")
    if cfg.sampler == "mis":
        states, n_acc = mis_states(elm, alm, rng, cfg.n_samples)
        counts = {}
        for s in states:
            counts[s] = counts.get(s, 0) + 1
        samples = sorted(counts)
        w = np.array([counts[s] / len(states) for s in samples])
        stats = {"acceptance_rate": n_acc / cfg.n_samples}
    else:
        props = alm.sample(rng, cfg.n_samples)
        counts = {}
        for s in props:
            counts[s] = counts.get(s, 0) + 1
        cand = sorted(counts)
        in_sup = [s for s in cand if elm.in_support(s)]
        if not in_sup:
            raise ValueError("every importance weight is zero")
        with no_grad():
            scores = elm.log_score_batch(in_sup).data
        logq = alm.log_prob_values(in_sup)
        log_n = np.array([math.log(counts[s]) for s in in_sup])
        w = snis_weights(scores + log_n, logq)
        samples = in_sup
        stats = {"ess": float(1.0 / np.sum(w**2))}
    with Tape() as tape:
        e_data = elm.energy_batch(data_batch)
        e_samp = elm.energy_batch(samples)
        mean_abs = float(np.mean(np.abs(np.concatenate([e_data.data, e_samp.data]))))
        if mean_abs > cfg.divergence_bound:
            raise DivergenceError(step, mean_abs, cfg.divergence_bound)
        loss = add(mean_all(e_data), neg(sum_all(mul(e_samp, Tensor(w)))))
        tape.backward(loss)
    opt.step(elm.params)
    elm.params.zero_grad()
    rec = {"loss": float(loss.data), "mean_abs_energy": mean_abs, **stats}
    if opt_phi is not None:
        rec["proposal_nll"] = alm.mle_step(data_batch, opt_phi)
    return rec


def train_mle(elm, alm, train_seqs, cfg: MleConfig, seed: int) -> list:
    opt = Adam(cfg.lr)
    opt_phi = Adam(cfg.proposal_lr)
    batches = shuffled_batches(train_seqs, cfg.batch_size, stream(seed, "batching"))
    rng = stream(seed, "sampler")
    records = []
    for step in range(cfg.steps):
        rec = mle_step(elm, alm, next(batches), opt, opt_phi, rng, cfg, step=step)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            records.append({"step": step, **rec})
    return records


# ---- exact-enumeration references ----------------------------------------------


def exact_mle_loss(elm, data_batch, budget: float = 100_000.0) -> Tensor:
    """Differentiable negative mean log-likelihood with the normalizer
    computed by full enumeration; the gradient oracle for sampled training."""
    data = [tuple(int(t) for t in s) for s in data_batch]
    if not data:
        raise ValueError("empty batch")
    for s in data:
        if not elm.in_support(s):
            raise ValueError(f"sentence {s} is outside the model support")
    if elm.kind == "global":
        n = elm.support_count()
        if n > budget:
            raise BudgetError(f"enumeration would visit {n} sentences, budget is {budget:g}")
        chunks = [neg(elm._energy_ids(ids)) for _, ids in elm.iter_support_ids()]
        logz = logsumexp_last(concat(chunks, 0) if len(chunks) > 1 else chunks[0])
        j = add(mean_all(neg(elm.energy_batch(data))), neg(logz))
        return neg(j)
    lens = sorted({len(s) for s in data})
    n = elm.support_count(lens)
    if n > budget:
        raise BudgetError(f"enumeration would visit {n} sentences, budget is {budget:g}")
    pos = {l: i for i, l in enumerate(lens)}
    lz_parts = []
    for l in lens:
        chunks = [neg(elm._energy_ids(ids)) for _, ids in elm.iter_support_ids([l])]
        lz = logsumexp_last(concat(chunks, 0) if len(chunks) > 1 else chunks[0])
        lz_parts.append(reshape(lz, (1,)))
    lzvec = concat(lz_parts, 0) if len(lz_parts) > 1 else lz_parts[0]
    lengths = np.array([len(s) for s in data], dtype=np.int64)
    lz_g = index_select(lzvec, np.array([pos[l] for l in lengths]))
    logpi = Tensor(np.log(elm.length_prior[lengths]))
    j = mean_all(add(add(logpi, neg(elm.energy_batch(data))), neg(lz_g)))
    return neg(j)


def enumeration_kl(data_probs: dict, elm, budget: float = 2_000_000.0) -> float:
    """KL(data || model) in nats over an explicitly enumerated data law."""
    normalizers = elm.exact_log_z(budget=budget)
    seqs = [s for s, p in sorted(data_probs.items()) if p > 0]
    probs = np.array([data_probs[s] for s in seqs])
    if abs(probs.sum() - 1.0) > 1e-8:
        raise ValueError("data law must sum to one")
    lp_model = elm.log_prob_batch(seqs, normalizers=normalizers)
    return float(np.sum(probs * (np.log(probs) - lp_model)))
