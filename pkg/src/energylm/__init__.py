"""Energy-based sentence models with exact small-vocabulary diagnostics.

The package trains unnormalized sequence models (four scoring heads, global
or per-length normalization) against an autoregressive proposal, then uses
them to rescore n-best hypothesis lists and report recognition metrics.
"""

from .backbones import BackboneConfig, BidirBackbone, CausalBackbone
from .energy import EnergyModel, empirical_length_prior, pll_score
from .errors import BudgetError, ConfigError, CorpusError, DivergenceError
from .optim import Adam, Sgd
from .params import Parameters
from .proposal import AutoregressiveLM
from .rng import stream
from .tensor import Tape, Tensor, no_grad
from .training import (
    MleConfig,
    NceConfig,
    enumeration_kl,
    exact_mle_loss,
    mis_chain,
    mis_states,
    mle_step,
    nce_objective,
    nce_step,
    snis_estimate,
    snis_weights,
    train_mle,
    train_nce,
)
from .vocab import Vocab

__all__ = [
    "Adam",
    "AutoregressiveLM",
    "BackboneConfig",
    "BidirBackbone",
    "BudgetError",
    "CausalBackbone",
    "ConfigError",
    "CorpusError",
    "DivergenceError",
    "EnergyModel",
    "MleConfig",
    "NceConfig",
    "Parameters",
    "Sgd",
    "Tape",
    "Tensor",
    "Vocab",
    "empirical_length_prior",
    "enumeration_kl",
    "exact_mle_loss",
    "mis_chain",
    "mis_states",
    "mle_step",
    "nce_objective",
    "nce_step",
    "no_grad",
    "pll_score",
    "snis_estimate",
    "snis_weights",
    "stream",
    "train_mle",
    "train_nce",
]

__version__ = "0.1.0"
