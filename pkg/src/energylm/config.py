"""Flat key=value run configuration with schema versioning.

Lines are KEY=VALUE; blank lines and #-comments are ignored.  Unknown keys
are rejected, every value is type-checked, and command-line overrides are
applied after the file so flags win.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .energy import ARCHS, KINDS
from .errors import ConfigError

SCHEMA_VERSION = 1
MODELS = ("elm", "alm")
METHODS = ("nce", "dnce", "mle-mis", "mle-is")


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    model: str = "elm"
    arch: str = "sum_target_logit"
    kind: str = "global"
    method: str = "nce"
    max_len: int = 16
    d_model: int = 32
    n_heads: int = 2
    n_blocks: int = 2
    steps: int = 1000
    batch_size: int = 32
    nu: float = 1.0
    lr: float = 1e-3
    proposal_lr: float = 1e-3
    n_samples: int = 256
    divergence_bound: float = 1e3
    restart_per_update: bool = True
    enum_budget: float = 2e6
    seed: int = 0
    log_every: int = 200
    alpha: float = 0.3
    beta: float = 0.0
    temperature: float = 1.0

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version {self.schema_version} unsupported, this build reads {SCHEMA_VERSION}"
            )
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method in ("mle-mis", "mle-is") and self.kind != "global":
            raise ConfigError("sampled maximum likelihood needs kind=global")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be a positive multiple of n_heads")
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 1 or self.n_samples < 1:
            raise ConfigError("batch_size and n_samples must be positive")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.lr <= 0 or self.proposal_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.divergence_bound <= 0:
            raise ConfigError("divergence_bound must be positive")
        if not self.restart_per_update:
            raise ConfigError("persistent chains are not supported; restart_per_update must be true")
        if self.enum_budget < 1:
            raise ConfigError("enum_budget must be >= 1")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"key {key}: cannot parse {raw!r} as {kind}") from None


def parse_overrides(pairs) -> dict:
    """KEY=VALUE strings (e.g. from repeated --set flags) to typed values."""
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not KEY=VALUE")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw)
    return out


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Read the file (optional), apply overrides, validate everything."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected KEY=VALUE, got {line!r}")
                key, raw = line.split("=", 1)
                key = key.strip()
                if key not in _FIELD_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                if key in values:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                values[key] = _convert(key, raw)
    values.update(overrides or {})
    return RunConfig(**values)
