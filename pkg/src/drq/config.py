"""Run configuration: hyperparameter defaults, ablation variants, and config-file loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

import yaml

from .errors import ConfigError

ABLATIONS = ("no_infonce", "lap_only", "forget_only", "no_dyn_loss", "mrq_baseline")


@dataclass(frozen=True)
class AgentConfig:
    # environment / run
    env: str = "PointMass2D"
    seed: int = 0
    total_steps: int = 1_000_000
    eval_every: int = 5_000
    eval_episodes: int = 10
    log_every: int = 1_000
    ablation: str | None = None

    # replay
    gamma: float = 0.99
    buffer_size: int = 1_000_000
    batch_size: int = 256
    target_update_freq: int = 250
    replay_ratio: int = 1
    exploration_steps: int = 10_000
    alpha: float = 0.4
    decay_eps: float = 1e-4
    eps_low: float = 0.1
    prioritized: bool = True

    # encoder objective
    lambda_d: float = 1.0
    lambda_r: float = 0.1
    lambda_m: float = 0.1
    tau: float = 0.1
    enc_horizon: int = 5
    q_horizon: int = 3
    num_bins: int = 65
    reward_symlog_low: float = -10.0
    reward_symlog_high: float = 10.0

    # optimizers
    encoder_lr: float = 3e-4
    encoder_weight_decay: float = 0.01
    actor_lr: float = 3e-4
    actor_weight_decay: float = 0.0
    critic_lr: float = 3e-4
    critic_weight_decay: float = 0.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    # noise
    exploration_noise: float = 0.2
    target_noise: float = 0.2
    noise_clip: float = 0.3

    # architecture
    zs_dim: int = 512
    za_dim: int = 256
    zsa_dim: int = 512
    enc_hidden_dim: int = 750
    actor_hidden_dim: int = 512
    critic_hidden_dim: int = 512

    huber_threshold: float = 1.0
    critic_grad_to_encoder: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive_ints = ("total_steps", "buffer_size", "batch_size", "target_update_freq", "replay_ratio",
                         "enc_horizon", "q_horizon", "num_bins", "zs_dim", "za_dim", "zsa_dim",
                         "enc_hidden_dim", "actor_hidden_dim", "critic_hidden_dim", "eval_episodes",
                         "eval_every", "log_every")
        for name in positive_ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.exploration_steps < 0:
            raise ConfigError("exploration_steps must be >= 0")
        for name in ("encoder_lr", "actor_lr", "critic_lr", "tau", "alpha", "huber_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0 <= self.decay_eps < 1:
            raise ConfigError("decay_eps must lie in [0, 1)")
        if self.eps_low < 0:
            raise ConfigError("eps_low must be >= 0")
        for name in ("exploration_noise", "target_noise", "noise_clip", "lambda_d", "lambda_r", "lambda_m"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.ablation is not None and self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.num_bins < 2:
            raise ConfigError("num_bins must be >= 2")

    def replace(self, **changes) -> AgentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["adam_betas"] = list(self.adam_betas)
        return out


def with_ablation(cfg: AgentConfig, variant: str | None) -> AgentConfig:
    """Flip the single switch that defines ``variant``."""
    if variant is None:
        return cfg
    if variant not in ABLATIONS:
        raise ConfigError(f"unknown ablation {variant!r}; choose from {ABLATIONS}")
    changes = {
        "no_infonce": {"lambda_m": 0.0},
        "lap_only": {"decay_eps": 0.0},
        "forget_only": {"prioritized": False},
        "no_dyn_loss": {"lambda_d": 0.0},
        "mrq_baseline": {"lambda_m": 0.0, "decay_eps": 0.0},
    }[variant]
    return cfg.replace(ablation=variant, **changes)


def desk_scale(cfg: AgentConfig) -> AgentConfig:
    """Buffer capped at 1e5 and 1e3 warm-up steps, everything else untouched."""
    return cfg.replace(buffer_size=min(cfg.buffer_size, 100_000), exploration_steps=1_000)


def _number(key: str, value) -> float:
    # YAML reads exponent literals without a dot ("1e-4") as strings
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def from_mapping(data: dict, base: AgentConfig | None = None) -> AgentConfig:
    base = base or AgentConfig()
    known = {f.name for f in fields(AgentConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    changes = {}
    for key, value in data.items():
        current = getattr(base, key)
        if key == "adam_betas":
            value = tuple(float(v) for v in value)
            if len(value) != 2:
                raise ConfigError("adam_betas needs two values")
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean")
        elif isinstance(current, int):
            number = _number(key, value)
            if not number.is_integer():
                raise ConfigError(f"{key} must be an integer")
            value = int(number)
        elif isinstance(current, float):
            value = _number(key, value)
        changes[key] = value
    cfg = base.replace(**changes)
    if cfg.ablation is not None and "ablation" in changes:
        cfg = with_ablation(cfg.replace(ablation=None), cfg.ablation)
    return cfg


def load_config(path, base: AgentConfig | None = None) -> AgentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value mapping at top level")
    return from_mapping(data, base)
