"""Deterministic actor and twin critics on top of the learned representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import twohot
from .config import AgentConfig
from .diffcore import Activation, MlpSpec, ParamStore, adamw_step, backward, mlp_forward, mlp_init
from .encoder import EncoderDims, EncoderNets, UnrollBatch, encoder_loss
from .errors import InputError
from .replay import SequenceBatch


@dataclass(frozen=True)
class NoiseSpec:
    exploration_sigma: float = 0.2
    smoothing_sigma: float = 0.2
    smoothing_clip: float = 0.3

    def __post_init__(self):
        if min(self.exploration_sigma, self.smoothing_sigma, self.smoothing_clip) < 0:
            raise ValueError("noise parameters must be nonnegative")


class ActorCriticNets:
    def __init__(self, zs_dim, zsa_dim, action_dim, actor_hidden, critic_hidden, rng, dtype=torch.float32):
        np_dtype = np.float64 if dtype == torch.float64 else np.float32
        self.action_dim = action_dim
        self.actor_spec = MlpSpec.build(zs_dim, [actor_hidden], action_dim, Activation.RELU, Activation.TANH)
        self.critic_spec = MlpSpec.build(zsa_dim, [critic_hidden], 1, Activation.ELU)
        self.actor = mlp_init(self.actor_spec, rng, prefix="pi.", dtype=np_dtype)
        self.critic = ParamStore()
        for name in ("q1.", "q2."):
            self.critic.merge(mlp_init(self.critic_spec, rng, prefix=name, dtype=np_dtype))
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()

    def pi(self, zs: torch.Tensor, store: ParamStore | None = None) -> torch.Tensor:
        return mlp_forward(self.actor if store is None else store, self.actor_spec, zs, prefix="pi.")

    def q(self, zsa: torch.Tensor, store: ParamStore | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        store = self.critic if store is None else store
        q1 = mlp_forward(store, self.critic_spec, zsa, prefix="q1.")[..., 0]
        q2 = mlp_forward(store, self.critic_spec, zsa, prefix="q2.")[..., 0]
        return q1, q2

    def hard_update_targets(self) -> None:
        self.actor_target.copy_from(self.actor)
        self.critic_target.copy_from(self.critic)


def _as_tensor(x, dtype) -> torch.Tensor:
    return x.to(dtype) if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x), dtype=dtype)


def select_action(
    nets: ActorCriticNets,
    encoder: EncoderNets,
    s,
    mode: str,
    rng: np.random.Generator,
    sigma: float = 0.2,
) -> np.ndarray:
    """Behaviour action.

    ``explore`` acts with the target actor on target-encoder features and adds
    unclipped Gaussian noise; ``exploit`` is the noiseless online policy. The
    result is always clipped to [-1, 1].
    """
    dtype = encoder.params[next(iter(encoder.params))].dtype
    with torch.no_grad():
        s = _as_tensor(s, dtype)
        if mode == "explore":
            base = nets.pi(encoder.encode_state(s, encoder.target), nets.actor_target)
        elif mode == "exploit":
            base = nets.pi(encoder.encode_state(s))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    a = base.numpy().astype(np.float64)
    if mode == "explore" and sigma > 0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def n_step_return(rewards, mask, gamma: float):
    """Discounted sum of the valid prefix of each row and the bootstrap discount ``gamma**n``."""
    rewards = torch.as_tensor(rewards)
    mask = torch.as_tensor(mask)
    horizon = rewards.shape[-1]
    discounts = gamma ** torch.arange(horizon, dtype=torch.float64)
    ret = (rewards.to(torch.float64) * mask * discounts).sum(-1)
    n = mask.sum(-1)
    return ret, torch.as_tensor(gamma, dtype=torch.float64) ** n


def bootstrap_target(rewards, mask, terminal_last, bootstrap_q, gamma: float) -> torch.Tensor:
    """``sum_t gamma^t r_t + gamma^n * (1 - terminal) * q_boot`` with n the valid prefix length."""
    ret, disc = n_step_return(rewards, mask, gamma)
    alive = 1.0 - torch.as_tensor(terminal_last, dtype=torch.float64)
    return ret + disc * alive * torch.as_tensor(bootstrap_q, dtype=torch.float64)


def smoothed_target_action(nets, zs, rng: np.random.Generator, noise: NoiseSpec) -> torch.Tensor:
    a = nets.pi(zs, nets.actor_target)
    psi = rng.normal(0.0, noise.smoothing_sigma, size=tuple(a.shape))
    psi = np.clip(psi, -noise.smoothing_clip, noise.smoothing_clip)
    return torch.clamp(a + torch.as_tensor(psi, dtype=a.dtype), -1.0, 1.0)


def td_target(
    nets: ActorCriticNets,
    encoder: EncoderNets,
    seq: SequenceBatch,
    gamma: float,
    rng: np.random.Generator,
    noise: NoiseSpec = NoiseSpec(),
) -> torch.Tensor:
    """Multi-step clipped-double-Q target for each row of ``seq`` (no gradient)."""
    if seq.rewards.ndim != 2 or seq.states.shape[1] != seq.rewards.shape[1] + 1:
        raise InputError("malformed reward sequence")
    lengths = np.asarray(seq.lengths)
    if (lengths < 1).any():
        raise InputError("every row needs at least one valid step")
    rows = np.arange(len(lengths))
    dtype = encoder.params[next(iter(encoder.params))].dtype
    with torch.no_grad():
        s_boot = torch.as_tensor(seq.states[rows, lengths], dtype=dtype)
        zs = encoder.encode_state(s_boot, encoder.target)
        a = smoothed_target_action(nets, zs, rng, noise)
        q1, q2 = nets.q(encoder.encode_state_action(zs, a, encoder.target), nets.critic_target)
        q_boot = torch.minimum(q1, q2)
    terminal_last = seq.terminals[rows, lengths - 1]
    y = bootstrap_target(seq.rewards, seq.mask, terminal_last, q_boot.to(torch.float64), gamma)
    return y.to(dtype)


def state_action_features(encoder: EncoderNets, states, actions, grad: bool = False) -> torch.Tensor:
    dtype = encoder.params[next(iter(encoder.params))].dtype
    s = _as_tensor(states, dtype)
    a = _as_tensor(actions, dtype)
    if grad:
        return encoder.encode_state_action(encoder.encode_state(s), a)
    with torch.no_grad():
        return encoder.encode_state_action(encoder.encode_state(s), a)


def critic_loss(
    nets: ActorCriticNets,
    zsa: torch.Tensor,
    y: torch.Tensor,
    huber_threshold: float = 1.0,
) -> tuple[torch.Tensor, np.ndarray]:
    """Huber loss averaged over the batch and both critics, plus per-row max |Q_i - y|."""
    q1, q2 = nets.q(zsa)
    loss = 0.5 * (
        F.huber_loss(q1, y, delta=huber_threshold) + F.huber_loss(q2, y, delta=huber_threshold)
    )
    with torch.no_grad():
        td = torch.maximum((q1 - y).abs(), (q2 - y).abs())
    return loss, td.numpy().astype(np.float64)


def actor_loss(nets: ActorCriticNets, encoder: EncoderNets, states) -> torch.Tensor:
    """-(Q1 + Q2)/2 at the policy action; only the actor receives gradient."""
    dtype = encoder.params[next(iter(encoder.params))].dtype
    with torch.no_grad():
        zs = encoder.encode_state(_as_tensor(states, dtype))
    a = nets.pi(zs)
    frozen_enc = encoder.params.frozen()
    zsa = encoder.encode_state_action(zs, a, frozen_enc)
    q1, q2 = nets.q(zsa, nets.critic.frozen())
    return -0.5 * (q1 + q2).mean()


class DRQAgent:
    """All networks, optimizer state and update rules for one run."""

    def __init__(self, cfg: AgentConfig, state_dim: int, action_dim: int, rng: np.random.Generator,
                 dtype=torch.float32):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.dtype = dtype
        self.grid = twohot.BinGrid(cfg.num_bins, cfg.reward_symlog_low, cfg.reward_symlog_high)
        self.noise = NoiseSpec(cfg.exploration_noise, cfg.target_noise, cfg.noise_clip)
        dims = EncoderDims(state_dim, action_dim, cfg.zs_dim, cfg.za_dim, cfg.zsa_dim,
                           cfg.enc_hidden_dim, cfg.num_bins)
        self.encoder = EncoderNets(dims, rng, dtype)
        self.nets = ActorCriticNets(cfg.zs_dim, cfg.zsa_dim, action_dim, cfg.actor_hidden_dim,
                                    cfg.critic_hidden_dim, rng, dtype)

    def act(self, obs, explore: bool, rng: np.random.Generator) -> np.ndarray:
        mode = "explore" if explore else "exploit"
        return select_action(self.nets, self.encoder, obs, mode, rng, self.cfg.exploration_noise)

    def hard_update_targets(self) -> None:
        self.nets.hard_update_targets()
        self.encoder.hard_update_target()

    def update_encoder(self, seq: SequenceBatch) -> dict[str, float]:
        cfg = self.cfg
        terms = encoder_loss(
            self.encoder,
            UnrollBatch.from_sequences(seq, self.dtype),
            (cfg.lambda_r, cfg.lambda_d, cfg.lambda_m),
            cfg.tau,
            self.grid,
        )
        grads = backward(terms.total, self.encoder.params)
        adamw_step(self.encoder.params, grads, cfg.encoder_lr, cfg.encoder_weight_decay,
                   cfg.adam_betas, cfg.adam_eps)
        return terms.as_floats()

    def update_critic(self, seq: SequenceBatch, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        cfg = self.cfg
        y = td_target(self.nets, self.encoder, seq, cfg.gamma, rng, self.noise)
        zsa = state_action_features(self.encoder, seq.states[:, 0], seq.actions[:, 0],
                                    grad=cfg.critic_grad_to_encoder)
        loss, td = critic_loss(self.nets, zsa, y, cfg.huber_threshold)
        if cfg.critic_grad_to_encoder:
            enc_grads = backward(loss, self.encoder.params, retain_graph=True)
        grads = backward(loss, self.nets.critic)
        adamw_step(self.nets.critic, grads, cfg.critic_lr, cfg.critic_weight_decay, cfg.adam_betas, cfg.adam_eps)
        if cfg.critic_grad_to_encoder:
            adamw_step(self.encoder.params, enc_grads, cfg.encoder_lr, cfg.encoder_weight_decay,
                       cfg.adam_betas, cfg.adam_eps)
        return float(loss.detach()), td

    def update_actor(self, states) -> float:
        cfg = self.cfg
        loss = actor_loss(self.nets, self.encoder, states)
        grads = backward(loss, self.nets.actor)
        adamw_step(self.nets.actor, grads, cfg.actor_lr, cfg.actor_weight_decay, cfg.adam_betas, cfg.adam_eps)
        return float(loss.detach())

    _STORES = ("encoder.params", "encoder.target", "nets.actor", "nets.critic", "nets.actor_target",
               "nets.critic_target")

    def _store(self, path: str) -> ParamStore:
        obj = self
        for part in path.split("."):
            obj = getattr(obj, part)
        return obj

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for path in self._STORES:
            out.update(self._store(path).state_arrays(f"{path}/"))
        return out

    def load_state_arrays(self, arrays) -> None:
        for path in self._STORES:
            self._store(path).load_state_arrays(arrays, f"{path}/")
