"""State / state-action encoders, the linear latent model, and the unrolled encoder loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import twohot
from .diffcore import Activation, MlpSpec, ParamStore, mlp_forward, mlp_init, stop_gradient
from .errors import ConfigError, ShapeError, StateError


@dataclass(frozen=True)
class EncoderDims:
    state_dim: int
    action_dim: int
    zs_dim: int = 512
    za_dim: int = 256
    zsa_dim: int = 512
    hidden_dim: int = 750
    num_bins: int = 65

    @property
    def f(self) -> MlpSpec:
        return MlpSpec.build(self.state_dim, [self.hidden_dim], self.zs_dim, Activation.ELU, Activation.ELU)

    @property
    def action_embed(self) -> MlpSpec:
        return MlpSpec.build(self.action_dim, [], self.za_dim, output=Activation.ELU)

    @property
    def g(self) -> MlpSpec:
        return MlpSpec.build(self.zs_dim + self.za_dim, [self.hidden_dim], self.zsa_dim, Activation.ELU)

    @property
    def model(self) -> MlpSpec:
        return MlpSpec.build(self.zsa_dim, [], self.num_bins + self.zs_dim)


class EncoderNets:
    """f, the action embedding, g and the linear model M share one parameter store.

    ``target`` is a frozen copy of the same store; only :meth:`hard_update_target`
    writes to it. ``target_f`` is its state-encoder part.
    """

    def __init__(self, dims: EncoderDims, rng: np.random.Generator, dtype=torch.float32):
        self.dims = dims
        np_dtype = np.float64 if dtype == torch.float64 else np.float32
        self.params = ParamStore()
        for name, spec in self.specs.items():
            self.params.merge(mlp_init(spec, rng, prefix=f"{name}.", dtype=np_dtype))
        self.target = self.params.clone()

    @property
    def specs(self) -> dict[str, MlpSpec]:
        d = self.dims
        return {"f": d.f, "za": d.action_embed, "g": d.g, "M": d.model}

    def _run(self, store: ParamStore, name: str, x: torch.Tensor) -> torch.Tensor:
        return mlp_forward(store, self.specs[name], x, prefix=f"{name}.")

    def encode_state(self, s: torch.Tensor, store: ParamStore | None = None) -> torch.Tensor:
        return self._run(self.params if store is None else store, "f", s)

    def target_f(self, s: torch.Tensor) -> torch.Tensor:
        return self.encode_state(s, self.target)

    def encode_state_action(self, zs: torch.Tensor, a: torch.Tensor, store: ParamStore | None = None) -> torch.Tensor:
        store = self.params if store is None else store
        if zs.shape[-1] != self.dims.zs_dim:
            raise ShapeError(f"z_s must have dim {self.dims.zs_dim}, got {zs.shape[-1]}")
        za = self._run(store, "za", a)
        return self._run(store, "g", torch.cat([zs, za], dim=-1))

    def predict(self, zsa: torch.Tensor, store: ParamStore | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        out = self._run(self.params if store is None else store, "M", zsa)
        return out[..., : self.dims.num_bins], out[..., self.dims.num_bins :]

    def hard_update_target(self) -> None:
        self.target.copy_from(self.params)


def cosine_similarity_matrix(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    an = a / (a.norm(dim=-1, keepdim=True) + eps)
    bn = b / (b.norm(dim=-1, keepdim=True) + eps)
    return an @ bn.transpose(-1, -2)


def infonce_rows(z_hat: torch.Tensor, z_tgt: torch.Tensor, tau: float) -> torch.Tensor:
    """Per-anchor InfoNCE terms; every other target in the batch is a negative."""
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    logits = cosine_similarity_matrix(z_hat, stop_gradient(z_tgt)) / tau
    return -torch.diagonal(torch.log_softmax(logits, dim=-1))


def infonce_loss(z_hat: torch.Tensor, z_tgt: torch.Tensor, tau: float) -> torch.Tensor:
    return infonce_rows(z_hat, z_tgt, tau).mean()


@dataclass
class UnrollBatch:
    states: torch.Tensor  # [B, H+1, state_dim]
    actions: torch.Tensor  # [B, H, action_dim]
    rewards: np.ndarray  # [B, H]
    valid_mask: torch.Tensor  # [B, H] bool

    @classmethod
    def from_sequences(cls, seq, dtype=torch.float32) -> UnrollBatch:
        return cls(
            states=torch.as_tensor(seq.states, dtype=dtype),
            actions=torch.as_tensor(seq.actions, dtype=dtype),
            rewards=np.asarray(seq.rewards, dtype=np.float64),
            valid_mask=torch.as_tensor(seq.mask),
        )


@dataclass
class EncoderLossTerms:
    total: torch.Tensor
    reward: torch.Tensor
    dynamics: torch.Tensor
    infonce: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "encoder_loss": float(self.total.detach()),
            "reward_loss": float(self.reward.detach()),
            "dynamics_loss": float(self.dynamics.detach()),
            "infonce_loss": float(self.infonce.detach()),
        }


def encoder_loss(
    nets: EncoderNets,
    batch: UnrollBatch,
    weights: tuple[float, float, float],
    tau: float,
    grid: twohot.BinGrid,
) -> EncoderLossTerms:
    """Reward CE, latent MSE and InfoNCE over an H-step latent rollout.

    Each term is averaged over valid (row, step) pairs; the rollout feeds the
    predicted latent back into g. Targets come from the frozen state encoder.
    """
    lam_r, lam_d, lam_m = weights
    mask = batch.valid_mask
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise StateError("unroll batch has no valid steps")
    horizon = batch.actions.shape[1]
    dtype = batch.states.dtype
    with torch.no_grad():
        targets = nets.target_f(batch.states[:, 1:])
    reward_targets = torch.as_tensor(twohot.encode_batch(batch.rewards, grid), dtype=dtype)
    fmask = mask.to(dtype)

    z = nets.encode_state(batch.states[:, 0])
    r_sum = d_sum = m_sum = torch.zeros((), dtype=dtype)
    for t in range(horizon):
        zsa = nets.encode_state_action(z, batch.actions[:, t])
        logits, z = nets.predict(zsa)
        w = fmask[:, t]
        r_sum = r_sum + (twohot.cross_entropy(logits, reward_targets[:, t]) * w).sum()
        tgt = stop_gradient(targets[:, t])
        d_sum = d_sum + (((z - tgt) ** 2).mean(-1) * w).sum()
        if lam_m:
            keep = mask[:, t]
            if bool(keep.all()):
                m_sum = m_sum + infonce_rows(z, tgt, tau).sum()
            elif bool(keep.any()):
                m_sum = m_sum + infonce_rows(z[keep], tgt[keep], tau).sum()
    reward, dynamics, info = r_sum / n_valid, d_sum / n_valid, m_sum / n_valid
    total = lam_r * reward + lam_d * dynamics + lam_m * info
    return EncoderLossTerms(total, reward, dynamics, info)
