"""Two-hot reward codes over symexp-spaced bins, and the cross-entropy reward loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import torch

from .errors import InputError


def symexp(x):
    """sign(x) * (exp(|x|) - 1); works on floats and arrays."""
    if isinstance(x, torch.Tensor):
        return torch.sign(x) * torch.expm1(torch.abs(x))
    if np.ndim(x) == 0:
        return math.copysign(math.expm1(abs(x)), x) if x != 0 else 0.0
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.expm1(np.abs(x))


def symlog(x):
    if isinstance(x, torch.Tensor):
        return torch.sign(x) * torch.log1p(torch.abs(x))
    if np.ndim(x) == 0:
        return math.copysign(math.log1p(abs(x)), x) if x != 0 else 0.0
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(np.abs(x))


@dataclass(frozen=True)
class BinGrid:
    num_bins: int = 65
    symlog_low: float = -10.0
    symlog_high: float = 10.0

    @cached_property
    def centers(self) -> np.ndarray:
        c = symexp(np.linspace(self.symlog_low, self.symlog_high, self.num_bins))
        c.flags.writeable = False
        return c

    @property
    def low(self) -> float:
        return float(self.centers[0])

    @property
    def high(self) -> float:
        return float(self.centers[-1])


@dataclass(frozen=True)
class TwoHotCode:
    """Mass ``lo_weight`` on ``lo_index`` and ``1 - lo_weight`` on ``lo_index + 1``."""

    lo_index: int
    lo_weight: float

    @property
    def hi_index(self) -> int:
        return self.lo_index + 1

    @property
    def hi_weight(self) -> float:
        return 1.0 - self.lo_weight

    def dense(self, num_bins: int) -> np.ndarray:
        out = np.zeros(num_bins)
        out[self.lo_index] = self.lo_weight
        out[self.hi_index] += self.hi_weight
        return out


def _locate(r: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.clip(r, centers[0], centers[-1])
    k = np.clip(np.searchsorted(centers, r, side="right") - 1, 0, len(centers) - 2)
    lo, hi = centers[k], centers[k + 1]
    return k, (hi - r) / (hi - lo)


def encode(r: float, grid: BinGrid) -> TwoHotCode:
    r = float(r)
    if math.isnan(r):
        raise InputError("cannot encode a NaN reward")
    k, w = _locate(np.asarray([r]), grid.centers)
    return TwoHotCode(int(k[0]), float(w[0]))


def encode_batch(rewards, grid: BinGrid) -> np.ndarray:
    """Dense two-hot targets, shape ``rewards.shape + (num_bins,)``, float64."""
    r = np.asarray(rewards, dtype=np.float64)
    if np.isnan(r).any():
        raise InputError("cannot encode a NaN reward")
    k, w = _locate(r.reshape(-1), grid.centers)
    out = np.zeros((k.size, grid.num_bins))
    rows = np.arange(k.size)
    out[rows, k] = w
    out[rows, k + 1] += 1.0 - w
    return out.reshape(r.shape + (grid.num_bins,))


def decode(probs, grid: BinGrid) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if p.shape[-1] != grid.num_bins:
        raise InputError(f"expected {grid.num_bins} probabilities, got {p.shape[-1]}")
    if (p < 0).any():
        raise InputError("negative probability")
    if np.abs(p.sum(-1) - 1.0).max() > 1e-6:
        raise InputError("probabilities do not sum to 1")
    out = p @ grid.centers
    return float(out) if out.ndim == 0 else out


def decode_logits(logits: torch.Tensor, grid: BinGrid) -> torch.Tensor:
    centers = torch.as_tensor(grid.centers, dtype=logits.dtype)
    return torch.softmax(logits, dim=-1) @ centers


def cross_entropy(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-row ``-sum(target * log_softmax(logits))``."""
    return -(target * torch.log_softmax(logits, dim=-1)).sum(-1)


def reward_loss(logits: torch.Tensor, r_true, grid: BinGrid) -> torch.Tensor:
    """Mean two-hot cross-entropy between predicted reward logits and true rewards."""
    target = torch.as_tensor(encode_batch(r_true, grid), dtype=logits.dtype)
    return cross_entropy(logits, target).mean()
