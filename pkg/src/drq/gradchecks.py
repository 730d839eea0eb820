"""Small float64 problem instances for finite-difference checks of every training loss.

Each factory takes a generator and returns ``(loss_fn, params)`` where
``loss_fn()`` rebuilds the loss from the current values in ``params``.
"""

from __future__ import annotations

import numpy as np
import torch

from . import twohot
from .agent import ActorCriticNets, actor_loss, critic_loss
from .encoder import EncoderDims, EncoderNets, UnrollBatch, encoder_loss

F64 = torch.float64
STATE_DIM, ACTION_DIM = 3, 2
SMALL = EncoderDims(STATE_DIM, ACTION_DIM, zs_dim=6, za_dim=4, zsa_dim=6, hidden_dim=8, num_bins=9)
GRID = twohot.BinGrid(SMALL.num_bins, -3.0, 3.0)


def _unroll_batch(rng: np.random.Generator, batch: int = 5, horizon: int = 3) -> UnrollBatch:
    mask = np.ones((batch, horizon), dtype=bool)
    # truncate a couple of rows the way episode ends do
    for row in rng.choice(batch, size=2, replace=False):
        mask[row, int(rng.integers(1, horizon + 1)):] = False
    return UnrollBatch(
        states=torch.from_numpy(rng.standard_normal((batch, horizon + 1, STATE_DIM))),
        actions=torch.from_numpy(rng.uniform(-1, 1, (batch, horizon, ACTION_DIM))),
        rewards=rng.normal(0.0, 5.0, (batch, horizon)),
        valid_mask=torch.from_numpy(mask),
    )


def _encoder_term(weights, field):
    def make(rng):
        nets = EncoderNets(SMALL, rng, F64)
        # a target that differs from the online weights, as after some training
        nets.target = nets.params.clone()
        with torch.no_grad():
            for name in nets.target:
                nets.target.params[name].add_(0.1 * torch.from_numpy(rng.standard_normal(tuple(nets.target[name].shape))))
        batch = _unroll_batch(rng)

        def loss_fn():
            return getattr(encoder_loss(nets, batch, weights, 0.1, GRID), field)

        return loss_fn, nets.params

    return make


def _critic(rng):
    nets = ActorCriticNets(SMALL.zs_dim, SMALL.zsa_dim, ACTION_DIM, 7, 7, rng, F64)
    zsa = torch.from_numpy(rng.standard_normal((16, SMALL.zsa_dim)))
    # spread targets so both the quadratic and linear Huber regions are hit
    y = torch.from_numpy(rng.normal(0.0, 2.0, 16))

    def loss_fn():
        return critic_loss(nets, zsa, y, 1.0)[0]

    return loss_fn, nets.critic


def _actor(rng):
    enc = EncoderNets(SMALL, rng, F64)
    nets = ActorCriticNets(SMALL.zs_dim, SMALL.zsa_dim, ACTION_DIM, 7, 7, rng, F64)
    states = rng.standard_normal((16, STATE_DIM))

    def loss_fn():
        return actor_loss(nets, enc, states)

    return loss_fn, nets.actor


LOSS_CHECKS = {
    "reward_ce": _encoder_term((1.0, 0.0, 0.0), "reward"),
    "latent_dynamics": _encoder_term((0.0, 1.0, 0.0), "dynamics"),
    "infonce": _encoder_term((0.0, 0.0, 1.0), "infonce"),
    "encoder_total": _encoder_term((0.1, 1.0, 0.1), "total"),
    "critic_huber": _critic,
    "actor": _actor,
}
