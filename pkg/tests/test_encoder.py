import math

import numpy as np
import pytest
import torch

from drq import twohot
from drq.encoder import (
    EncoderDims,
    EncoderNets,
    UnrollBatch,
    cosine_similarity_matrix,
    encoder_loss,
    infonce_loss,
    infonce_rows,
)
from drq.errors import ConfigError, ShapeError, StateError

F64 = torch.float64
DIMS = EncoderDims(3, 2, zs_dim=6, za_dim=4, zsa_dim=6, hidden_dim=8, num_bins=9)
GRID = twohot.BinGrid(9, -3.0, 3.0)


def nets(seed=0):
    return EncoderNets(DIMS, np.random.default_rng(seed), F64)


def batch(rng, b=4, h=3, mask=None):
    return UnrollBatch(
        torch.from_numpy(rng.standard_normal((b, h + 1, 3))),
        torch.from_numpy(rng.uniform(-1, 1, (b, h, 2))),
        rng.normal(size=(b, h)),
        torch.ones(b, h, dtype=torch.bool) if mask is None else torch.as_tensor(mask),
    )


def test_default_architecture():
    d = EncoderDims(17, 6)
    assert d.f.layer_dims == [(17, 750), (750, 512)]
    assert d.action_embed.layer_dims == [(6, 256)]
    assert d.g.layer_dims == [(768, 750), (750, 512)]
    assert d.model.layer_dims == [(512, 65 + 512)]


def test_output_shapes(rng):
    n = nets()
    s = torch.from_numpy(rng.standard_normal((5, 3)))
    zs = n.encode_state(s)
    zsa = n.encode_state_action(zs, torch.zeros(5, 2, dtype=F64))
    logits, z_next = n.predict(zsa)
    assert zs.shape == (5, 6) and zsa.shape == (5, 6)
    assert logits.shape == (5, 9) and z_next.shape == (5, 6)


def test_shape_error():
    n = nets()
    with pytest.raises(ShapeError):
        n.encode_state_action(torch.zeros(2, 5, dtype=F64), torch.zeros(2, 2, dtype=F64))


def test_target_is_hard_copy():
    n = nets()
    with torch.no_grad():
        n.params.params["f.0.weight"].add_(1.0)
    assert not torch.equal(n.params["f.0.weight"], n.target["f.0.weight"])
    n.hard_update_target()
    assert torch.equal(n.params["f.0.weight"], n.target["f.0.weight"])


class TestInfoNCE:
    def test_cosine_matrix(self):
        a = torch.tensor([[1.0, 0.0], [0.0, 2.0]], dtype=F64)
        np.testing.assert_allclose(cosine_similarity_matrix(a, a).numpy(), np.eye(2), atol=1e-8)

    def test_single_row_is_zero(self):
        z = torch.ones(1, 4, dtype=F64)
        assert float(infonce_loss(z, z, 0.1)) == 0.0

    def test_perfect_alignment_near_zero(self):
        z = torch.eye(8, dtype=F64)
        # diagonal logit 10, off-diagonal 0: loss = log(1 + 7 e^-10)
        assert float(infonce_loss(z, z, 0.1)) == pytest.approx(math.log1p(7 * math.exp(-10)), rel=1e-6)

    def test_identical_rows_give_log_n(self):
        z = torch.ones(16, 3, dtype=F64)
        assert float(infonce_loss(z, z, 0.1)) == pytest.approx(math.log(16), rel=1e-9)

    def test_targets_get_no_gradient(self, rng):
        zh = torch.from_numpy(rng.standard_normal((5, 3))).requires_grad_(True)
        zt = torch.from_numpy(rng.standard_normal((5, 3))).requires_grad_(True)
        infonce_loss(zh, zt, 0.1).backward()
        assert zt.grad is None and zh.grad is not None

    def test_bad_temperature(self):
        z = torch.ones(2, 2, dtype=F64)
        with pytest.raises(ConfigError):
            infonce_rows(z, z, 0.0)


class TestEncoderLoss:
    def test_terms_combine(self, rng):
        n, b = nets(), batch(rng)
        terms = encoder_loss(n, b, (0.1, 1.0, 0.1), 0.1, GRID)
        expect = 0.1 * terms.reward + terms.dynamics + 0.1 * terms.infonce
        assert float(terms.total) == pytest.approx(float(expect))

    def test_no_infonce_when_weight_zero(self, rng):
        terms = encoder_loss(nets(), batch(rng), (0.1, 1.0, 0.0), 0.1, GRID)
        assert float(terms.infonce) == 0.0

    def test_dynamics_zero_when_prediction_matches(self, rng):
        # with M = 0 the predicted latent is 0; a zero target encoder makes the MSE vanish
        n = nets()
        with torch.no_grad():
            for name in n.params:
                if name.startswith("M."):
                    n.params.params[name].zero_()
            for name in n.target:
                n.target.params[name].zero_()
        terms = encoder_loss(n, batch(rng), (0.0, 1.0, 0.0), 0.1, GRID)
        assert float(terms.dynamics) == 0.0

    def test_masked_steps_do_not_contribute(self, rng):
        n = nets()
        b = batch(rng, mask=np.array([[1, 1, 0], [1, 0, 0], [1, 1, 1], [1, 1, 1]], dtype=bool))
        base = encoder_loss(n, b, (0.1, 1.0, 0.1), 0.1, GRID)
        b.states[0, 3] += 100.0
        b.actions[1, 2] += 5.0
        b.rewards[1, 1] = 1e6
        again = encoder_loss(n, b, (0.1, 1.0, 0.1), 0.1, GRID)
        assert float(base.total) == float(again.total)

    def test_single_step_reward_term(self, rng):
        n, b = nets(), batch(rng, h=1)
        terms = encoder_loss(n, b, (1.0, 0.0, 0.0), 0.1, GRID)
        zsa = n.encode_state_action(n.encode_state(b.states[:, 0]), b.actions[:, 0])
        logits, _ = n.predict(zsa)
        expect = twohot.reward_loss(logits, b.rewards[:, 0], GRID)
        assert float(terms.reward) == pytest.approx(float(expect), rel=1e-12)

    def test_rollout_feeds_back_prediction(self, rng):
        n, b = nets(), batch(rng, h=2)
        terms = encoder_loss(n, b, (0.0, 1.0, 0.0), 0.1, GRID)
        z = n.encode_state(b.states[:, 0])
        tgt = n.target_f(b.states[:, 1:])
        total = 0.0
        for t in range(2):
            _, z = n.predict(n.encode_state_action(z, b.actions[:, t]))
            total = total + ((z - tgt[:, t]) ** 2).mean(-1).sum()
        assert float(terms.dynamics) == pytest.approx(float(total) / 8, rel=1e-12)

    def test_target_encoder_untouched_by_gradient(self, rng):
        n = nets()
        terms = encoder_loss(n, batch(rng), (0.1, 1.0, 0.1), 0.1, GRID)
        terms.total.backward()
        assert all(n.target[k].grad is None for k in n.target)

    def test_empty_batch_rejected(self, rng):
        with pytest.raises(StateError):
            encoder_loss(nets(), batch(rng, mask=np.zeros((4, 3), bool)), (1, 1, 1), 0.1, GRID)
