import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drq import envs
from drq.envs import EnvState, make_spec, observe, pendulum_energy, reset, step, wrap_angle
from drq.errors import ConfigError, StateError

NAMES = sorted(envs.ENV_SPECS)


def test_dims():
    assert {n: (s.state_dim, s.action_dim) for n, s in envs.ENV_SPECS.items()} == {
        "PointMass2D": (4, 2), "PendulumSwingUp": (3, 1), "SparseGoal2D": (4, 2)}


def test_unknown_env():
    with pytest.raises(ConfigError):
        make_spec("CartPole")


def test_bad_episode_len():
    with pytest.raises(ConfigError):
        make_spec("PointMass2D", episode_len=0)


@pytest.mark.parametrize("name", NAMES)
def test_reset_deterministic(name):
    spec = make_spec(name)
    _, a = reset(spec, 7)
    _, b = reset(spec, 7)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (spec.state_dim,)


def test_point_mass_reset():
    for seed in range(20):
        state, obs = reset(make_spec("PointMass2D"), seed)
        assert np.all(np.abs(obs[:2]) <= 1) and not obs[2:].any()


def test_pendulum_reset_hangs_down():
    _, obs = reset(make_spec("PendulumSwingUp"), 0)
    np.testing.assert_allclose(obs, [-1.0, 0.0, 0.0], atol=0.05)


def test_point_mass_hand_step():
    spec = make_spec("PointMass2D")
    s = EnvState(np.array([1.0, 0.0, 0.0, 0.0]))
    s2, obs, r, done = step(spec, s, [-1.0, 0.0])
    np.testing.assert_allclose(obs, [0.9975, 0.0, -0.05, 0.0], rtol=1e-15)
    assert r == pytest.approx(-0.9975, rel=1e-15) and not done


def test_point_mass_origin_is_optimal():
    spec = make_spec("PointMass2D")
    s2, obs, r, _ = step(spec, EnvState(np.zeros(4)), [0.0, 0.0])
    assert r == 0.0 and not obs.any()


def test_velocity_clip():
    spec = make_spec("PointMass2D")
    s = EnvState(np.array([0.0, 0.0, 1.99, -1.99]))
    _, obs, _, _ = step(spec, s, [1.0, -1.0])
    np.testing.assert_allclose(obs[2:], [2.0, -2.0])


def test_action_clipped_defensively():
    spec = make_spec("PointMass2D")
    s = EnvState(np.zeros(4))
    np.testing.assert_array_equal(step(spec, s, [5.0, -5.0])[1], step(spec, s, [1.0, -1.0])[1])


def test_pendulum_upright_reward_zero():
    spec = make_spec("PendulumSwingUp")
    _, _, r, _ = step(spec, EnvState(np.array([0.0, 0.0])), [0.0])
    assert r == 0.0


def test_pendulum_observation():
    spec = make_spec("PendulumSwingUp")
    obs = observe(spec, EnvState(np.array([math.pi / 2, 4.0])))
    np.testing.assert_allclose(obs, [0.0, 1.0, 0.5], atol=1e-15)


def test_pendulum_reward_formula():
    spec = make_spec("PendulumSwingUp")
    _, _, r, _ = step(spec, EnvState(np.array([3.0, -2.0])), [0.5])
    assert r == pytest.approx(-(3.0**2 + 0.1 * 4.0 + 0.001 * 1.0))


@given(st.floats(-50, 50))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


def test_wrap_pi_maps_to_pi():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_sparse_goal_terminates():
    spec = make_spec("SparseGoal2D")
    s2, _, r, done = step(spec, EnvState(np.array([0.05, 0.0, 0.0, 0.0])), [0.0, 0.0])
    assert r == 1.0 and done and s2.terminated and not s2.truncated and s2.reached_goal


def test_time_limit_is_truncation():
    spec = make_spec("PointMass2D", episode_len=3)
    s, _ = reset(spec, 0)
    for _ in range(3):
        s, _, _, done = step(spec, s, [0.0, 0.0])
    assert done and s.truncated and not s.terminated
    with pytest.raises(StateError):
        step(spec, s, [0.0, 0.0])


@pytest.mark.parametrize("name", NAMES)
def test_trajectory_determinism(name):
    spec = make_spec(name)
    actions = np.random.default_rng(0).uniform(-1, 1, (200, spec.action_dim))

    def roll():
        s, obs = reset(spec, 3)
        out = [obs]
        for a in actions:
            if s.done:
                break
            s, obs, r, _ = step(spec, s, a)
            out.append(np.append(obs, r))
        return out

    a, b = roll(), roll()
    assert all(np.array_equal(x, y) for x, y in zip(a, b)) and len(a) == len(b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(NAMES))
def test_reward_signs_and_bounds(seed, name):
    spec = make_spec(name)
    rng = np.random.default_rng(seed)
    s, _ = reset(spec, seed)
    while not s.done:
        s, obs, r, _ = step(spec, s, rng.uniform(-1, 1, spec.action_dim))
        if name == "PointMass2D":
            assert r <= 0
        elif name == "SparseGoal2D":
            assert r in (0.0, 1.0)
        else:
            assert np.all(np.abs(obs) <= 1.0)
        assert s.t <= spec.episode_len


def _energy_trace(theta0, steps):
    spec = make_spec("PendulumSwingUp", episode_len=steps)
    s = EnvState(np.array([theta0, 0.0]))
    out = [pendulum_energy(s)]
    for _ in range(steps):
        s, _, _, _ = step(spec, s, [0.0])
        out.append(pendulum_energy(s))
    return np.array(out)


@pytest.mark.parametrize("seed", range(5))
def test_pendulum_energy_drift_from_reset(seed):
    state, _ = reset(make_spec("PendulumSwingUp"), seed)
    e = _energy_trace(state.q[0], 200)
    assert np.abs(np.diff(e)).max() / abs(e[0]) <= 1e-2
    assert np.abs(e - e[0]).max() / abs(e[0]) <= 1e-2


def test_pendulum_energy_error_does_not_grow():
    # large swings: the semi-implicit scheme oscillates around the true energy but does not drift away
    e = _energy_trace(1.0, 4000)
    early = np.abs(e[:200] - e[0]).max()
    late = np.abs(e[3800:] - e[0]).max()
    assert late <= 1.5 * early


def test_env_wrapper():
    env = envs.Env("SparseGoal2D")
    with pytest.raises(StateError):
        env.step([0.0, 0.0])
    obs = env.reset(1)
    assert obs.shape == (4,)
    obs2, r, done = env.step([0.0, 0.0])
    assert r in (0.0, 1.0)
