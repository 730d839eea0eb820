"""Small deterministic continuous-control tasks with closed-form dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, StateError

GRAVITY = 10.0
PEND_MASS = 1.0
PEND_LENGTH = 1.0
MAX_SPEED_PEND = 8.0
MAX_TORQUE = 2.0
MAX_SPEED_MASS = 2.0
GOAL_RADIUS = 0.1


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    episode_len: int = 200
    dt: float = 0.05

    def __post_init__(self):
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")


ENV_SPECS = {
    "PointMass2D": EnvSpec("PointMass2D", 4, 2),
    "PendulumSwingUp": EnvSpec("PendulumSwingUp", 3, 1),
    "SparseGoal2D": EnvSpec("SparseGoal2D", 4, 2),
}


def make_spec(name: str, **overrides) -> EnvSpec:
    try:
        spec = ENV_SPECS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENV_SPECS)}") from None
    return replace(spec, **overrides) if overrides else spec


@dataclass
class EnvState:
    """Physical coordinates: ``(px, py, vx, vy)`` for the point masses, ``(theta, theta_dot)``
    for the pendulum with theta = 0 upright."""

    q: np.ndarray
    t: int = 0
    terminated: bool = False
    truncated: bool = False
    reached_goal: bool = field(default=False)

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


def wrap_angle(theta: float) -> float:
    """Map into (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2 * math.pi)
    if w <= 0:
        w += 2 * math.pi
    return w - math.pi


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    if spec.name == "PendulumSwingUp":
        th, thdot = state.q
        return np.array([math.cos(th), math.sin(th), thdot / MAX_SPEED_PEND])
    return state.q.copy()


def reset(spec: EnvSpec, seed) -> tuple[EnvState, np.ndarray]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if spec.name == "PendulumSwingUp":
        q = np.array([math.pi + rng.uniform(-0.05, 0.05), 0.0])
    elif spec.name in ("PointMass2D", "SparseGoal2D"):
        q = np.concatenate([rng.uniform(-1.0, 1.0, size=2), np.zeros(2)])
    else:
        raise ConfigError(f"unknown environment {spec.name!r}")
    state = EnvState(q)
    return state, observe(spec, state)


def _point_mass(spec: EnvSpec, q: np.ndarray, action: np.ndarray) -> np.ndarray:
    p, v = q[:2], q[2:]
    v = np.clip(v + action * spec.dt, -MAX_SPEED_MASS, MAX_SPEED_MASS)
    p = p + v * spec.dt
    return np.concatenate([p, v])


def _pendulum(spec: EnvSpec, q: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float]:
    th, thdot = q
    u = MAX_TORQUE * float(action[0])
    thddot = 3 * GRAVITY / (2 * PEND_LENGTH) * math.sin(th) + 3.0 / (PEND_MASS * PEND_LENGTH**2) * u
    thdot_new = min(max(thdot + thddot * spec.dt, -MAX_SPEED_PEND), MAX_SPEED_PEND)
    th_new = th + thdot_new * spec.dt
    cost = wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
    return np.array([th_new, thdot_new]), -cost


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, np.ndarray, float, bool]:
    if state.done:
        raise StateError("episode is over; call reset()")
    action = np.clip(np.asarray(action, dtype=np.float64).reshape(spec.action_dim), -1.0, 1.0)
    terminated = False
    if spec.name == "PendulumSwingUp":
        q, reward = _pendulum(spec, state.q, action)
        reached = False
    else:
        q = _point_mass(spec, state.q, action)
        dist = float(np.hypot(q[0], q[1]))
        reached = dist <= GOAL_RADIUS
        if spec.name == "SparseGoal2D":
            reward = 1.0 if reached else 0.0
            terminated = reached
        else:
            reward = -dist
    t = state.t + 1
    new = EnvState(q, t, terminated, (t >= spec.episode_len) and not terminated,
                   state.reached_goal or reached)
    return new, observe(spec, new), float(reward), new.done


def pendulum_energy(state: EnvState) -> float:
    """Rod pendulum energy per unit mass-length: (l^2/6) thdot^2 + (g l/2) cos(theta)."""
    th, thdot = state.q
    return PEND_LENGTH**2 / 6 * thdot**2 + GRAVITY * PEND_LENGTH / 2 * math.cos(th)


class Env:
    """Stateful convenience wrapper around :func:`reset` / :func:`step`."""

    def __init__(self, name: str, **overrides):
        self.spec = make_spec(name, **overrides)
        self.state: EnvState | None = None

    def reset(self, seed) -> np.ndarray:
        self.state, obs = reset(self.spec, seed)
        return obs

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.state is None:
            raise StateError("call reset() first")
        self.state, obs, reward, done = step(self.spec, self.state, action)
        return obs, reward, done
