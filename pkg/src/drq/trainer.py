"""Training loop, evaluation, metrics and checkpoints for one seeded run."""

from __future__ import annotations

import json
import math
import os
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import envs
from .agent import DRQAgent
from .config import AgentConfig, with_ablation
from .diffcore import load_arrays, save_arrays
from .errors import ConfigError, StateError
from .replay import FadedBuffer

RNG_STREAMS = ("init", "env", "explore", "buffer", "target", "eval")
CHECKPOINT_KIND = "drq-run"


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; the same (seed, name) always gives the same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))))


def confidence_interval(values) -> tuple[float, float | None]:
    """Mean and 95% normal half-width with the sample standard deviation (None for n = 1)."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no values")
    mean = float(x.mean())
    if x.size == 1:
        return mean, None
    return mean, float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def expected_update_counts(cfg: AgentConfig, t: int) -> dict[str, int]:
    """Gradient-step totals after environment step ``t`` under the scheduled control flow."""
    learn = max(0, t - cfg.exploration_steps)
    first = cfg.exploration_steps // cfg.target_update_freq + 1
    bursts = max(0, t // cfg.target_update_freq - first + 1)
    return {
        "critic_steps": learn * cfg.replay_ratio,
        "actor_steps": learn * cfg.replay_ratio,
        "encoder_steps": bursts * cfg.target_update_freq,
        "target_syncs": bursts,
    }


@dataclass
class Window:
    """Running sums between two log records."""

    sums: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def add(self, key: str, value: float) -> None:
        self.sums[key] = self.sums.get(key, 0.0) + float(value)
        self.counts[key] = self.counts.get(key, 0) + 1

    def mean(self, key: str):
        n = self.counts.get(key, 0)
        return self.sums[key] / n if n else None


@dataclass
class Counters:
    env_steps: int = 0
    critic_steps: int = 0
    actor_steps: int = 0
    encoder_steps: int = 0
    target_syncs: int = 0
    priority_updates: int = 0
    episodes: int = 0


class Trainer:
    def __init__(self, cfg: AgentConfig, out_dir=None, dtype=torch.float32):
        cfg.validate()
        self.cfg = cfg
        self.spec = envs.make_spec(cfg.env)
        self.dtype = dtype
        self.rngs = {name: substream(cfg.seed, name) for name in RNG_STREAMS}
        self.agent = DRQAgent(cfg, self.spec.state_dim, self.spec.action_dim, self.rngs["init"], dtype)
        self.buffer = FadedBuffer(cfg.buffer_size, self.spec.state_dim, self.spec.action_dim,
                                  cfg.decay_eps, cfg.eps_low, cfg.prioritized)
        self.counters = Counters()
        self.window = Window()
        self.records: list[dict] = []
        self.last_eval: dict | None = None
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        self.env_state, self.obs = envs.reset(self.spec, self.rngs["env"])
        self.episode_return = 0.0

    @property
    def t(self) -> int:
        return self.counters.env_steps

    # -- one environment step ------------------------------------------------

    def step(self) -> None:
        cfg = self.cfg
        c = self.counters
        t = c.env_steps + 1
        if t <= cfg.exploration_steps:
            action = self.rngs["explore"].uniform(-1.0, 1.0, size=self.spec.action_dim)
        else:
            action = self.agent.act(self.obs, True, self.rngs["explore"])
        state, next_obs, reward, done = envs.step(self.spec, self.env_state, action)
        self.buffer.push(self.obs, action, reward, next_obs, done, terminal=state.terminated)
        self.episode_return += reward
        c.env_steps = t
        if done:
            self.window.add("episode_return", self.episode_return)
            c.episodes += 1
            self.episode_return = 0.0
            self.env_state, self.obs = envs.reset(self.spec, self.rngs["env"])
        else:
            self.env_state, self.obs = state, next_obs

        if t > cfg.exploration_steps:
            if t % cfg.target_update_freq == 0:
                self.agent.hard_update_targets()
                c.target_syncs += 1
                for _ in range(cfg.target_update_freq):
                    seq = self.buffer.sample_sequence(cfg.batch_size, cfg.enc_horizon, self.rngs["buffer"])
                    for k, v in self.agent.update_encoder(seq).items():
                        self.window.add(k, v)
                    c.encoder_steps += 1
            for _ in range(cfg.replay_ratio):
                seq = self.buffer.sample_sequence(cfg.batch_size, cfg.q_horizon, self.rngs["buffer"])
                loss, td = self.agent.update_critic(seq, self.rngs["target"])
                c.critic_steps += 1
                self.window.add("critic_loss", loss)
                self.window.add("actor_loss", self.agent.update_actor(seq.states[:, 0]))
                c.actor_steps += 1
                self.buffer.update_priorities(seq.ids, td, cfg.alpha)
                c.priority_updates += len(seq.ids)
                self.window.add("mean_abs_td", float(np.mean(td)))

        if t % cfg.eval_every == 0:
            self.last_eval = self.evaluate(cfg.eval_episodes)
        if t % cfg.log_every == 0 or t % cfg.eval_every == 0 or t == cfg.total_steps:
            self._log(t)

    def _log(self, t: int) -> None:
        w = self.window
        ev = self.last_eval if self.last_eval is not None and self.last_eval["step"] == t else None
        rec = {
            "step": t,
            "episode_return": w.mean("episode_return"),
            "eval_return_mean": ev["mean"] if ev else None,
            "eval_return_ci": ev["ci"] if ev else None,
            "eval_success_rate": ev["success_rate"] if ev else None,
            "critic_loss": w.mean("critic_loss"),
            "actor_loss": w.mean("actor_loss"),
            "encoder_loss": w.mean("encoder_loss"),
            "reward_loss": w.mean("reward_loss"),
            "dynamics_loss": w.mean("dynamics_loss"),
            "infonce_loss": w.mean("infonce_loss"),
            "mean_abs_td": w.mean("mean_abs_td"),
            "buffer_size": len(self.buffer),
            "critic_steps": self.counters.critic_steps,
            "actor_steps": self.counters.actor_steps,
            "encoder_steps": self.counters.encoder_steps,
            "target_syncs": self.counters.target_syncs,
            "priority_updates": self.counters.priority_updates,
        }
        self.records.append(rec)
        self.window = Window()
        if self.out_dir is not None:
            with open(self.out_dir / "metrics.jsonl", "a") as fh:
                fh.write(json.dumps(rec) + "\n")

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, episodes: int, rng: np.random.Generator | None = None) -> dict:
        """Greedy rollouts on a fresh environment instance."""
        rng = self.rngs["eval"] if rng is None else rng
        returns, successes = [], []
        for _ in range(episodes):
            state, obs = envs.reset(self.spec, rng)
            total = 0.0
            while not state.done:
                action = self.agent.act(obs, False, rng)
                state, obs, reward, _ = envs.step(self.spec, state, action)
                total += reward
            returns.append(total)
            successes.append(state.reached_goal)
        mean, ci = confidence_interval(returns)
        return {"step": self.t, "mean": mean, "ci": ci, "returns": returns,
                "success_rate": float(np.mean(successes))}

    # -- run -------------------------------------------------------------------

    def run(self, steps: int | None = None) -> list[dict]:
        """Advance to ``total_steps`` (or by ``steps``), returning all records so far."""
        end = self.cfg.total_steps if steps is None else min(self.cfg.total_steps, self.t + steps)
        while self.t < end:
            self.step()
        return self.records

    def summary(self) -> dict:
        evals = [r for r in self.records if r["eval_return_mean"] is not None]
        final = evals[-1] if evals else None
        return {
            "config": self.cfg.to_dict(),
            "steps": self.t,
            "episodes": self.counters.episodes,
            "counters": vars(self.counters).copy(),
            "final_eval_return_mean": final["eval_return_mean"] if final else None,
            "final_eval_return_ci": final["eval_return_ci"] if final else None,
            "final_eval_success_rate": final["eval_success_rate"] if final else None,
            "best_eval_return_mean": max((r["eval_return_mean"] for r in evals), default=None),
        }

    # -- checkpoints -------------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        arrays = self.agent.state_arrays()
        arrays.update(self.buffer.state_arrays("buffer/"))
        arrays["env/q"] = self.env_state.q.copy()
        arrays["env/obs"] = np.asarray(self.obs).copy()
        meta = {
            "kind": CHECKPOINT_KIND,
            "config": self.cfg.to_dict(),
            "dtype": str(self.dtype).replace("torch.", ""),
            "state_dim": self.spec.state_dim,
            "action_dim": self.spec.action_dim,
            "counters": vars(self.counters),
            "rngs": {k: g.bit_generator.state for k, g in self.rngs.items()},
            "env": {"t": self.env_state.t, "terminated": self.env_state.terminated,
                    "truncated": self.env_state.truncated, "reached_goal": self.env_state.reached_goal},
            "episode_return": self.episode_return,
            "window": {"sums": self.window.sums, "counts": self.window.counts},
            "records": self.records,
            "last_eval": self.last_eval,
        }
        save_arrays(path, arrays, meta)

    @classmethod
    def from_checkpoint(cls, path, out_dir=None, cfg_overrides: dict | None = None) -> Trainer:
        arrays, meta = load_arrays(path)
        if meta.get("kind") != CHECKPOINT_KIND:
            raise StateError(f"{path}: not a training checkpoint")
        data = dict(meta["config"])
        data["adam_betas"] = tuple(data["adam_betas"])
        cfg = AgentConfig(**data)
        if cfg_overrides:
            cfg = cfg.replace(**cfg_overrides)
        dtype = getattr(torch, meta["dtype"])
        tr = cls(cfg, out_dir=out_dir, dtype=dtype)
        tr.agent.load_state_arrays(arrays)
        tr.buffer.load_state_arrays(arrays, "buffer/")
        tr.counters = Counters(**meta["counters"])
        for k, st in meta["rngs"].items():
            tr.rngs[k].bit_generator.state = st
        e = meta["env"]
        tr.env_state = envs.EnvState(arrays["env/q"].copy(), e["t"], e["terminated"], e["truncated"],
                                     e["reached_goal"])
        tr.obs = arrays["env/obs"].copy()
        tr.episode_return = meta["episode_return"]
        tr.window = Window(dict(meta["window"]["sums"]), dict(meta["window"]["counts"]))
        tr.records = list(meta["records"])
        tr.last_eval = meta["last_eval"]
        return tr


def audit_schedule(cfg: AgentConfig, records: list[dict]) -> list[str]:
    """Compare logged counters against the scheduled totals; returns mismatch messages."""
    problems = []
    for rec in records:
        want = expected_update_counts(cfg, rec["step"])
        for key, value in want.items():
            if rec[key] != value:
                problems.append(f"step {rec['step']}: {key}={rec[key]}, expected {value}")
        if rec["priority_updates"] != rec["critic_steps"] * cfg.batch_size:
            problems.append(f"step {rec['step']}: priority updates do not cover every critic batch")
    return problems


def train(cfg: AgentConfig, out_dir=None, dtype=torch.float32) -> tuple[list[dict], dict]:
    start = time.perf_counter()
    tr = Trainer(cfg, out_dir, dtype)
    if tr.out_dir is not None:
        (tr.out_dir / "metrics.jsonl").write_text("")
        (tr.out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    tr.run()
    summary = tr.summary()
    summary["wall_seconds"] = time.perf_counter() - start
    if tr.out_dir is not None:
        tr.save_checkpoint(tr.out_dir / "checkpoint.npz")
        (tr.out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return tr.records, summary


def run_ablation(cfg: AgentConfig, variant: str, out_dir=None, dtype=torch.float32) -> tuple[list[dict], dict]:
    return train(with_ablation(cfg, variant), out_dir, dtype)


def evaluate(checkpoint, episodes: int, seed: int, env: str | None = None) -> dict:
    tr = Trainer.from_checkpoint(checkpoint)
    if env is not None and env != tr.cfg.env:
        spec = envs.make_spec(env)
        if (spec.state_dim, spec.action_dim) != (tr.spec.state_dim, tr.spec.action_dim):
            raise ConfigError(
                f"checkpoint expects state/action dims {(tr.spec.state_dim, tr.spec.action_dim)}, "
                f"{env} has {(spec.state_dim, spec.action_dim)}"
            )
        tr.spec = spec
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    result = tr.evaluate(episodes, substream(seed, "eval"))
    result["env"] = tr.spec.name
    result["checkpoint"] = os.fspath(checkpoint)
    return result
