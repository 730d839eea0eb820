"""Faded prioritized replay.

Each stored transition ``i`` (age 0 = newest) is drawn with probability
proportional to ``max(|delta_i|^alpha, 1) * max(eps_low, (1 - eps)^age_i)``.

Two sum trees keep sampling at O(log n) without touching every weight on each
push. Young entries sit in a *decaying* tree whose leaves hold
``priority * (1 - eps)^-(insert_id - offset)``; the shared factor
``(1 - eps)^(newest_id - offset)`` is applied at query time. Once an entry's
decay weight has dropped to ``eps_low`` it moves (lazily, oldest first) to a
*floored* tree holding ``priority * eps_low``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, ShapeError, StateError


class SumTree:
    """Array-backed binary sum tree; the root is node 1, leaves start at ``self.base``."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.base = 1 << max(0, math.ceil(math.log2(max(self.capacity, 1))))
        self.nodes = np.zeros(2 * self.base)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    @property
    def leaves(self) -> np.ndarray:
        return self.nodes[self.base : self.base + self.capacity]

    def set(self, idx, values) -> None:
        if np.ndim(idx) == 0:
            nodes = self.nodes
            pos = int(idx) + self.base
            nodes[pos] = values
            pos >>= 1
            while pos:
                nodes[pos] = nodes[2 * pos] + nodes[2 * pos + 1]
                pos >>= 1
            return
        pos = np.asarray(idx, dtype=np.int64) + self.base
        self.nodes[pos] = values
        pos = np.unique(pos)
        while pos.size and pos[0] > 1:
            pos = np.unique(pos >> 1)
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1]

    def rebuild(self) -> None:
        width = self.base
        while width > 1:
            lo = width // 2
            self.nodes[lo:width] = self.nodes[width : 2 * width : 2] + self.nodes[width + 1 : 2 * width : 2]
            width = lo

    def find(self, u: np.ndarray) -> np.ndarray:
        """Leaf index for each prefix-sum query ``u`` in ``[0, total)``."""
        u = np.array(u, dtype=np.float64)
        pos = np.ones(u.shape, dtype=np.int64)
        for _ in range(self.base.bit_length() - 1):
            left = self.nodes[2 * pos]
            right = self.nodes[2 * pos + 1]
            go_right = ((u >= left) & (right > 0)) | (left <= 0)
            u = np.where(go_right, u - left, u)
            pos = 2 * pos + go_right
        return pos - self.base


@dataclass
class SampledBatch:
    ids: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    terminals: np.ndarray


@dataclass
class SequenceBatch:
    """Contiguous sub-trajectories; step ``k`` is valid while ``mask[:, k]``.

    ``states[:, 0]`` is the start state and ``states[:, k + 1]`` the state after
    action ``k``. ``lengths`` counts valid steps per row.
    """

    ids: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray


def decay_weights(ages, eps: float, eps_low: float) -> np.ndarray:
    """``max(eps_low, (1 - eps)^age)`` with scalar libm ``pow`` (np.power can differ by an ulp)."""
    keep = 1.0 - eps
    ages = np.asarray(ages, dtype=np.int64)
    w = np.fromiter((keep ** int(a) for a in ages.ravel()), dtype=np.float64, count=ages.size)
    return np.maximum(eps_low, w).reshape(ages.shape)


def floor_age(eps: float, eps_low: float) -> float:
    """Smallest age whose decay weight is at or below ``eps_low`` (inf if never)."""
    if eps <= 0 or eps_low <= 0:
        return math.inf
    if eps_low >= 1:
        return 0
    if eps >= 1:
        return 1
    age = max(0, math.ceil(math.log(eps_low) / math.log1p(-eps)))
    while age > 0 and (1.0 - eps) ** (age - 1) <= eps_low:
        age -= 1
    while (1.0 - eps) ** age > eps_low:
        age += 1
    return age


class FadedBuffer:
    def __init__(
        self,
        capacity: int,
        state_dim: int,
        action_dim: int,
        eps: float = 1e-4,
        eps_low: float = 0.1,
        prioritized: bool = True,
        rebase_limit: float = 1e100,
    ):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if not 0 <= eps < 1:
            raise ConfigError(f"decay rate must lie in [0, 1), got {eps}")
        if eps_low < 0:
            raise ConfigError(f"eps_low must be >= 0, got {eps_low}")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.eps = float(eps)
        self.eps_low = float(eps_low)
        self.prioritized = prioritized
        self.rebase_limit = rebase_limit
        self.age_floor = floor_age(self.eps, self.eps_low)
        self._log_keep = math.log1p(-self.eps)

        self.states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.insert_ids = np.full(capacity, -1, dtype=np.int64)
        self.priorities = np.ones(capacity)
        self.floored = np.zeros(capacity, dtype=bool)

        self.decaying = SumTree(capacity)
        self.floor = SumTree(capacity)
        self.global_step = 0  # ids handed out so far; newest id is global_step - 1
        self.offset = 0
        self.max_priority = 1.0
        self._migrate_next = 0

    # -- bookkeeping ---------------------------------------------------------

    def __len__(self) -> int:
        return min(self.global_step, self.capacity)

    @property
    def oldest_id(self) -> int:
        return self.global_step - len(self)

    def _decaying_leaf(self, priority, ids):
        return priority * np.exp((np.asarray(ids, dtype=np.float64) - self.offset) * -self._log_keep)

    def _scale(self) -> float:
        return math.exp((self.global_step - 1 - self.offset) * self._log_keep)

    def _migrate(self) -> None:
        if math.isinf(self.age_floor):
            return
        last = self.global_step - 1 - self.age_floor
        start = max(self._migrate_next, self.oldest_id)
        if last < start:
            return
        if last == start:
            slots = start % self.capacity
        else:
            slots = np.arange(start, last + 1) % self.capacity
        self.floored[slots] = True
        self.decaying.set(slots, 0.0)
        self.floor.set(slots, self.priorities[slots] * self.eps_low)
        self._migrate_next = last + 1

    def _maybe_rebase(self) -> None:
        if -(self.global_step - 1 - self.offset) * self._log_keep <= math.log(self.rebase_limit):
            return
        self.rebase()

    def rebase(self) -> None:
        """Re-anchor decaying leaves at the newest id; probabilities are unchanged."""
        self.offset = max(self.global_step - 1, 0)
        live = self.live_slots()
        young = live[~self.floored[live]]
        self.decaying.nodes[:] = 0.0
        self.decaying.nodes[self.decaying.base + young] = self._decaying_leaf(
            self.priorities[young], self.insert_ids[young]
        )
        self.decaying.rebuild()

    def live_slots(self) -> np.ndarray:
        ids = np.arange(self.oldest_id, self.global_step)
        return ids % self.capacity

    # -- public API ----------------------------------------------------------

    def push(self, state, action, reward, next_state, done, terminal=None) -> int:
        state = np.asarray(state, dtype=np.float32)
        next_state = np.asarray(next_state, dtype=np.float32)
        action = np.asarray(action, dtype=np.float32)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ShapeError(f"state must have shape ({self.state_dim},)")
        if action.shape != (self.action_dim,):
            raise ShapeError(f"action must have shape ({self.action_dim},)")
        if not np.isfinite(reward):
            raise InputError(f"non-finite reward {reward}")
        new_id = self.global_step
        slot = new_id % self.capacity
        if self.insert_ids[slot] >= 0:
            self.decaying.set(slot, 0.0)
            self.floor.set(slot, 0.0)
        self.states[slot] = state
        self.actions[slot] = np.clip(action, -1.0, 1.0)
        self.rewards[slot] = reward
        self.next_states[slot] = next_state
        self.dones[slot] = bool(done)
        self.terminals[slot] = bool(done if terminal is None else terminal)
        self.insert_ids[slot] = new_id
        self.priorities[slot] = self.max_priority
        self.floored[slot] = False
        self.global_step += 1
        self._maybe_rebase()
        self.decaying.set(slot, self._decaying_leaf(self.max_priority, new_id))
        self._migrate()
        return new_id

    def _mass(self) -> tuple[float, float]:
        if len(self) == 0:
            raise StateError("cannot sample from an empty buffer")
        return self._scale() * self.decaying.total, self.floor.total

    def sample_slots(self, n: int, rng: np.random.Generator) -> np.ndarray:
        dec_mass, floor_mass = self._mass()
        u = rng.random(n) * (dec_mass + floor_mass)
        in_dec = u < dec_mass
        if floor_mass <= 0:
            in_dec[:] = True
        elif dec_mass <= 0:
            in_dec[:] = False
        slots = np.empty(n, dtype=np.int64)
        if in_dec.any():
            slots[in_dec] = self.decaying.find(u[in_dec] / self._scale())
        if (~in_dec).any():
            slots[~in_dec] = self.floor.find(u[~in_dec] - dec_mass)
        return slots

    def sample_ids(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.insert_ids[self.sample_slots(n, rng)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> SampledBatch:
        slots = self.sample_slots(batch_size, rng)
        return SampledBatch(
            ids=self.insert_ids[slots],
            states=self.states[slots],
            actions=self.actions[slots],
            rewards=self.rewards[slots],
            next_states=self.next_states[slots],
            dones=self.dones[slots],
            terminals=self.terminals[slots],
        )

    def sample_sequence(self, batch_size: int, horizon: int, rng: np.random.Generator) -> SequenceBatch:
        """Start ids drawn by the faded distribution; rows truncate at episode ends and the write head."""
        if horizon < 1:
            raise ConfigError("horizon must be >= 1")
        start_slots = self.sample_slots(batch_size, rng)
        return self.gather_sequence(self.insert_ids[start_slots], horizon)

    def gather_sequence(self, start_ids: np.ndarray, horizon: int) -> SequenceBatch:
        start_ids = np.asarray(start_ids, dtype=np.int64)
        newest = self.global_step - 1
        if len(self) == 0 or (start_ids < self.oldest_id).any() or (start_ids > newest).any():
            raise StateError("sequence start is not a live entry")
        steps = start_ids[:, None] + np.arange(horizon)[None, :]
        exists = steps <= newest
        slots = np.minimum(steps, newest) % self.capacity
        ended = self.dones[slots] & exists
        # step k is valid if it exists and no earlier step ended the episode
        ended_before = np.zeros_like(ended)
        ended_before[:, 1:] = np.cumsum(ended, axis=1)[:, :-1] > 0
        mask = exists & ~ended_before
        b = len(start_ids)
        states = np.empty((b, horizon + 1, self.state_dim), dtype=np.float32)
        states[:, 0] = self.states[slots[:, 0]]
        states[:, 1:] = self.next_states[slots]
        return SequenceBatch(
            ids=start_ids,
            states=states,
            actions=self.actions[slots],
            rewards=np.where(mask, self.rewards[slots], 0.0).astype(np.float32),
            terminals=self.terminals[slots] & mask,
            mask=mask,
            lengths=mask.sum(1),
        )

    def update_priorities(self, ids, td_errors, alpha: float) -> None:
        if alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {alpha}")
        ids = np.asarray(ids, dtype=np.int64)
        delta = np.abs(np.asarray(td_errors, dtype=np.float64))
        if ids.shape != delta.shape:
            raise ShapeError("ids and td_errors must have the same shape")
        slots = ids % self.capacity
        live = self.insert_ids[slots] == ids
        slots, delta = slots[live], delta[live]
        if slots.size == 0:
            return
        if self.prioritized:
            # scalar pow, matching decay_weights
            prio = np.fromiter((max(d**alpha, 1.0) for d in delta.tolist()), dtype=np.float64, count=delta.size)
        else:
            prio = np.ones_like(delta)
        # keep the last write for duplicated slots
        _, last = np.unique(slots[::-1], return_index=True)
        keep = len(slots) - 1 - last
        slots, prio = slots[keep], prio[keep]
        self.priorities[slots] = prio
        self.max_priority = max(self.max_priority, float(prio.max()))
        fl = self.floored[slots]
        if fl.any():
            self.floor.set(slots[fl], prio[fl] * self.eps_low)
        if (~fl).any():
            self.decaying.set(slots[~fl], self._decaying_leaf(prio[~fl], self.insert_ids[slots[~fl]]))

    def ages(self, slots=None) -> np.ndarray:
        slots = self.live_slots() if slots is None else slots
        return self.global_step - 1 - self.insert_ids[slots]

    def exact_distribution(self) -> tuple[np.ndarray, np.ndarray]:
        """Direct O(n) evaluation of the sampling law for every live entry.

        Returns ``(ids, probs)`` ordered oldest to newest.
        """
        if len(self) == 0:
            raise StateError("empty buffer")
        slots = self.live_slots()
        weights = self.priorities[slots] * decay_weights(self.ages(slots), self.eps, self.eps_low)
        return self.insert_ids[slots], weights / math.fsum(weights)

    def dump_csv(self, path) -> None:
        ids, probs = self.exact_distribution()
        slots = ids % self.capacity
        ages = self.ages(slots)
        decay = decay_weights(ages, self.eps, self.eps_low)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "age", "priority", "decay_weight", "exact_probability"])
            for row in zip(ids, ages, self.priorities[slots], decay, probs):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])

    # -- checkpointing -------------------------------------------------------

    _ARRAYS = ("states", "actions", "rewards", "next_states", "dones", "terminals",
               "insert_ids", "priorities", "floored")

    def state_arrays(self, prefix: str = "buffer/") -> dict[str, np.ndarray]:
        out = {prefix + k: getattr(self, k).copy() for k in self._ARRAYS}
        out[prefix + "decaying"] = self.decaying.nodes.copy()
        out[prefix + "floor"] = self.floor.nodes.copy()
        out[prefix + "scalars"] = np.array(
            [self.global_step, self.offset, self._migrate_next], dtype=np.int64
        )
        out[prefix + "max_priority"] = np.array(self.max_priority)
        return out

    def load_state_arrays(self, arrays, prefix: str = "buffer/") -> None:
        for k in self._ARRAYS:
            src = arrays[prefix + k]
            if src.shape != getattr(self, k).shape:
                raise ShapeError(f"buffer field {k}: checkpoint {src.shape} vs {getattr(self, k).shape}")
            getattr(self, k)[...] = src
        self.decaying.nodes[:] = arrays[prefix + "decaying"]
        self.floor.nodes[:] = arrays[prefix + "floor"]
        self.global_step, self.offset, self._migrate_next = (int(x) for x in arrays[prefix + "scalars"])
        self.max_priority = float(arrays[prefix + "max_priority"])
