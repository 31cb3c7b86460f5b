"""Prioritized experience replay with proportional sampling.

Transitions are stored in a ring buffer (oldest-first eviction) alongside
priorities p_i = |td_error| + eps_priority. Sampling draws index i with
probability p_i^beta / sum_j p_j^beta, with replacement, using a binary
sum tree so adds, priority updates and draws are O(log capacity). beta = 0
degrades to uniform sampling; every stored entry keeps a nonzero
probability because priorities are floored at eps_priority.

No importance-sampling weight correction is applied: the training loss
weights all sampled transitions equally.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Experience:
    """One transition: (state, action index, reward, next state, terminal)."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class SumTree:
    """Array-backed binary tree whose internal nodes hold subtree sums."""

    def __init__(self, capacity: int):
        self.capacity = 1
        while self.capacity < capacity:
            self.capacity *= 2
        self.nodes = np.zeros(2 * self.capacity - 1)
        self._leaf0 = self.capacity - 1

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def set(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Assign leaf values and repair sums level by level.

        Duplicate indices resolve last-write-wins (numpy assignment order).
        """
        idx = np.asarray(indices, dtype=int) + self._leaf0
        self.nodes[idx] = values
        parents = np.unique((idx - 1) // 2)
        while parents.size:
            self.nodes[parents] = self.nodes[2 * parents + 1] + self.nodes[2 * parents + 2]
            parents = np.unique((parents[parents > 0] - 1) // 2)

    def set_one(self, index: int, value: float) -> None:
        """Single-leaf assignment with an exact parent-sum walk."""
        nodes = self.nodes
        idx = index + self._leaf0
        nodes[idx] = value
        while idx:
            idx = (idx - 1) >> 1
            left = 2 * idx + 1
            nodes[idx] = nodes[left] + nodes[left + 1]

    def find(self, cumsums: np.ndarray) -> np.ndarray:
        """Leaf indices whose cumulative-sum interval contains each value."""
        idx = np.zeros(len(cumsums), dtype=int)
        rest = np.asarray(cumsums, dtype=float).copy()
        while idx[0] < self._leaf0:  # complete tree: all leaves at one depth
            left = 2 * idx + 1
            left_sum = self.nodes[left]
            go_left = rest < left_sum
            idx = np.where(go_left, left, left + 1)
            rest = np.where(go_left, rest, rest - left_sum)
        return idx - self._leaf0


class ReplayBuffer:
    """Ring buffer of transitions with proportional prioritized sampling."""

    def __init__(self, capacity: int, beta: float = 0.7, eps_priority: float = 0.01,
                 p_init: float | None = None, state_dim: int | None = None,
                 n_actions: int = 81):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {beta}")
        if eps_priority <= 0.0:
            raise ValueError(f"eps_priority must be > 0, got {eps_priority}")
        if p_init is not None and p_init <= 0.0:
            raise ValueError(f"p_init must be > 0, got {p_init}")
        self.capacity = capacity
        self.beta = beta
        self.eps_priority = eps_priority
        self.p_init = p_init  # None: track the running max priority, start 1.0
        self.state_dim = state_dim
        self.n_actions = n_actions
        self._entries: list[Experience] = []
        self._priorities = np.zeros(capacity)
        self._tree = SumTree(capacity)
        self._write = 0
        self._max_priority = 1.0

    def __len__(self) -> int:
        return len(self._entries)

    def priority(self, index: int) -> float:
        return float(self._priorities[index])

    def _validate(self, exp: Experience) -> None:
        state = np.asarray(exp.state, dtype=float)
        nxt = np.asarray(exp.next_state, dtype=float)
        if self.state_dim is None:
            self.state_dim = state.shape[-1] if state.ndim else 1
        if state.shape != (self.state_dim,) or nxt.shape != (self.state_dim,):
            raise ValueError(
                f"state shapes {state.shape}/{nxt.shape} do not match dimension {self.state_dim}"
            )
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(nxt)) and np.isfinite(exp.reward)):
            raise ValueError("experience contains non-finite values")
        if not 0 <= exp.action < self.n_actions:
            raise ValueError(f"action {exp.action} outside [0, {self.n_actions - 1}]")

    def add(self, exp: Experience) -> None:
        """Store with the fresh-entry priority, evicting the oldest at capacity."""
        self._validate(exp)
        priority = self._max_priority if self.p_init is None else self.p_init
        if len(self._entries) < self.capacity:
            self._entries.append(exp)
        else:
            self._entries[self._write] = exp
        self._priorities[self._write] = priority
        self._tree.set_one(self._write, priority ** self.beta)
        self._max_priority = max(self._max_priority, priority)
        self._write = (self._write + 1) % self.capacity

    def _set_priorities(self, indices: np.ndarray, priorities: np.ndarray) -> None:
        self._priorities[indices] = priorities
        self._tree.set(indices, priorities ** self.beta)
        self._max_priority = max(self._max_priority, float(priorities.max()))

    def sample_indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """Draw m indices with replacement, index i with probability p_i^beta / sum."""
        if m < 1:
            raise ValueError(f"sample size must be >= 1, got {m}")
        if not self._entries:
            raise RuntimeError("cannot sample from an empty buffer")
        u = rng.random(m) * self._tree.total
        idx = self._tree.find(u)
        # Guard the float edge u == total, which would land one leaf past the end.
        return np.minimum(idx, len(self._entries) - 1)

    def sample(self, m: int, rng: np.random.Generator) -> list[tuple[int, Experience]]:
        return [(int(i), self._entries[i]) for i in self.sample_indices(m, rng)]

    def update_priorities(self, indices, td_errors) -> None:
        """Set priority |td_error| + eps_priority at each index (last write wins)."""
        idx = np.asarray(indices, dtype=int)
        errs = np.asarray(td_errors, dtype=float)
        if idx.shape != errs.shape:
            raise ValueError(f"{idx.size} indices but {errs.size} errors")
        if idx.size == 0:
            return
        if idx.min() < 0 or idx.max() >= len(self._entries):
            raise ValueError(f"index outside stored range [0, {len(self._entries) - 1}]")
        self._set_priorities(idx, np.abs(errs) + self.eps_priority)

    def dump_csv(self, path: str) -> None:
        """Write one row per stored transition: state, action, reward, priority."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = self.state_dim or 0
            writer.writerow([f"s{i}" for i in range(dim)] + ["action", "reward", "terminal", "priority"])
            for i, exp in enumerate(self._entries):
                writer.writerow(list(np.asarray(exp.state, dtype=float))
                                + [exp.action, exp.reward, int(exp.terminal), self._priorities[i]])
