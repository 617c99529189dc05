"""Episode replay memory with goal-specific index buffers.

Sampling first picks a buffer uniformly among the non-empty goal buffers and
the main buffer, then an episode uniformly inside it, then a timestep. This
keeps transitions from rarely reached goals in the replayed batches.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from le2.env import ACTION_DIM, OBS_DIM

MAIN_BUFFER = -1


@dataclass
class EpisodeRecord:
    episode_id: int
    observations: np.ndarray  # (T+1, 17)
    actions: np.ndarray  # (T, 4)
    targeted_goal: Optional[int] = None
    achieved_goal_ids: frozenset = field(default_factory=frozenset)


@dataclass
class TransitionBatch:
    obs: np.ndarray
    obs0: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    t: np.ndarray
    episode_ids: np.ndarray
    slots: np.ndarray
    source_buffer: np.ndarray  # goal id, or MAIN_BUFFER

    def __len__(self) -> int:
        return len(self.t)


class _IndexBuffer:
    """FIFO of memory slots backed by a growable int array."""

    def __init__(self):
        self._arr = np.empty(64, dtype=np.int64)
        self._head = 0
        self._tail = 0

    def __len__(self) -> int:
        return self._tail - self._head

    def append(self, slot: int) -> None:
        if self._tail == len(self._arr):
            live = self.values.copy()
            if len(live) * 2 > len(self._arr):
                self._arr = np.empty(len(self._arr) * 2, dtype=np.int64)
            self._arr[: len(live)] = live
            self._head, self._tail = 0, len(live)
        self._arr[self._tail] = slot
        self._tail += 1

    def popleft(self) -> int:
        slot = int(self._arr[self._head])
        self._head += 1
        return slot

    @property
    def values(self) -> np.ndarray:
        return self._arr[self._head: self._tail]


class EpisodeMemory:
    def __init__(self, episode_length: int, capacity: int = 10_000, max_goals: int = 51):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.T = int(episode_length)
        self.capacity = int(capacity)
        self.max_goals = int(max_goals)
        self.observations = np.zeros((capacity, self.T + 1, OBS_DIM))
        self.actions = np.zeros((capacity, self.T, ACTION_DIM))
        self.episode_ids = np.full(capacity, -1, dtype=np.int64)
        self.targeted = np.full(capacity, -1, dtype=np.int64)
        self.achieved: list[frozenset] = [frozenset()] * capacity
        # -1 unknown, else 0/1 predicted reward of (slot, t, goal) under the current model
        self.reward_cache = np.full((capacity, self.T, max_goals), -1, dtype=np.int8)
        self._buffers: dict[int, _IndexBuffer] = {}
        self._slot_of: dict[int, int] = {}
        self._next = 0
        self.size = 0
        self.lifetime_counts: Counter = Counter()

    def __len__(self) -> int:
        return self.size

    def store_episode(self, record: EpisodeRecord) -> None:
        obs = np.asarray(record.observations, dtype=np.float64)
        act = np.asarray(record.actions, dtype=np.float64)
        if obs.shape != (self.T + 1, OBS_DIM) or act.shape != (self.T, ACTION_DIM):
            raise ValueError(
                f"episode arrays must be ({self.T + 1}, {OBS_DIM}) and ({self.T}, {ACTION_DIM}), "
                f"got {obs.shape} and {act.shape}"
            )
        slot = self._next
        if self.size == self.capacity:
            self._evict(slot)
        achieved = frozenset(int(g) for g in record.achieved_goal_ids)
        self.observations[slot] = obs
        self.actions[slot] = act
        self.episode_ids[slot] = record.episode_id
        self.targeted[slot] = -1 if record.targeted_goal is None else record.targeted_goal
        self.achieved[slot] = achieved
        self.reward_cache[slot] = -1
        self._slot_of[int(record.episode_id)] = slot
        for g in sorted(achieved):
            self._buffers.setdefault(g, _IndexBuffer()).append(slot)
            self.lifetime_counts[g] += 1
        self._next = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _evict(self, slot: int) -> None:
        for g in self.achieved[slot]:
            popped = self._buffers[g].popleft()
            assert popped == slot, "index buffers out of FIFO order"
        self._slot_of.pop(int(self.episode_ids[slot]), None)
        self.achieved[slot] = frozenset()

    def goal_buffer(self, goal_id: int) -> list[int]:
        """Episode ids in which ``goal_id`` was achieved, oldest first."""
        buf = self._buffers.get(goal_id)
        return [] if buf is None else self.episode_ids[buf.values].tolist()

    def stored_episode_ids(self) -> list[int]:
        return sorted(self._slot_of)

    def episode(self, episode_id: int) -> EpisodeRecord:
        slot = self._slot_of[episode_id]
        tg = int(self.targeted[slot])
        return EpisodeRecord(
            int(episode_id), self.observations[slot].copy(), self.actions[slot].copy(),
            None if tg < 0 else tg, self.achieved[slot],
        )

    def reward_counts(self) -> dict[int, int]:
        """Lifetime number of episodes achieving each goal; never decreases on eviction."""
        return {g: c for g, c in sorted(self.lifetime_counts.items()) if c > 0}

    def sample_transitions(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty memory")
        goal_ids = [g for g in sorted(self._buffers) if len(self._buffers[g])]
        choice = rng.integers(0, len(goal_ids) + 1, size=n)
        slots = np.empty(n, dtype=np.int64)
        source = np.empty(n, dtype=np.int64)
        # choice 0 is the main buffer, choice k>0 the k-th goal buffer
        for k in range(len(goal_ids) + 1):
            picked = np.flatnonzero(choice == k)
            if not len(picked):
                continue
            if k == 0:
                slots[picked] = rng.integers(0, self.size, size=len(picked))
                source[picked] = MAIN_BUFFER
            else:
                pool = self._buffers[goal_ids[k - 1]].values
                slots[picked] = pool[rng.integers(0, len(pool), size=len(picked))]
                source[picked] = goal_ids[k - 1]
        t = rng.integers(0, self.T, size=n)
        return TransitionBatch(
            obs=self.observations[slots, t],
            obs0=self.observations[slots, 0],
            actions=self.actions[slots, t],
            next_obs=self.observations[slots, t + 1],
            t=t,
            episode_ids=self.episode_ids[slots],
            slots=slots,
            source_buffer=source,
        )

    def invalidate_reward_cache(self) -> None:
        self.reward_cache.fill(-1)

    def audit(self) -> None:
        """Raise AssertionError unless index buffers exactly mirror stored episodes."""
        live = set(self._slot_of.values())
        assert len(live) == self.size
        for g, buf in self._buffers.items():
            members = set(buf.values.tolist())
            assert len(members) == len(buf), f"duplicate slots in buffer {g}"
            expected = {s for s in live if g in self.achieved[s]}
            assert members == expected, f"buffer {g} inconsistent with stored episodes"
        for s in live:
            for g in self.achieved[s]:
                assert s in set(self._buffers[g].values.tolist())
