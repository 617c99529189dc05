"""Target-goal bandit driven by expected trajectory quality.

The value of targeting goal ``t`` is ``sum_i freq(i | t) * rarity(i)``: how
often targeting ``t`` recently produced description ``i``, weighted by how
rarely ``i`` has been described overall. Targets are drawn by probability
matching on those values with an epsilon-uniform floor.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np


@dataclass(frozen=True)
class NoiseGoal:
    encoding: np.ndarray


@dataclass(frozen=True)
class SelectionDistribution:
    goal_ids: tuple[int, ...]
    values: np.ndarray
    probabilities: np.ndarray


def probability_matching(values, epsilon: float) -> np.ndarray:
    """``eps/N + (1-eps) * v_i / sum(v)``; uniform matching term when ``sum(v) == 0``."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        return values.copy()
    total = values.sum()
    match = values / total if total > 0 else np.full(n, 1.0 / n)
    return epsilon / n + (1.0 - epsilon) * match


class GoalSampler:
    def __init__(self, dim: int, epsilon: float = 0.2, window: int = 100,
                 counts: Optional[Counter] = None):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.dim = int(dim)
        self.epsilon = float(epsilon)
        self.window = int(window)
        # may be shared between workers
        self.counts: Counter = Counter() if counts is None else counts
        self.windows: dict[int, deque] = {}

    @property
    def discovered(self) -> list[int]:
        return sorted(g for g, c in self.counts.items() if c > 0)

    def update_on_episode(self, targeted: Optional[int], achieved: Iterable[int]) -> None:
        achieved = frozenset(int(g) for g in achieved)
        if targeted is not None:
            self.windows.setdefault(int(targeted), deque(maxlen=self.window)).append(achieved)
        for g in achieved:
            self.counts[g] += 1

    def rarity(self, goal_id: int) -> float:
        return 1.0 / max(1, self.counts.get(goal_id, 0))

    def freq(self, reached: int, targeted: int) -> float:
        win = self.windows.get(targeted)
        if not win:
            return 0.0
        return sum(reached in s for s in win) / len(win)

    def confusion(self) -> tuple[list[int], np.ndarray]:
        """Rows: targeted goal, columns: reached goal, both over discovered goals."""
        goals = self.discovered
        mat = np.array([[self.freq(r, t) for r in goals] for t in goals]).reshape(len(goals), len(goals))
        return goals, mat

    def _raw_value(self, targeted: int) -> float:
        win = self.windows.get(targeted)
        if not win:
            return 0.0
        hits = Counter(g for s in win for g in s)
        return sum(n / len(win) * self.rarity(g) for g, n in hits.items() if self.counts.get(g, 0) > 0)

    def values(self) -> dict[int, float]:
        goals = self.discovered
        raw = {g: self._raw_value(g) for g in goals if self.windows.get(g)}
        optimistic = max(raw.values(), default=0.0)
        return {g: raw.get(g, optimistic) for g in goals}

    def value(self, goal_id: int) -> float:
        return self.values()[goal_id]

    def selection_probabilities(self, epsilon: Optional[float] = None) -> SelectionDistribution:
        eps = self.epsilon if epsilon is None else epsilon
        vals = self.values()
        goals = tuple(vals)
        v = np.array([vals[g] for g in goals], dtype=np.float64)
        return SelectionDistribution(goals, v, probability_matching(v, eps))

    def sample_target(self, rng: np.random.Generator) -> Union[int, NoiseGoal]:
        dist = self.selection_probabilities()
        if not dist.goal_ids:
            return NoiseGoal(rng.uniform(-1.0, 1.0, size=self.dim))
        idx = int(np.searchsorted(np.cumsum(dist.probabilities), rng.random() * dist.probabilities.sum(),
                                  side="right"))
        return dist.goal_ids[min(idx, len(dist.goal_ids) - 1)]
