"""Goal-conditioned reward classifier learned from social-partner feedback.

Each episode yields one positive example per achieved goal and one negative
per discovered-but-not-achieved goal, all sharing the episode's final
observation and its displacement from the initial one. Features are
``[final_obs, final_obs - initial_obs, goal_encoding]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from le2.env import OBS_DIM
from le2.forest import ForestParams, NotFittedError, RandomForest


@dataclass
class RewardExample:
    final_obs: np.ndarray
    delta_obs: np.ndarray
    goal_encoding: np.ndarray
    label: int
    goal_id: int
    episode_id: int

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.final_obs, self.delta_obs, self.goal_encoding])


def make_features(final_obs, delta_obs, encodings) -> np.ndarray:
    return np.hstack([np.atleast_2d(final_obs), np.atleast_2d(delta_obs), np.atleast_2d(encodings)])


class _GoalColumn:
    """Growable columnar storage of one goal's examples."""

    def __init__(self):
        self.n = 0
        self.obs = np.zeros((16, 2 * OBS_DIM))
        self.label = np.zeros(16, dtype=np.int8)
        self.episode = np.zeros(16, dtype=np.int64)

    def append(self, final, delta, label, episode):
        if self.n == len(self.label):
            grow = lambda a: np.concatenate([a, np.zeros_like(a)])  # noqa: E731
            self.obs, self.label, self.episode = grow(self.obs), grow(self.label), grow(self.episode)
        self.obs[self.n, :OBS_DIM] = final
        self.obs[self.n, OBS_DIM:] = delta
        self.label[self.n] = label
        self.episode[self.n] = episode
        self.n += 1

    def trim(self, max_negatives: int):
        """Drop the oldest negatives beyond ``max_negatives``; positives are kept."""
        neg = np.flatnonzero(self.label[: self.n] == 0)
        if len(neg) <= max_negatives:
            return
        keep = np.ones(self.n, dtype=bool)
        keep[neg[: len(neg) - max_negatives]] = False
        for name in ("obs", "label", "episode"):
            arr = getattr(self, name)
            kept = arr[: self.n][keep]
            arr[: len(kept)] = kept
        self.n = int(keep.sum())

    def view(self):
        return self.obs[: self.n], self.label[: self.n], self.episode[: self.n]


class ExampleStore:
    def __init__(self, max_negatives_per_goal: int = 20_000):
        self.max_negatives_per_goal = int(max_negatives_per_goal)
        self._goals: dict[int, _GoalColumn] = {}

    def __len__(self) -> int:
        return sum(c.n for c in self._goals.values())

    @property
    def goal_ids(self) -> list[int]:
        return sorted(self._goals)

    def add(self, final, delta, goal_id: int, label: int, episode_id: int) -> None:
        col = self._goals.setdefault(int(goal_id), _GoalColumn())
        col.append(final, delta, label, episode_id)
        if col.n > 1.5 * self.max_negatives_per_goal + 16:
            col.trim(self.max_negatives_per_goal)

    def arrays(self, goal_id: int, min_episode: Optional[int] = None, max_episode: Optional[int] = None):
        """(obs_pairs, labels, episode_ids) of one goal within an episode-id window (inclusive bounds)."""
        obs, lab, ep = self._goals[goal_id].view()
        keep = np.ones(len(lab), dtype=bool)
        if min_episode is not None:
            keep &= ep >= min_episode
        if max_episode is not None:
            keep &= ep <= max_episode
        return obs[keep], lab[keep], ep[keep]

    def counts(self, goal_id: int) -> tuple[int, int]:
        _, lab, _ = self._goals[goal_id].view()
        pos = int(lab.sum())
        return pos, len(lab) - pos


@dataclass
class TrainingSet:
    obs: np.ndarray  # (n, 34): final obs and delta
    labels: np.ndarray
    goal_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def features(self, encodings: np.ndarray) -> np.ndarray:
        return np.hstack([self.obs, encodings[self.goal_ids]])


def _take(rng: np.random.Generator, pool: np.ndarray, k: int) -> np.ndarray:
    """``k`` items of ``pool``: whole copies first, remainder without replacement."""
    if k <= 0 or len(pool) == 0:
        return pool[:0]
    reps, rest = divmod(k, len(pool))
    parts = [pool] * reps
    if rest:
        parts.append(pool[np.sort(rng.choice(len(pool), size=rest, replace=False))])
    return np.concatenate(parts)


def build_training_set(store: ExampleStore, per_goal_cap: int, min_positive_fraction: float,
                       rng: np.random.Generator, max_episode: Optional[int] = None,
                       goal_ids: Optional[Iterable[int]] = None) -> TrainingSet:
    """Per goal, up to ``per_goal_cap`` examples with positives >= the floor when any exist."""
    obs_parts, lab_parts, gid_parts = [], [], []
    for g in sorted(store.goal_ids if goal_ids is None else goal_ids):
        obs, lab, _ = store.arrays(g, max_episode=max_episode)
        pos_idx, neg_idx = np.flatnonzero(lab == 1), np.flatnonzero(lab == 0)
        n_pos_avail, n_neg_avail = len(pos_idx), len(neg_idx)
        total = min(per_goal_cap, n_pos_avail + n_neg_avail)
        if total == 0:
            continue
        if n_pos_avail == 0:
            n_pos = 0
        else:
            natural = round(total * n_pos_avail / (n_pos_avail + n_neg_avail))
            floor = math.ceil(min_positive_fraction * total - 1e-9)
            n_pos = min(total, max(natural, floor))
        n_neg = total - n_pos
        if n_neg > n_neg_avail:
            n_neg = n_neg_avail
            n_pos = total - n_neg
        chosen = np.concatenate([_take(rng, pos_idx, n_pos), _take(rng, neg_idx, n_neg)])
        obs_parts.append(obs[chosen])
        lab_parts.append(lab[chosen])
        gid_parts.append(np.full(len(chosen), g, dtype=np.int64))
    if not obs_parts:
        return TrainingSet(np.zeros((0, 2 * OBS_DIM)), np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int64))
    return TrainingSet(np.concatenate(obs_parts), np.concatenate(lab_parts), np.concatenate(gid_parts))


# ----------------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class GoalMetrics:
    precision: float
    recall: float
    f1: float
    support: int  # positives in the evaluated set
    n: int


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


@dataclass
class MetricsReport:
    per_goal: dict = field(default_factory=dict)  # goal_id -> GoalMetrics
    unscored: tuple = ()  # goals with neither positives nor predicted positives
    macro_precision: float = 0.0
    macro_recall: float = 0.0
    macro_f1: float = 0.0
    pooled_precision: float = 0.0
    pooled_recall: float = 0.0
    pooled_f1: float = 0.0
    n_examples: int = 0
    degenerate_model: bool = False

    def rows(self, episode: int) -> list[dict]:
        out = [
            {"episode": episode, "goal_id": g, "precision": m.precision, "recall": m.recall,
             "f1": m.f1, "scope": "per_goal"}
            for g, m in sorted(self.per_goal.items())
        ]
        out.append({"episode": episode, "goal_id": "", "precision": self.macro_precision,
                    "recall": self.macro_recall, "f1": self.macro_f1, "scope": "macro"})
        out.append({"episode": episode, "goal_id": "", "precision": self.pooled_precision,
                    "recall": self.pooled_recall, "f1": self.pooled_f1, "scope": "pooled"})
        return out


def compute_metrics(y_true, y_pred, goal_ids) -> MetricsReport:
    """Per-goal precision/recall/F1, their macro means, and pooled (whole-model) scores.

    Macro means run over goals that have a positive label or a positive
    prediction; for the rest precision and recall are both 0/0.
    """
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    goal_ids = np.asarray(goal_ids)
    report = MetricsReport(n_examples=len(y_true))
    unscored = []
    for g in np.unique(goal_ids):
        m = goal_ids == g
        t, p = y_true[m], y_pred[m]
        tp, fp, fn = int((t & p).sum()), int((~t & p).sum()), int((t & ~p).sum())
        if tp + fp + fn == 0:
            unscored.append(int(g))
            continue
        pr, rc, f = _prf(tp, fp, fn)
        report.per_goal[int(g)] = GoalMetrics(pr, rc, f, int(t.sum()), int(m.sum()))
    report.unscored = tuple(unscored)
    if report.per_goal:
        ms = list(report.per_goal.values())
        report.macro_precision = float(np.mean([m.precision for m in ms]))
        report.macro_recall = float(np.mean([m.recall for m in ms]))
        report.macro_f1 = float(np.mean([m.f1 for m in ms]))
    tp = int((y_true & y_pred).sum())
    fp = int((~y_true & y_pred).sum())
    fn = int((y_true & ~y_pred).sum())
    report.pooled_precision, report.pooled_recall, report.pooled_f1 = _prf(tp, fp, fn)
    return report


# ----------------------------------------------------------------------------- model


@dataclass(frozen=True)
class RewardModelParams:
    forest: ForestParams = field(default_factory=ForestParams)
    refit_cadence: int = 600
    per_goal_cap: int = 1000
    min_positive_fraction: float = 0.20
    max_negatives_per_goal: int = 20_000


class RewardModel:
    """Learned R(final, delta, goal) -> {0, 1} over the goals of a registry."""

    def __init__(self, encodings_of, params: Optional[RewardModelParams] = None):
        # encodings_of: callable returning the (n_goals, D) encoding matrix
        self._encodings_of = encodings_of
        self.params = params or RewardModelParams()
        self.store = ExampleStore(self.params.max_negatives_per_goal)
        self.forest: Optional[RandomForest] = None
        self.version = 0
        self.predict_calls = 0
        self.last_fit_episode: Optional[int] = None

    @property
    def fitted(self) -> bool:
        return self.forest is not None

    def ingest_episode(self, initial_obs, final_obs, achieved: Iterable[int], discovered: Iterable[int],
                       episode_id: int = 0) -> list[RewardExample]:
        achieved, discovered = set(achieved), set(discovered)
        if not achieved <= discovered:
            raise ValueError(f"achieved goals {sorted(achieved - discovered)} are not registered")
        final = np.asarray(final_obs, dtype=np.float64)
        delta = final - np.asarray(initial_obs, dtype=np.float64)
        enc = self._encodings_of()
        out = []
        for g in sorted(discovered):
            label = int(g in achieved)
            self.store.add(final, delta, g, label, episode_id)
            out.append(RewardExample(final, delta, enc[g], label, g, episode_id))
        return out

    def build_training_set(self, rng: np.random.Generator, max_episode: Optional[int] = None) -> TrainingSet:
        return build_training_set(self.store, self.params.per_goal_cap, self.params.min_positive_fraction,
                                  rng, max_episode=max_episode)

    def fit(self, rng: np.random.Generator, seed: int, episode: Optional[int] = None) -> RandomForest:
        ts = self.build_training_set(rng, max_episode=episode)
        if len(ts) == 0:
            raise ValueError("no reward examples to fit on")
        forest = RandomForest(self.params.forest).fit(ts.features(self._encodings_of()), ts.labels, seed=seed)
        self.forest = forest
        self.version += 1
        self.last_fit_episode = episode
        return forest

    def _require_fit(self):
        if self.forest is None:
            raise NotFittedError("reward model has not been fitted")

    def predict(self, final_obs, delta_obs, goal_encoding) -> int:
        self._require_fit()
        self.predict_calls += 1
        return int(self.forest.predict(make_features(final_obs, delta_obs, goal_encoding))[0])

    def predict_pairs(self, final_obs, delta_obs, goal_ids: Sequence[int]) -> np.ndarray:
        """One prediction per row, row i judged against goal_ids[i]."""
        self._require_fit()
        self.predict_calls += 1
        enc = self._encodings_of()[np.asarray(goal_ids, dtype=np.int64)]
        return self.forest.predict(make_features(final_obs, delta_obs, enc)).astype(bool)

    def predict_goals(self, final_obs, delta_obs, goal_ids: Sequence[int]) -> np.ndarray:
        """(n_rows, len(goal_ids)) boolean matrix of predicted rewards."""
        final_obs, delta_obs = np.atleast_2d(final_obs), np.atleast_2d(delta_obs)
        goal_ids = np.asarray(goal_ids, dtype=np.int64)
        n, g = len(final_obs), len(goal_ids)
        if n == 0 or g == 0:
            return np.zeros((n, g), dtype=bool)
        rows = np.repeat(np.arange(n), g)
        flat = self.predict_pairs(final_obs[rows], delta_obs[rows], np.tile(goal_ids, n))
        return flat.reshape(n, g)

    def evaluate_window(self, min_episode: int, max_episode: Optional[int] = None) -> MetricsReport:
        """Score the current model on stored examples from episodes in [min_episode, max_episode]."""
        self._require_fit()
        obs, lab, gids = [], [], []
        for g in self.store.goal_ids:
            o, y, _ = self.store.arrays(g, min_episode=min_episode, max_episode=max_episode)
            obs.append(o)
            lab.append(y)
            gids.append(np.full(len(y), g, dtype=np.int64))
        if not obs or not sum(len(y) for y in lab):
            return MetricsReport(degenerate_model=self.forest.degenerate)
        obs, lab, gids = np.concatenate(obs), np.concatenate(lab), np.concatenate(gids)
        pred = self.predict_pairs(obs[:, :OBS_DIM], obs[:, OBS_DIM:], gids)
        report = compute_metrics(lab, pred, gids)
        report.degenerate_model = self.forest.degenerate
        return report


def evaluate_recent(heldout: Sequence[RewardExample], predict) -> MetricsReport:
    """Metrics of ``predict(final, delta, encoding) -> {0,1}`` on oracle-labelled examples."""
    y_true = [ex.label for ex in heldout]
    y_pred = [predict(ex.final_obs, ex.delta_obs, ex.goal_encoding) for ex in heldout]
    return compute_metrics(y_true, y_pred, [ex.goal_id for ex in heldout])
