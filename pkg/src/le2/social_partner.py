"""Scripted social partner: describes what an episode achieved.

Every description is a predicate over the (initial, final) observation pair.
The same predicates serve as the ground-truth reward for offline evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from le2.env import GRIPPER, HANDLES, OBJECTS, TIPS

CATALOG: tuple[str, ...] = (
    "Shift the hand to the right",
    "Shift the hand to the left",
    "Shift the hand higher",
    "Shift the hand lower",
    "Move the hand close to the center",
    "Move the hand to the top right area",
    "Move the hand to the top left area",
    "Move the hand to the bottom right area",
    "Move the hand to the bottom left area",
    "Grasp the magnetic stick",
    "Grasp the scratch stick",
    "Shift the magnetic stick to the right",
    "Shift the magnetic stick to the left",
    "Shift the magnetic stick higher",
    "Shift the magnetic stick lower",
    "Move the magnetic stick to the center",
    "Move the magnetic stick to the top right area",
    "Move the magnetic stick to the top left area",
    "Move the magnetic stick to the bottom right area",
    "Move the magnetic stick to the bottom left area",
    "Shift the sticky stick to the right",
    "Shift the sticky stick to the left",
    "Shift the sticky stick higher",
    "Shift the sticky stick lower",
    "Move the sticky stick to the center",
    "Move the sticky stick to the top right area",
    "Move the sticky stick to the top left area",
    "Move the sticky stick to the bottom right area",
    "Move the sticky stick to the bottom left area",
    "Bring the magnetic stick closer to the magnet",
    "Bring the scratch stick closer to the scratch",
    "Grasp the magnet",
    "Grasp the scratch",
    "Shift the magnet to the right",
    "Shift the magnet to the left",
    "Shift the magnet higher",
    "Shift the magnet lower",
    "Move the magnet to the center",
    "Move the magnet to the top right area",
    "Move the magnet to the top left area",
    "Move the magnet to the bottom right area",
    "Move the magnet to the bottom left area",
    "Shift the scratch to the right",
    "Shift the scratch to the left",
    "Shift the scratch higher",
    "Shift the scratch lower",
    "Move the scratch to the center",
    "Move the scratch to the top right area",
    "Move the scratch to the top left area",
    "Move the scratch to the bottom right area",
    "Move the scratch to the bottom left area",
)
N_GOALS = len(CATALOG)

ENTITY_SLICES = {
    "hand": GRIPPER,
    "magnetic_stick": TIPS[0],
    "sticky_stick": TIPS[1],
    "magnet": OBJECTS[0],
    "scratch": OBJECTS[1],
}
QUADRANTS = {
    "top_right": (1, 1),
    "top_left": (-1, 1),
    "bottom_right": (1, -1),
    "bottom_left": (-1, -1),
}
HANDLE_OF = {"magnetic_stick": 0, "sticky_stick": 1}
STICK_OF = {"magnet": 0, "scratch": 1}
COINCIDENCE_TOL = 1e-9


@dataclass(frozen=True)
class Thresholds:
    shift_delta: float = 0.1
    area_margin: float = 0.25
    center_radius: float = 0.25
    closer_delta: float = 0.1
    move_epsilon: float = 0.05

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"threshold {name} must be > 0, got {value}")


@dataclass(frozen=True)
class PredicateSpec:
    entity: str
    kind: str
    param: Optional[str] = None  # quadrant name for move_area, target entity for bring_closer


def _build_specs() -> tuple[PredicateSpec, ...]:
    def movement(entity, center_kind="move_center"):
        out = [PredicateSpec(entity, k) for k in
               ("shift_right", "shift_left", "shift_higher", "shift_lower")]
        out.append(PredicateSpec(entity, center_kind))
        out += [PredicateSpec(entity, "move_area", q) for q in QUADRANTS]
        return out

    specs = movement("hand")
    specs += [PredicateSpec("magnetic_stick", "grasp_stick"), PredicateSpec("sticky_stick", "grasp_stick")]
    specs += movement("magnetic_stick")
    specs += movement("sticky_stick")
    specs += [PredicateSpec("magnetic_stick", "bring_closer", "magnet"),
              PredicateSpec("sticky_stick", "bring_closer", "scratch")]
    specs += [PredicateSpec("magnet", "grasp_object"), PredicateSpec("scratch", "grasp_object")]
    specs += movement("magnet")
    specs += movement("scratch")
    return tuple(specs)


SPECS: tuple[PredicateSpec, ...] = _build_specs()
assert len(SPECS) == N_GOALS


def catalog() -> tuple[str, ...]:
    return CATALOG


def catalog_json() -> str:
    return json.dumps([{"id": i, "description": d} for i, d in enumerate(CATALOG)], indent=1)


_ENTITIES = tuple(ENTITY_SLICES)
_ENT_COLS = np.array([[ENTITY_SLICES[e].start, ENTITY_SLICES[e].start + 1] for e in _ENTITIES])
_SHIFT_AXIS = {"shift_right": (0, 1.0), "shift_left": (0, -1.0), "shift_higher": (1, 1.0), "shift_lower": (1, -1.0)}


def _spec_table():
    """Per-predicate index arrays so all 51 columns are computed as a handful of array ops."""
    groups: dict[str, list] = {}
    for k, spec in enumerate(SPECS):
        e = _ENTITIES.index(spec.entity)
        if spec.kind in _SHIFT_AXIS:
            row = (k, e, *_SHIFT_AXIS[spec.kind])
            groups.setdefault("shift", []).append(row)
        elif spec.kind == "move_center":
            groups.setdefault("center", []).append((k, e))
        elif spec.kind == "move_area":
            groups.setdefault("area", []).append((k, e, *QUADRANTS[spec.param]))
        elif spec.kind == "grasp_stick":
            groups.setdefault("pair", []).append((k, HANDLES[HANDLE_OF[spec.entity]].start, GRIPPER.start))
        elif spec.kind == "grasp_object":
            groups.setdefault("pair", []).append((k, ENTITY_SLICES[spec.entity].start,
                                                  TIPS[STICK_OF[spec.entity]].start))
        elif spec.kind == "bring_closer":
            groups.setdefault("closer", []).append((k, e, _ENTITIES.index(spec.param)))
        else:  # pragma: no cover
            raise AssertionError(spec.kind)
    return {name: np.array(rows) for name, rows in groups.items()}


_TABLE = _spec_table()


def _achieved_columns(initial: np.ndarray, final: np.ndarray, th: Thresholds) -> np.ndarray:
    """Boolean matrix (n_pairs, 51): predicate k holds on pair i."""
    out = np.zeros((initial.shape[0], N_GOALS), dtype=bool)
    p0, pf = initial[:, _ENT_COLS], final[:, _ENT_COLS]  # (n, 5, 2)
    disp = pf - p0
    moved = np.hypot(disp[..., 0], disp[..., 1]) > th.move_epsilon

    k, e, axis, sign = _TABLE["shift"].T
    k, e, axis = k.astype(int), e.astype(int), axis.astype(int)
    out[:, k] = sign * disp[:, e, axis] > th.shift_delta

    k, e = _TABLE["center"].T
    out[:, k] = moved[:, e] & (np.hypot(pf[:, e, 0], pf[:, e, 1]) < th.center_radius)

    k, e, sx, sy = _TABLE["area"].T
    out[:, k] = moved[:, e] & (sx * pf[:, e, 0] > th.area_margin) & (sy * pf[:, e, 1] > th.area_margin)

    k, a, b = _TABLE["pair"].T
    out[:, k] = ((np.abs(final[:, a] - final[:, b]) <= COINCIDENCE_TOL)
                 & (np.abs(final[:, a + 1] - final[:, b + 1]) <= COINCIDENCE_TOL))

    k, e, o = _TABLE["closer"].T
    d0 = np.hypot(*(p0[:, e] - p0[:, o]).transpose(2, 0, 1))
    df = np.hypot(*(pf[:, e] - pf[:, o]).transpose(2, 0, 1))
    out[:, k] = df < d0 - th.closer_delta
    return out


@dataclass
class SocialPartner:
    """Describes episodes; optionally restricted to a subset of catalog ids."""

    thresholds: Thresholds = field(default_factory=Thresholds)
    goal_subset: Optional[frozenset[int]] = None

    def __post_init__(self):
        if self.goal_subset is not None:
            self.goal_subset = frozenset(int(g) for g in self.goal_subset)
            bad = [g for g in self.goal_subset if not 0 <= g < N_GOALS]
            if bad:
                raise ValueError(f"goal_subset ids out of range: {sorted(bad)}")
        self._mask = np.ones(N_GOALS, dtype=bool)
        if self.goal_subset is not None:
            self._mask[:] = False
            self._mask[list(self.goal_subset)] = True

    def achieved_matrix(self, initial, final, restrict: bool = True) -> np.ndarray:
        initial = np.atleast_2d(np.asarray(initial, dtype=np.float64))
        final = np.atleast_2d(np.asarray(final, dtype=np.float64))
        m = _achieved_columns(initial, final, self.thresholds)
        if restrict:
            m &= self._mask
        return m

    def describe_ids(self, initial, final) -> list[int]:
        return np.flatnonzero(self.achieved_matrix(initial, final)[0]).tolist()

    def describe(self, initial, final) -> set[str]:
        return {CATALOG[g] for g in self.describe_ids(initial, final)}

    def oracle_reward(self, initial, final, goal_id: int) -> int:
        """True reward of one goal; unaffected by goal_subset (evaluation uses all 51)."""
        if not (isinstance(goal_id, (int, np.integer)) and 0 <= goal_id < N_GOALS):
            raise IndexError(f"goal_id must be an int in [0, {N_GOALS}), got {goal_id!r}")
        return int(self.achieved_matrix(initial, final, restrict=False)[0, goal_id])

    def oracle_rewards(self, initial, final, goal_ids: Iterable[int]) -> np.ndarray:
        """Vectorised oracle: (n_pairs, len(goal_ids)) boolean matrix."""
        return self.achieved_matrix(initial, final, restrict=False)[:, list(goal_ids)]


_DEFAULT = SocialPartner()


def describe(initial, final) -> set[str]:
    return _DEFAULT.describe(initial, final)


def oracle_reward(initial, final, goal_id: int) -> int:
    return _DEFAULT.oracle_reward(initial, final, goal_id)
