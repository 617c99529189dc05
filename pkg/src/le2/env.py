"""Deterministic 2D arm with a gripper, two sticks and two objects.

Observation layout (17 floats)::

    [0:3]   joint angles
    [3:5]   gripper position
    [5:7]   handle of stick 1 (magnetic)   [7:9]   handle of stick 2 (sticky)
    [9:11]  tip of stick 1                 [11:13] tip of stick 2
    [13:15] object 1 (magnet)              [15:17] object 2 (scratch)

Stick 1 attaches object 1, stick 2 attaches object 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

OBS_DIM = 17
ACTION_DIM = 4

# observation slices, shared with the social partner
JOINTS = slice(0, 3)
GRIPPER = slice(3, 5)
HANDLES = (slice(5, 7), slice(7, 9))
TIPS = (slice(9, 11), slice(11, 13))
OBJECTS = (slice(13, 15), slice(15, 17))

Point = tuple[float, float]


def _away_from_base(handle: Point, length: float) -> Point:
    norm = math.hypot(*handle)
    return (handle[0] + length * handle[0] / norm, handle[1] + length * handle[1] / norm)


@dataclass(frozen=True)
class EnvConfig:
    link_lengths: tuple[float, float, float] = (0.5, 0.3, 0.2)
    stick_length: float = 0.5
    grab_radius: float = 0.1
    attach_radius: float = 0.1
    max_joint_step: float = math.pi / 8
    episode_length: int = 50
    initial_joint_angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    handle_positions: tuple[Point, Point] = ((-0.75, 0.25), (0.75, 0.25))
    # None -> tips point radially away from the base
    tip_positions: Optional[tuple[Point, Point]] = None
    object_positions: tuple[Point, Point] = ((-1.1, 0.6), (1.1, 0.6))

    def __post_init__(self):
        lengths = [*self.link_lengths, self.stick_length, self.grab_radius,
                   self.attach_radius, self.max_joint_step]
        if len(self.link_lengths) != 3 or any(not (v > 0) for v in lengths):
            raise ValueError("link lengths, stick length, radii and joint step must be > 0")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        arm_reach = sum(self.link_lengths)
        for obj in self.object_positions:
            d = math.hypot(*obj)
            if not arm_reach < d <= arm_reach + self.stick_length:
                raise ValueError(
                    f"object at {obj} (distance {d:.3f}) must lie outside the arm reach "
                    f"{arm_reach:.3f} and within the tool reach {arm_reach + self.stick_length:.3f}"
                )

    @property
    def initial_tips(self) -> tuple[Point, Point]:
        if self.tip_positions is not None:
            return self.tip_positions
        return tuple(_away_from_base(h, self.stick_length) for h in self.handle_positions)

    def to_dict(self) -> dict:
        return {
            "link_lengths": list(self.link_lengths),
            "stick_length": self.stick_length,
            "grab_radius": self.grab_radius,
            "attach_radius": self.attach_radius,
            "max_joint_step": self.max_joint_step,
            "episode_length": self.episode_length,
            "initial_joint_angles": list(self.initial_joint_angles),
            "handle_positions": [list(p) for p in self.handle_positions],
            "tip_positions": None if self.tip_positions is None else [list(p) for p in self.tip_positions],
            "object_positions": [list(p) for p in self.object_positions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        pairs = lambda v: tuple(tuple(float(c) for c in p) for p in v)  # noqa: E731
        for key in ("link_lengths", "initial_joint_angles"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        for key in ("handle_positions", "object_positions"):
            if key in d:
                d[key] = pairs(d[key])
        if d.get("tip_positions") is not None:
            d["tip_positions"] = pairs(d["tip_positions"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown env config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class WorldState:
    joint_angles: tuple[float, float, float]
    gripper_closed: bool = False
    held_stick: Optional[int] = None  # 0, 1 or None
    handles: tuple[Point, Point] = field(default=((0.0, 0.0), (0.0, 0.0)))
    tips: tuple[Point, Point] = field(default=((0.0, 0.0), (0.0, 0.0)))
    object_attached: tuple[bool, bool] = (False, False)
    object_positions: tuple[Point, Point] = field(default=((0.0, 0.0), (0.0, 0.0)))


def wrap_angle(theta: float) -> float:
    """Wrap into [-pi, pi]."""
    if -math.pi <= theta <= math.pi:
        return theta
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def forward_kinematics(joint_angles, link_lengths=(0.5, 0.3, 0.2)) -> Point:
    """Gripper position of the planar chain rooted at the origin, zero pose along +x."""
    x = y = 0.0
    cumulative = 0.0
    for theta, length in zip(joint_angles, link_lengths):
        cumulative += theta
        x += length * math.cos(cumulative)
        y += length * math.sin(cumulative)
    return (x, y)


def initial_state(config: EnvConfig) -> WorldState:
    return WorldState(
        joint_angles=tuple(wrap_angle(float(a)) for a in config.initial_joint_angles),
        gripper_closed=False,
        held_stick=None,
        handles=tuple(tuple(map(float, p)) for p in config.handle_positions),
        tips=tuple(tuple(map(float, p)) for p in config.initial_tips),
        object_attached=(False, False),
        object_positions=tuple(tuple(map(float, p)) for p in config.object_positions),
    )


def _clamp(v: float) -> float:
    return -1.0 if v < -1.0 else (1.0 if v > 1.0 else v)


def step_state(config: EnvConfig, state: WorldState, action) -> WorldState:
    """Advance the world by one control step."""
    a = [_clamp(float(v)) for v in action]
    if len(a) != ACTION_DIM or not all(math.isfinite(v) for v in a):
        raise ValueError(f"action must be {ACTION_DIM} finite numbers, got {action!r}")

    angles = tuple(
        wrap_angle(theta + a[k] * config.max_joint_step) for k, theta in enumerate(state.joint_angles)
    )
    gripper = forward_kinematics(angles, config.link_lengths)
    closed = a[3] > 0.0

    held = state.held_stick
    if not closed:
        held = None
    elif not state.gripper_closed and held is None:
        dists = [math.hypot(gripper[0] - h[0], gripper[1] - h[1]) for h in state.handles]
        nearest = min(range(2), key=lambda k: dists[k])
        if dists[nearest] < config.grab_radius:
            held = nearest

    handles = list(state.handles)
    tips = list(state.tips)
    if held is not None:
        heading = sum(angles)
        handles[held] = gripper
        tips[held] = (
            gripper[0] + config.stick_length * math.cos(heading),
            gripper[1] + config.stick_length * math.sin(heading),
        )

    attached = list(state.object_attached)
    objects = list(state.object_positions)
    for j in range(2):
        if not attached[j]:
            tip, obj = tips[j], objects[j]
            if math.hypot(tip[0] - obj[0], tip[1] - obj[1]) < config.attach_radius:
                attached[j] = True
        if attached[j]:
            objects[j] = tips[j]

    return WorldState(
        joint_angles=angles,
        gripper_closed=closed,
        held_stick=held,
        handles=tuple(handles),
        tips=tuple(tips),
        object_attached=tuple(attached),
        object_positions=tuple(objects),
    )


def observe(state: WorldState, config: Optional[EnvConfig] = None) -> np.ndarray:
    links = (config or DEFAULT_CONFIG).link_lengths
    gripper = forward_kinematics(state.joint_angles, links)
    return np.array(
        [
            *state.joint_angles,
            *gripper,
            *state.handles[0], *state.handles[1],
            *state.tips[0], *state.tips[1],
            *state.object_positions[0], *state.object_positions[1],
        ],
        dtype=np.float64,
    )


DEFAULT_CONFIG = EnvConfig()


class ArmToolsToys:
    """Stateful episode wrapper around :func:`step_state`."""

    def __init__(self, config: Optional[EnvConfig] = None):
        self.config = config or EnvConfig()
        self.state = initial_state(self.config)
        self.t = 0

    @property
    def T(self) -> int:
        return self.config.episode_length

    def reset(self) -> np.ndarray:
        self.state = initial_state(self.config)
        self.t = 0
        return observe(self.state, self.config)

    def step(self, action) -> np.ndarray:
        self.state = step_state(self.config, self.state, action)
        self.t += 1
        return observe(self.state, self.config)

    def forward_kinematics(self, joint_angles) -> Point:
        return forward_kinematics(joint_angles, self.config.link_lengths)

    def observe(self, state: Optional[WorldState] = None) -> np.ndarray:
        return observe(self.state if state is None else state, self.config)

    def set_state(self, state: WorldState) -> np.ndarray:
        self.state = replace(state)
        return self.observe()


def write_trajectories(path, episodes: Iterable[dict]) -> int:
    """Dump episodes as JSON lines; each dict needs episode_id, observations, actions."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            row = {
                "episode_id": int(ep["episode_id"]),
                "observations": np.asarray(ep["observations"], dtype=float).tolist(),
                "actions": np.asarray(ep["actions"], dtype=float).tolist(),
            }
            if "achieved_goal_ids" in ep:
                row["achieved_goal_ids"] = sorted(int(g) for g in ep["achieved_goal_ids"])
            fh.write(json.dumps(row) + "\n")
            n += 1
    return n


def read_trajectories(path) -> Iterator[dict]:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        row["observations"] = np.asarray(row["observations"], dtype=np.float64)
        row["actions"] = np.asarray(row["actions"], dtype=np.float64)
        yield row
