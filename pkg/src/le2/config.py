"""Run configuration: one TOML document, overridable by ``LE2_*`` environment variables."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli
import tomli_w

from le2.env import EnvConfig
from le2.forest import ForestParams
from le2.learner import LearnerParams
from le2.reward_model import RewardModelParams
from le2.social_partner import N_GOALS

ENV_PREFIX = "LE2_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    epsilon: float = 0.2
    window: int = 100


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    worker_count: int = 2
    total_episodes: int = 100_000
    eval_cadence: int = 600
    eval_episodes_per_goal: int = 1
    checkpoint_cadence: int = 6000
    memory_capacity: int = 10_000
    output_dir: str = "runs/le2"
    embeddings_path: Optional[str] = None  # None -> bundled catalog-vocabulary table
    goal_subset: Optional[tuple[int, ...]] = None
    use_oracle_reward: bool = False
    self_eval_reward: str = "learned"  # "learned" | "oracle"
    env: EnvConfig = field(default_factory=EnvConfig)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    reward: RewardModelParams = field(default_factory=RewardModelParams)
    learner: LearnerParams = field(default_factory=LearnerParams)

    def __post_init__(self):
        for name in ("eval_cadence", "checkpoint_cadence", "eval_episodes_per_goal", "memory_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.reward.refit_cadence < 1:
            raise ConfigError("reward.refit_cadence must be >= 1")
        if not 1 <= self.worker_count <= 16:
            raise ConfigError("worker_count must lie in [1, 16]")
        if self.total_episodes < 0:
            raise ConfigError("total_episodes must be >= 0")
        if self.self_eval_reward not in ("learned", "oracle"):
            raise ConfigError("self_eval_reward must be 'learned' or 'oracle'")
        if self.goal_subset is not None:
            bad = [g for g in self.goal_subset if not 0 <= g < N_GOALS]
            if bad:
                raise ConfigError(f"goal_subset ids out of range: {bad}")
        lp = self.learner
        if lp.batch_size < 1 or lp.hidden < 1 or lp.n_cycles < 0 or lp.n_batches < 0:
            raise ConfigError("learner sizes must be positive")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "env":
                v = v.to_dict()
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return _drop_none(d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "env" in d:
                d["env"] = EnvConfig.from_dict(d["env"])
            if "sampler" in d:
                d["sampler"] = SamplerParams(**d["sampler"])
            if "learner" in d:
                d["learner"] = LearnerParams(**d["learner"])
            if "reward" in d:
                r = dict(d["reward"])
                r["forest"] = ForestParams(**r.get("forest", {}))
                d["reward"] = RewardModelParams(**r)
            if "goal_subset" in d:
                d["goal_subset"] = parse_goal_subset(d["goal_subset"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _drop_none(d: dict) -> dict:
    """TOML has no null; absent keys fall back to the dataclass defaults (which are None)."""
    return {k: _drop_none(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}


def parse_goal_subset(value) -> Optional[tuple[int, ...]]:
    """Accept a list of ids or a string such as ``"0..8"`` / ``"0..8,12"`` (ranges inclusive)."""
    if value is None:
        return None
    if isinstance(value, str):
        ids: list[int] = []
        for part in value.replace(" ", "").split(","):
            if not part:
                continue
            try:
                if ".." in part:
                    lo, hi = part.split("..")
                    ids.extend(range(int(lo), int(hi) + 1))
                else:
                    ids.append(int(part))
            except ValueError:
                raise ConfigError(f"bad goal subset element {part!r}") from None
        value = ids
    out = tuple(sorted({int(g) for g in value}))
    if not out:
        raise ConfigError("goal_subset must not be empty")
    return out


def _coerce(raw: str, current, name: str):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def apply_env_overrides(config: RunConfig, environ=None) -> RunConfig:
    """Top-level scalar fields read from ``LE2_<FIELD>`` (``LE2_WORKERS`` aliases worker_count)."""
    environ = os.environ if environ is None else environ
    changes = {}
    aliases = {"WORKERS": "worker_count"}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX) or key == "LE2_DISABLE_NUMBA":
            continue
        name = aliases.get(key[len(ENV_PREFIX):], key[len(ENV_PREFIX):].lower())
        if name == "goal_subset":
            changes[name] = parse_goal_subset(raw)
        elif name == "embeddings_path":
            changes[name] = raw
        elif name in {f.name for f in fields(RunConfig)}:
            current = getattr(config, name)
            if dataclasses.is_dataclass(current):
                raise ConfigError(f"{key} cannot override a whole section")
            changes[name] = _coerce(raw, current, key)
    return config.replace(**changes) if changes else config


def load_config(path=None, environ=None) -> RunConfig:
    if path is None:
        config = RunConfig()
    else:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        config = RunConfig.from_dict(data)
    return apply_env_overrides(config, environ)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(config.dumps())
