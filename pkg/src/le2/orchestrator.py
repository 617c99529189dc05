"""Training loop, offline evaluation, metrics streams, checkpoints and export."""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import pickle
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from le2.config import RunConfig
from le2.env import ArmToolsToys
from le2.goal_sampler import GoalSampler, NoiseGoal
from le2.language import GoalRegistry, encode, load_embeddings
from le2.learner import DDPG, LPTracker, hindsight_augment, merge_worker_updates, run_episode, self_evaluate
from le2.memory import EpisodeMemory, EpisodeRecord
from le2.reward_model import RewardModel
from le2.social_partner import CATALOG, N_GOALS, SocialPartner

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LE2CKPT\x00"
CHECKPOINT_SCHEMA = 1
METRICS_HEADER = ("episode", "metric", "scope", "value")

# named rng streams; the code is mixed into the seed so streams are independent
STREAMS = {"env": 0, "sampler": 1, "forest": 2, "learner_init": 3, "explore": 4, "replay": 5, "eval": 6}


def stream_rng(seed: int, name: str, worker: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name], int(worker)])


class RunAborted(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path]):
        super().__init__(message)
        self.checkpoint = checkpoint


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    """Single writer for metrics.csv and events.jsonl; enforces per-stream episode monotonicity."""

    def __init__(self, run_dir, append: bool = False):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        mpath = self.run_dir / "metrics.csv"
        fresh = not (append and mpath.exists())
        self._metrics = mpath.open("w" if fresh else "a", newline="")
        self._csv = csv.writer(self._metrics, lineterminator="\n")
        if fresh:
            self._csv.writerow(METRICS_HEADER)
        self._events = (self.run_dir / "events.jsonl").open("w" if fresh else "a")
        self._last: dict[tuple[str, str], int] = {}
        self._metrics.flush()

    def write(self, episode: int, metric: str, scope, value) -> None:
        key = (metric, str(scope))
        last = self._last.get(key)
        if last is not None and episode <= last:
            raise ValueError(f"metric {key} episode {episode} does not increase (last {last})")
        self._last[key] = episode
        self._csv.writerow((episode, metric, scope, _fmt(value)))

    def event(self, **fields) -> None:
        self._events.write(json.dumps(fields, sort_keys=True) + "\n")

    def write_confusion(self, goals: list[int], matrix: np.ndarray) -> None:
        with (self.run_dir / "confusion.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["targeted_goal_id"] + [str(g) for g in goals])
            for g, row in zip(goals, matrix):
                w.writerow([g] + [_fmt(v) for v in row])

    def flush(self) -> None:
        self._metrics.flush()
        self._events.flush()

    def close(self) -> None:
        self._metrics.close()
        self._events.close()


@dataclass
class Worker:
    index: int
    env: ArmToolsToys
    memory: EpisodeMemory
    learner: DDPG
    rng_sampler: np.random.Generator
    rng_explore: np.random.Generator
    rng_replay: np.random.Generator


@dataclass
class EvaluationTable:
    per_goal: dict  # catalog id -> success rate
    mean: Optional[float]
    subset_mean: Optional[float]
    episodes_per_goal: int


class Trainer:
    def __init__(self, config: RunConfig, run_dir=None):
        self.config = c = config
        self.table = load_embeddings(c.embeddings_path)
        self.registry = GoalRegistry(self.table)
        self.catalog_of: list[int] = []  # registry id -> catalog id
        self.catalog_encodings = np.stack([encode(d, self.table) for d in CATALOG])
        self.sp = SocialPartner(goal_subset=c.goal_subset)
        self.reward_model = RewardModel(functools.partial(getattr, self.registry, "encodings"), c.reward)
        self.sampler = GoalSampler(self.table.dim, c.sampler.epsilon, c.sampler.window)
        self.lp = LPTracker(c.learner.lp_window)
        self.rng_forest = stream_rng(c.seed, "forest")
        init = DDPG(self.table.dim, c.learner, stream_rng(c.seed, "learner_init"))
        self.workers = []
        for w in range(c.worker_count):
            learner = init if w == 0 else pickle.loads(pickle.dumps(init))
            self.workers.append(Worker(
                w, ArmToolsToys(c.env), EpisodeMemory(c.env.episode_length, c.memory_capacity, N_GOALS),
                learner, stream_rng(c.seed, "sampler", w), stream_rng(c.seed, "explore", w),
                stream_rng(c.seed, "replay", w),
            ))
        self.eval_env = ArmToolsToys(c.env)
        self.episode = 0
        self.learned_reward_queries = 0
        self.last_fit_id = -1
        self.last_evaluation: Optional[EvaluationTable] = None
        self.last_reward_report = None  # held-out report scored at the latest refit
        self.writer: Optional[MetricsWriter] = None
        self.run_dir = Path(run_dir or c.output_dir)

    # -- pickling: the writer holds open files

    def __getstate__(self):
        state = self.__dict__.copy()
        state["writer"] = None
        return state

    # -- rewards

    @property
    def oracle_updates(self) -> bool:
        return self.config.use_oracle_reward

    def _reward_matrix(self, worker: Worker, batch) -> np.ndarray:
        G = len(self.registry)
        if self.oracle_updates:
            full = self.sp.achieved_matrix(batch.obs0, batch.next_obs, restrict=False)
            return full[:, self.catalog_of]
        if not self.reward_model.fitted:
            return np.zeros((len(batch), G), dtype=bool)
        cache = worker.memory.reward_cache[batch.slots, batch.t, :G]
        rows = np.flatnonzero((cache < 0).any(axis=1))
        if len(rows):
            nxt = batch.next_obs[rows]
            pred = self.reward_model.predict_goals(nxt, nxt - batch.obs0[rows], np.arange(G))
            worker.memory.reward_cache[batch.slots[rows], batch.t[rows], :G] = pred
            cache[rows] = pred
            self.learned_reward_queries += len(rows)
        return cache > 0

    def _judge(self, initial, final, goal_id: int) -> bool:
        if self.oracle_updates or self.config.self_eval_reward == "oracle":
            return bool(self.sp.oracle_reward(initial, final, self.catalog_of[goal_id]))
        if not self.reward_model.fitted:
            return False
        self.learned_reward_queries += 1
        return bool(self.reward_model.predict(final, final - initial, self.registry.encoding(goal_id)))

    # -- one worker episode (target, rollout, describe, register, store, ingest, bandit, updates)

    def _worker_episode(self, w: Worker) -> dict:
        c, p = self.config, self.config.learner
        target = self.sampler.sample_target(w.rng_sampler)
        if isinstance(target, NoiseGoal):
            target_id, goal = None, target.encoding
        else:
            target_id, goal = int(target), self.registry.encoding(target)
        obs, actions = run_episode(w.env, w.learner, goal, p.noise_scale, p.random_eps, w.rng_explore)
        episode_id = self.episode * c.worker_count + w.index

        achieved = []
        for cat in self.sp.describe_ids(obs[0], obs[-1]):
            desc = CATALOG[cat]
            if desc not in self.registry:
                gid = self.registry.register(desc, episode=self.episode + 1)
                self.catalog_of.append(cat)
                self.writer.event(event="discovery", episode=self.episode + 1, worker=w.index,
                                  goal_id=gid, catalog_id=cat, description=desc)
            achieved.append(self.registry.id_of(desc))
        w.memory.store_episode(EpisodeRecord(episode_id, obs, actions, target_id, frozenset(achieved)))
        self.reward_model.ingest_episode(obs[0], obs[-1], achieved, range(len(self.registry)), episode_id)
        self.sampler.update_on_episode(target_id, achieved)

        losses = {}
        if len(self.registry):
            alp = self.lp.alp_vector(len(self.registry))
            enc = self.registry.encodings
            for _ in range(p.n_cycles * p.n_batches):
                batch = w.memory.sample_transitions(p.batch_size, w.rng_replay)
                aug = hindsight_augment(batch, enc, functools.partial(self._reward_matrix, w), alp,
                                        p.rho_pos, p.eps_replay, w.rng_replay, c.env.episode_length)
                losses = w.learner.update(aug)
        return losses

    def _merge(self, base_main, base_target, base_norm) -> None:
        ws = self.workers
        main = base_main.copy()
        merge_worker_updates(main, [w.learner.main_params() - base_main for w in ws])
        target = np.mean([w.learner.target_params() for w in ws], axis=0)
        norm = ws[0].learner.normalizer.__class__(base_norm[0].size)
        norm.load(base_norm)
        for wk in ws:
            norm.add_increment(base_norm, wk.learner.normalizer.state())
        for wk in ws:
            wk.learner.set_main_params(main)
            wk.learner.set_target_params(target)
            wk.learner.normalizer.load(norm.state())

    def step_round(self) -> dict:
        """One episode (plus updates) per worker, then the barrier merge and scheduled work."""
        lead = self.workers[0].learner
        multi = len(self.workers) > 1
        if multi:
            base = (lead.main_params(), lead.target_params(), lead.normalizer.state())
        losses = {}
        for w in self.workers:
            losses = self._worker_episode(w)
        if multi:
            self._merge(*base)
        self.episode += 1
        e = self.episode
        if e % self.config.reward.refit_cadence == 0:
            self._refit(e)
        if e % self.config.eval_cadence == 0:
            self._evaluate(e)
        if e % self.config.checkpoint_cadence == 0:
            self.save_checkpoint()
        return losses

    # -- scheduled work

    def _refit(self, e: int) -> None:
        rm = self.reward_model
        newest = e * self.config.worker_count - 1
        if rm.fitted:
            report = rm.evaluate_window(self.last_fit_id + 1, newest)
            if report.n_examples:
                self.last_reward_report = report
                for g, m in sorted(report.per_goal.items()):
                    cat = self.catalog_of[g]
                    self.writer.write(e, "reward_f1", cat, m.f1)
                    self.writer.write(e, "reward_precision", cat, m.precision)
                    self.writer.write(e, "reward_recall", cat, m.recall)
                for scope in ("macro", "pooled"):
                    self.writer.write(e, "reward_f1", scope, getattr(report, f"{scope}_f1"))
                    self.writer.write(e, "reward_precision", scope, getattr(report, f"{scope}_precision"))
                    self.writer.write(e, "reward_recall", scope, getattr(report, f"{scope}_recall"))
        if not len(rm.store):
            return
        seed = int(self.rng_forest.integers(0, 2**31))
        forest = rm.fit(self.rng_forest, seed, episode=newest)
        self.last_fit_id = newest
        for w in self.workers:
            w.memory.invalidate_reward_cache()
        self.writer.event(event="refit", episode=e, version=rm.version, n_nodes=int(len(forest.feature)),
                          degenerate=forest.degenerate)

    def evaluate_oracle(self, episodes_per_goal: Optional[int] = None) -> EvaluationTable:
        """Noiseless rollouts towards every catalog goal, judged by the oracle; touches no training state."""
        k = self.config.eval_episodes_per_goal if episodes_per_goal is None else int(episodes_per_goal)
        learner = self.workers[0].learner
        per_goal = {}
        if k > 0:
            for cat in range(N_GOALS):
                wins = 0
                for _ in range(k):
                    obs, _ = run_episode(self.eval_env, learner, self.catalog_encodings[cat])
                    wins += self.sp.oracle_reward(obs[0], obs[-1], cat)
                per_goal[cat] = wins / k
        subset = self.config.goal_subset
        mean = float(np.mean(list(per_goal.values()))) if per_goal else None
        subset_mean = float(np.mean([per_goal[g] for g in subset])) if per_goal and subset else mean
        return EvaluationTable(per_goal, mean, subset_mean, k)

    def _evaluate(self, e: int) -> None:
        if len(self.registry):
            rates = self_evaluate(self.eval_env, self.workers[0].learner, self.registry.encodings,
                                  range(len(self.registry)), self._judge, self.lp,
                                  self.config.learner.rollouts_per_goal)
            for g in rates:
                cat = self.catalog_of[g]
                self.writer.write(e, "competence", cat, self.lp.competence(g))
                self.writer.write(e, "alp", cat, self.lp.alp(g))
        table = self.evaluate_oracle()
        self.last_evaluation = table
        for cat, rate in table.per_goal.items():
            self.writer.write(e, "success_rate", cat, rate)
        if table.mean is not None:
            self.writer.write(e, "success_rate", "mean", table.mean)
            self.writer.write(e, "success_rate", "subset", table.subset_mean)
        dist = self.sampler.selection_probabilities()
        for g, prob in zip(dist.goal_ids, dist.probabilities):
            self.writer.write(e, "selection_probability", self.catalog_of[g], prob)
        self.writer.write(e, "discovered_goals", "run", len(self.registry))
        self.writer.flush()
        log.info("episode %d: %d goals discovered, oracle mean %.3f, subset %.3f", e, len(self.registry),
                 table.mean or 0.0, table.subset_mean or 0.0)

    # -- output

    def open_writer(self, append: bool = False) -> MetricsWriter:
        self.writer = MetricsWriter(self.run_dir, append=append)
        return self.writer

    def write_confusion(self) -> None:
        goals, mat = self.sampler.confusion()
        cat = np.array([self.catalog_of[g] for g in goals], dtype=np.int64)
        order = np.argsort(cat, kind="stable")
        self.writer.write_confusion(cat[order].tolist(), np.asarray(mat)[np.ix_(order, order)])

    def checkpoint_path(self) -> Path:
        return self.run_dir / "checkpoint.le2"

    def save_checkpoint(self, path=None) -> Path:
        path = Path(path) if path is not None else self.checkpoint_path()
        header = {
            "schema_version": CHECKPOINT_SCHEMA,
            "D": self.table.dim,
            "H": self.config.learner.hidden,
            "episode": self.episode,
            "goal_registry": self.registry.to_json(),
            "config": self.config.to_dict(),
        }
        raw = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
        pickle.dump(self, buf, protocol=pickle.HIGHEST_PROTOCOL)
        tmp = path.with_suffix(path.suffix + ".tmp")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(buf.getvalue())
        tmp.replace(path)
        if self.writer is not None:
            self.write_confusion()
            self.writer.event(event="checkpoint", episode=self.episode, path=str(path))
            self.writer.flush()
        return path

    def run(self, n_rounds: int) -> None:
        for _ in range(n_rounds):
            self.step_round()


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
    if header.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {header.get('schema_version')}")
    return header


def load_checkpoint(path, run_dir=None) -> Trainer:
    """Restore a trainer; metrics are appended to ``run_dir`` (default: the checkpoint's directory)."""
    header = read_checkpoint_header(path)
    with open(path, "rb") as fh:
        fh.seek(len(CHECKPOINT_MAGIC) + 8 + len(json.dumps(header, sort_keys=True).encode()))
        trainer: Trainer = pickle.load(fh)
    if trainer.table.dim != header["D"] or len(trainer.registry) != len(header["goal_registry"]):
        raise ValueError("checkpoint header does not match its payload")
    trainer.run_dir = Path(run_dir) if run_dir is not None else Path(path).parent
    return trainer


def train(config: RunConfig, run_dir=None, resume_from=None) -> dict:
    """Run (or resume) training to ``config.total_episodes`` episodes per worker."""
    if resume_from is not None:
        trainer = load_checkpoint(resume_from, run_dir)
        trainer.open_writer(append=True)
    else:
        trainer = Trainer(config, run_dir)
        trainer.open_writer()
        (trainer.run_dir / "config.toml").write_text(config.dumps())
    writer = trainer.writer
    try:
        while trainer.episode < trainer.config.total_episodes:
            trainer.step_round()
    except Exception as exc:
        log.exception("training aborted at episode %d", trainer.episode)
        ckpt = None
        try:
            ckpt = trainer.save_checkpoint(trainer.run_dir / "abort_checkpoint.le2")
            writer.event(event="abort", episode=trainer.episode, error=repr(exc))
        finally:
            writer.close()
        raise RunAborted(f"training aborted at episode {trainer.episode}: {exc}", ckpt) from exc
    trainer.write_confusion()
    ckpt = trainer.save_checkpoint() if trainer.episode > 0 else None
    writer.close()
    table = trainer.evaluate_oracle()
    return {
        "episodes": trainer.episode,
        "discovered": [trainer.catalog_of[g] for g in range(len(trainer.registry))],
        "mean_success": table.mean,
        "subset_success": table.subset_mean,
        "checkpoint": str(ckpt) if ckpt else None,
        "run_dir": str(trainer.run_dir),
    }


def evaluate(checkpoint, episodes_per_goal: int = 1) -> EvaluationTable:
    return load_checkpoint(checkpoint).evaluate_oracle(episodes_per_goal)


# ----------------------------------------------------------------------------- export


def read_metrics(run_dir) -> list[dict]:
    path = Path(run_dir) / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"no metrics stream at {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _write_csv(path: Path, header, rows) -> int:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        n = 0
        for row in rows:
            w.writerow(row)
            n += 1
    return n


def export(run_dir, out_dir=None) -> dict[str, int]:
    """Plot-ready tidy CSVs derived from a run's metrics, events and confusion streams."""
    run_dir = Path(run_dir)
    rows = read_metrics(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "export"
    out.mkdir(parents=True, exist_ok=True)

    def select(metric, per_goal):
        for r in rows:
            if r["metric"] == metric and r["scope"].isdigit() == per_goal:
                yield r

    discovery: dict[int, int] = {}
    events = run_dir / "events.jsonl"
    if events.exists():
        for line in events.read_text().splitlines():
            ev = json.loads(line)
            if ev.get("event") == "discovery":
                discovery.setdefault(ev["catalog_id"], ev["episode"])

    counts = {}
    counts["success_rate.csv"] = _write_csv(
        out / "success_rate.csv", ("episode", "goal_id", "description", "success_rate"),
        ((r["episode"], r["scope"], CATALOG[int(r["scope"])], r["value"]) for r in select("success_rate", True)))
    counts["success_rate_summary.csv"] = _write_csv(
        out / "success_rate_summary.csv", ("episode", "scope", "success_rate"),
        ((r["episode"], r["scope"], r["value"]) for r in select("success_rate", False)))

    prf: dict[tuple[str, str], dict] = {}
    for r in rows:
        if r["metric"] in ("reward_f1", "reward_precision", "reward_recall"):
            prf.setdefault((r["episode"], r["scope"]), {})[r["metric"]] = r["value"]
    counts["f1.csv"] = _write_csv(
        out / "f1.csv", ("episode", "scope", "precision", "recall", "f1"),
        ((ep, scope, v.get("reward_precision"), v.get("reward_recall"), v.get("reward_f1"))
         for (ep, scope), v in prf.items()))
    counts["goal_selection_probabilities.csv"] = _write_csv(
        out / "goal_selection_probabilities.csv", ("episode", "goal_id", "probability"),
        ((r["episode"], r["scope"], r["value"]) for r in select("selection_probability", True)))

    conf = run_dir / "confusion.csv"
    conf_rows = list(csv.reader(conf.open(newline=""))) if conf.exists() else [["targeted_goal_id"]]
    counts["confusion_matrix.csv"] = _write_csv(out / "confusion_matrix.csv", conf_rows[0], conf_rows[1:])

    # per-goal timeline: one row per eval checkpoint and catalog goal; F1 is the latest refit score
    f1_by_goal: dict[int, list[tuple[int, str]]] = {}
    for (ep, scope), v in prf.items():
        if scope.isdigit() and "reward_f1" in v:
            f1_by_goal.setdefault(int(scope), []).append((int(ep), v["reward_f1"]))

    def latest_f1(goal, episode):
        best = ""
        for ep, val in f1_by_goal.get(goal, []):
            if ep <= episode:
                best = val
        return best

    timeline = []
    for r in select("success_rate", True):
        g, ep = int(r["scope"]), int(r["episode"])
        timeline.append((ep, g, CATALOG[g], discovery.get(g, ""), latest_f1(g, ep), r["value"]))
    counts["per_goal_timeline.csv"] = _write_csv(
        out / "per_goal_timeline.csv",
        ("episode", "goal_id", "description", "discovery_episode", "reward_f1", "success_rate"), timeline)
    return counts
