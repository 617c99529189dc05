import csv

import numpy as np
import pytest

from le2.config import RunConfig
from le2.forest import ForestParams
from le2.learner import LearnerParams
from le2.orchestrator import (RunAborted, Trainer, evaluate, export, load_checkpoint, read_checkpoint_header,
                              read_metrics, train)
from le2.reward_model import RewardModelParams
from le2.social_partner import N_GOALS


def tiny(tmp_path, name="run", **kw):
    base = dict(seed=3, worker_count=1, total_episodes=20, eval_cadence=5, checkpoint_cadence=1000,
                output_dir=str(tmp_path / name),
                learner=LearnerParams(hidden=8, batch_size=16, n_cycles=1, n_batches=2),
                reward=RewardModelParams(forest=ForestParams(n_trees=5, max_depth=6), refit_cadence=5))
    base.update(kw)
    return RunConfig(**base)


def test_empty_run_has_header_only(tmp_path):
    report = train(tiny(tmp_path, total_episodes=0))
    assert report["episodes"] == 0
    assert (tmp_path / "run" / "metrics.csv").read_text() == "episode,metric,scope,value\n"
    counts = export(tmp_path / "run")
    assert all(n == 0 for n in counts.values())
    for f in ("success_rate.csv", "f1.csv", "goal_selection_probabilities.csv", "confusion_matrix.csv",
              "per_goal_timeline.csv"):
        assert len((tmp_path / "run" / "export" / f).read_text().splitlines()) == 1


def test_identical_seeds_give_identical_metrics(tmp_path):
    train(tiny(tmp_path, "a"))
    train(tiny(tmp_path, "b"))
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert len(a.splitlines()) > 1


def test_goal_subset_restricts_registry(tmp_path):
    cfg = tiny(tmp_path, goal_subset=tuple(range(9)), total_episodes=30)
    trainer = Trainer(cfg)
    trainer.open_writer()
    trainer.run(30)
    assert len(trainer.registry) <= 9 and set(trainer.catalog_of) <= set(range(9))
    assert len(trainer.registry) > 0


def test_oracle_switch_never_queries_learned_model(tmp_path):
    trainer = Trainer(tiny(tmp_path, use_oracle_reward=True))
    trainer.open_writer()
    trainer.run(20)
    assert trainer.reward_model.fitted  # still trained and monitored
    assert trainer.learned_reward_queries == 0
    assert (trainer.workers[0].memory.reward_cache == -1).all()

    lr = Trainer(tiny(tmp_path, "lr"))
    lr.open_writer()
    lr.run(20)
    assert lr.learned_reward_queries > 0


def test_dataflow_invariants_hold(tmp_path):
    trainer = Trainer(tiny(tmp_path, total_episodes=15))
    trainer.open_writer()
    trainer.run(15)
    mem = trainer.workers[0].memory
    mem.audit()
    # every achieved goal is registered and counted
    for eid in mem.stored_episode_ids():
        assert all(g < len(trainer.registry) for g in mem.episode(eid).achieved_goal_ids)
    assert sum(trainer.sampler.counts.values()) == sum(mem.reward_counts().values())


def test_metrics_streams_are_monotone(tmp_path):
    train(tiny(tmp_path))
    last = {}
    for r in read_metrics(tmp_path / "run"):
        key = (r["metric"], r["scope"])
        assert int(r["episode"]) > last.get(key, -1)
        last[key] = int(r["episode"])
    assert {"success_rate", "selection_probability", "competence", "reward_f1"} <= {k[0] for k in last}


def test_checkpoint_round_trip_continuation(tmp_path):
    cfg = tiny(tmp_path, total_episodes=100)
    a = Trainer(cfg, tmp_path / "a")
    a.open_writer()
    a.run(10)
    path = a.save_checkpoint(tmp_path / "ck.le2")
    header = read_checkpoint_header(path)
    assert header["schema_version"] == 1 and header["D"] == 50 and header["H"] == 8
    assert [r["description"] for r in header["goal_registry"]] == a.registry.descriptions
    b = load_checkpoint(path, tmp_path / "b")
    b.open_writer()
    a.run(12)
    b.run(12)
    assert a.workers[0].learner.main_params().tobytes() == b.workers[0].learner.main_params().tobytes()
    assert a.workers[0].learner.target_params().tobytes() == b.workers[0].learner.target_params().tobytes()
    a.writer.flush()
    b.writer.flush()
    tail_a = (tmp_path / "a" / "metrics.csv").read_text().splitlines()
    tail_b = (tmp_path / "b" / "metrics.csv").read_text().splitlines()[1:]
    assert tail_b and tail_a[-len(tail_b):] == tail_b


def test_bad_checkpoint_rejected(tmp_path):
    p = tmp_path / "junk.le2"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_evaluate_and_offline_eval_is_pure(tmp_path):
    report = train(tiny(tmp_path, total_episodes=10))
    table = evaluate(report["checkpoint"], episodes_per_goal=2)
    assert len(table.per_goal) == N_GOALS and 0 <= table.mean <= 1
    empty = evaluate(report["checkpoint"], episodes_per_goal=0)
    assert empty.per_goal == {} and empty.mean is None
    trainer = load_checkpoint(report["checkpoint"])
    before = trainer.workers[0].learner.main_params().copy()
    state = trainer.workers[0].rng_explore.bit_generator.state
    trainer.evaluate_oracle(3)
    assert np.array_equal(before, trainer.workers[0].learner.main_params())
    assert trainer.workers[0].rng_explore.bit_generator.state == state


def test_untrained_policy_is_near_random_baseline(tmp_path):
    trainer = Trainer(tiny(tmp_path))
    assert trainer.evaluate_oracle(1).mean < 0.1


def test_export_row_counts(tmp_path):
    train(tiny(tmp_path, total_episodes=20))
    counts = export(tmp_path / "run")
    n_evals = 20 // 5
    assert counts["success_rate.csv"] == n_evals * N_GOALS
    assert counts["per_goal_timeline.csv"] == n_evals * N_GOALS
    trainer = load_checkpoint(tmp_path / "run" / "checkpoint.le2")
    with open(tmp_path / "run" / "export" / "confusion_matrix.csv") as fh:
        rows = list(csv.reader(fh))
    assert sorted(int(r[0]) for r in rows[1:]) == sorted(trainer.catalog_of)
    assert rows[0][1:] == [str(g) for g in sorted(trainer.catalog_of)]
    with pytest.raises(FileNotFoundError):
        export(tmp_path / "missing")


def test_multi_worker_round(tmp_path):
    trainer = Trainer(tiny(tmp_path, worker_count=3))
    trainer.open_writer()
    trainer.run(6)
    ref = trainer.workers[0].learner
    for w in trainer.workers[1:]:
        assert np.array_equal(w.learner.main_params(), ref.main_params())
        assert np.array_equal(w.learner.target_params(), ref.target_params())
        assert w.learner.normalizer.count == ref.normalizer.count
    assert len({w.memory.stored_episode_ids()[0] for w in trainer.workers}) == 3


def test_abort_writes_checkpoint(tmp_path, monkeypatch):
    def boom(self, e):
        raise RuntimeError("injected")
    monkeypatch.setattr(Trainer, "_evaluate", boom)
    with pytest.raises(RunAborted) as info:
        train(tiny(tmp_path))
    assert info.value.checkpoint.exists()
    assert "abort" in (tmp_path / "run" / "events.jsonl").read_text()
