import json

from le2.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main
from le2.orchestrator import Trainer

TINY = """
total_episodes = 6
eval_cadence = 3
worker_count = 1
[learner]
hidden = 8
batch_size = 8
n_cycles = 1
n_batches = 1
[reward]
refit_cadence = 3
[reward.forest]
n_trees = 3
"""


def write_cfg(tmp_path, text=TINY):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return str(p)


def test_train_evaluate_export(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["train", "--config", write_cfg(tmp_path), "--output-dir", str(out), "--seed", "5"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["episodes"] == 6
    assert main(["evaluate", "--checkpoint", report["checkpoint"], "--episodes-per-goal", "0"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["mean"] is None
    assert main(["export", "--run", str(out)]) == EXIT_OK
    assert (out / "export" / "success_rate.csv").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["train", "--config", write_cfg(tmp_path, "bogus_key = 1\n")]) == EXIT_CONFIG
    assert main(["train", "--config", write_cfg(tmp_path), "--workers", "0"]) == EXIT_CONFIG
    assert main(["train", "--config", write_cfg(tmp_path), "--goal-subset", "0..99"]) == EXIT_CONFIG
    assert main(["evaluate", "--checkpoint", str(tmp_path / "nope.le2")]) == EXIT_CONFIG
    assert main(["export", "--run", str(tmp_path / "nope")]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_abort_exit_3(tmp_path, monkeypatch, capsys):
    def boom(self):
        raise FloatingPointError("non-finite loss")
    monkeypatch.setattr(Trainer, "step_round", boom)
    code = main(["train", "--config", write_cfg(tmp_path), "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_ABORT
    assert "checkpoint" in capsys.readouterr().err
    assert (tmp_path / "o" / "abort_checkpoint.le2").exists()
