import pytest

from le2.config import ConfigError, RunConfig, apply_env_overrides, load_config, parse_goal_subset, save_config


def test_defaults_are_valid():
    c = RunConfig()
    assert c.worker_count == 2 and c.eval_cadence == 600 and c.reward.refit_cadence == 600
    assert c.learner.gamma == 0.98 and c.learner.polyak == 0.95 and c.learner.batch_size == 256


def test_toml_round_trip(tmp_path):
    c = RunConfig(seed=4, goal_subset=(0, 1, 2), use_oracle_reward=True)
    c = c.replace(learner=c.learner.__class__(hidden=32))
    p = tmp_path / "run.toml"
    save_config(c, p)
    assert load_config(p, environ={}) == c


def test_partial_toml(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 3\ngoal_subset = "0..8"\n[learner]\nhidden = 64\n[reward.forest]\nn_trees = 10\n')
    c = load_config(p, environ={})
    assert c.seed == 3 and c.goal_subset == tuple(range(9))
    assert c.learner.hidden == 64 and c.learner.gamma == 0.98
    assert c.reward.forest.n_trees == 10 and c.reward.forest.max_depth == 12


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "worker_count = 0\n",
    "eval_cadence = 0\n",
    "goal_subset = [51]\n",
    "[learner]\nnope = 1\n",
    "seed = \n",
])
def test_invalid_configs(tmp_path, text):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p, environ={})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")


def test_goal_subset_parsing():
    assert parse_goal_subset("0..8") == tuple(range(9))
    assert parse_goal_subset("3, 1..2,3") == (1, 2, 3)
    assert parse_goal_subset([5, 4]) == (4, 5)
    assert parse_goal_subset(None) is None
    with pytest.raises(ConfigError):
        parse_goal_subset("a..b")
    with pytest.raises(ConfigError):
        parse_goal_subset("")


def test_env_overrides():
    env = {"LE2_SEED": "9", "LE2_WORKERS": "3", "LE2_USE_ORACLE_REWARD": "yes", "LE2_GOAL_SUBSET": "0..2",
           "LE2_DISABLE_NUMBA": "1", "OTHER": "x"}
    c = apply_env_overrides(RunConfig(), env)
    assert (c.seed, c.worker_count, c.use_oracle_reward, c.goal_subset) == (9, 3, True, (0, 1, 2))
    with pytest.raises(ConfigError):
        apply_env_overrides(RunConfig(), {"LE2_SEED": "nine"})
    with pytest.raises(ConfigError):
        apply_env_overrides(RunConfig(), {"LE2_USE_ORACLE_REWARD": "maybe"})
    with pytest.raises(ConfigError):
        apply_env_overrides(RunConfig(), {"LE2_LEARNER": "1"})
