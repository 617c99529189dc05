import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from le2.env import (ACTION_DIM, GRIPPER, HANDLES, OBJECTS, OBS_DIM, TIPS, ArmToolsToys, EnvConfig,
                     WorldState, forward_kinematics, initial_state, observe, read_trajectories, step_state,
                     write_trajectories)

LINKS = (0.5, 0.3, 0.2)


@pytest.mark.parametrize("angles, expected", [
    ((0.0, 0.0, 0.0), (1.0, 0.0)),
    ((math.pi / 2, 0.0, 0.0), (0.0, 1.0)),
    ((math.pi / 2, -math.pi / 2, 0.0), (0.5, 0.5)),
])
def test_forward_kinematics_hand_cases(angles, expected):
    x, y = forward_kinematics(angles, LINKS)
    assert abs(x - expected[0]) < 1e-9 and abs(y - expected[1]) < 1e-9


def test_reset_is_fixed_layout(env):
    a, b = env.reset(), env.reset()
    assert a.shape == (OBS_DIM,) and np.isfinite(a).all()
    assert a.tobytes() == b.tobytes()
    assert tuple(a[:3]) == (0.0, 0.0, 0.0)
    assert tuple(a[GRIPPER]) == forward_kinematics((0, 0, 0), LINKS)


def test_default_layout_needs_tools():
    cfg = EnvConfig()
    reach = sum(cfg.link_lengths)
    for obj in cfg.object_positions:
        d = math.hypot(*obj)
        assert reach < d <= reach + cfg.stick_length


def test_config_rejects_unreachable_or_bad_values():
    with pytest.raises(ValueError):
        EnvConfig(object_positions=((-0.5, 0.5), (1.1, 0.6)))  # reachable bare-handed
    with pytest.raises(ValueError):
        EnvConfig(object_positions=((-3.0, 0.0), (1.1, 0.6)))  # out of tool reach
    with pytest.raises(ValueError):
        EnvConfig(grab_radius=0.0)
    with pytest.raises(ValueError):
        EnvConfig.from_dict({"bogus": 1})


def test_config_dict_round_trip():
    cfg = EnvConfig(episode_length=20, tip_positions=((-1.0, 0.5), (1.0, 0.5)))
    assert EnvConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_action_is_a_no_op(env):
    obs0 = env.reset()
    obs1 = env.step((0, 0, 0, -1))
    assert np.array_equal(obs0, obs1)
    assert env.state.gripper_closed is False


def _state_with_gripper_near_handle(cfg, gap=0.05):
    """Straight arm aimed at handle 1, which sits ``gap`` beyond the gripper."""
    init = initial_state(cfg)
    hx, hy = cfg.handle_positions[0]
    theta = math.atan2(hy, hx)
    r = sum(cfg.link_lengths) + gap
    handles = ((r * math.cos(theta), r * math.sin(theta)), init.handles[1])
    return WorldState((theta, 0.0, 0.0), False, None, handles, init.tips, init.object_attached,
                      init.object_positions)


def test_grab_rule():
    cfg = EnvConfig()
    state = _state_with_gripper_near_handle(cfg)
    nxt = step_state(cfg, state, (0, 0, 0, 1))
    assert nxt.held_stick == 0
    obs = observe(nxt, cfg)
    assert np.array_equal(obs[HANDLES[0]], obs[GRIPPER])
    heading = sum(nxt.joint_angles)
    tip = np.array(obs[GRIPPER]) + cfg.stick_length * np.array([math.cos(heading), math.sin(heading)])
    assert np.allclose(obs[TIPS[0]], tip, atol=1e-12)


def test_grab_is_edge_triggered():
    cfg = EnvConfig()
    state = _state_with_gripper_near_handle(cfg)
    closed = WorldState(state.joint_angles, True, None, state.handles, state.tips, state.object_attached,
                        state.object_positions)
    assert step_state(cfg, closed, (0, 0, 0, 1)).held_stick is None


def test_grab_needs_proximity():
    cfg = EnvConfig()
    state = _state_with_gripper_near_handle(cfg, gap=0.2)
    assert step_state(cfg, state, (0, 0, 0, 1)).held_stick is None


def test_release_leaves_stick_in_place():
    cfg = EnvConfig()
    held = step_state(cfg, _state_with_gripper_near_handle(cfg), (0, 0, 0, 1))
    moved = step_state(cfg, held, (0.5, 0, 0, 1))
    released = step_state(cfg, moved, (0.5, 0, 0, -1))
    assert released.held_stick is None
    assert released.handles[0] == moved.handles[0]
    assert released.tips[0] == moved.tips[0]


def test_attach_rule_and_permanence():
    cfg = EnvConfig()
    init = initial_state(cfg)
    # place object 1 right next to stick 1's tip
    tip = init.tips[0]
    objects = ((tip[0] + 0.05, tip[1]), init.object_positions[1])
    state = WorldState(init.joint_angles, False, None, init.handles, init.tips, (False, False), objects)
    nxt = step_state(cfg, state, (0, 0, 0, -1))
    assert nxt.object_attached[0]
    assert nxt.object_positions[0] == nxt.tips[0]
    rng = np.random.default_rng(0)
    for _ in range(30):
        nxt = step_state(cfg, nxt, rng.uniform(-1, 1, 4))
        assert nxt.object_attached[0]
        assert nxt.object_positions[0] == nxt.tips[0]


def test_observation_reflects_grab():
    cfg = EnvConfig()
    env = ArmToolsToys(cfg)
    env.set_state(_state_with_gripper_near_handle(cfg))
    obs = env.step((0, 0, 0, 1))
    assert np.array_equal(obs[HANDLES[0]], obs[GRIPPER])


def test_actions_are_clamped():
    cfg = EnvConfig()
    s = initial_state(cfg)
    assert step_state(cfg, s, (5, -5, 0, -1)) == step_state(cfg, s, (1, -1, 0, -1))
    with pytest.raises(ValueError):
        step_state(cfg, s, (float("nan"), 0, 0, 0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-2, 2), min_size=4, max_size=4), min_size=1, max_size=60))
def test_invariants_along_random_trajectories(actions):
    cfg = EnvConfig()
    s = initial_state(cfg)
    attached = [False, False]
    for a in actions:
        s = step_state(cfg, s, a)
        assert all(-math.pi <= th <= math.pi for th in s.joint_angles)
        assert s.held_stick in (None, 0, 1)
        obs = observe(s, cfg)
        assert np.isfinite(obs).all()
        if s.held_stick is not None:
            assert np.array_equal(obs[HANDLES[s.held_stick]], obs[GRIPPER])
        for j in range(2):
            assert not (attached[j] and not s.object_attached[j])
            attached[j] = s.object_attached[j]
            if s.object_attached[j]:
                assert np.array_equal(obs[OBJECTS[j]], obs[TIPS[j]])


def _replay(seed, n):
    env = ArmToolsToys()
    rng = np.random.default_rng(seed)
    env.reset()
    out = np.empty((n, OBS_DIM))
    for t in range(n):
        if t % env.T == 0:
            env.reset()
        out[t] = env.step(rng.uniform(-1, 1, ACTION_DIM))
    return out


def test_determinism_10k_steps():
    assert _replay(7, 10_000).tobytes() == _replay(7, 10_000).tobytes()


def test_trajectory_jsonl_round_trip(tmp_path):
    env = ArmToolsToys()
    obs = [env.reset()]
    acts = []
    for _ in range(env.T):
        acts.append(np.full(4, 0.3))
        obs.append(env.step(acts[-1]))
    path = tmp_path / "traj.jsonl"
    write_trajectories(path, [{"episode_id": 3, "observations": obs, "actions": acts, "achieved_goal_ids": {2, 1}}])
    (row,) = list(read_trajectories(path))
    assert row["episode_id"] == 3 and row["achieved_goal_ids"] == [1, 2]
    assert np.array_equal(row["observations"], np.array(obs))
    assert row["actions"].shape == (env.T, ACTION_DIM)
