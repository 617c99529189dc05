import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from le2.memory import MAIN_BUFFER, EpisodeMemory, EpisodeRecord

T = 5


def rec(eid, achieved=(), target=None):
    obs = np.full((T + 1, 17), float(eid))
    obs[:, 0] = np.arange(T + 1)
    return EpisodeRecord(eid, obs, np.zeros((T, 4)), target, frozenset(achieved))


def test_store_updates_buffers():
    m = EpisodeMemory(T, capacity=10)
    m.store_episode(rec(0, {3}))
    m.store_episode(rec(1))
    assert m.goal_buffer(3) == [0]
    assert len(m) == 2 and m.goal_buffer(1) == []
    m.audit()


def test_fifo_eviction_purges_index_buffers():
    m = EpisodeMemory(T, capacity=2)
    for e in range(3):
        m.store_episode(rec(e, {0, e}))
    assert m.stored_episode_ids() == [1, 2]
    assert m.goal_buffer(0) == [1, 2]
    assert m.goal_buffer(99) == []
    m.audit()


def test_lifetime_counts_survive_eviction():
    m = EpisodeMemory(T, capacity=2)
    for e in range(5):
        m.store_episode(rec(e, {0}))
    assert m.reward_counts() == {0: 5}
    assert 7 not in m.reward_counts()


def test_shape_validation():
    m = EpisodeMemory(T)
    with pytest.raises(ValueError):
        m.store_episode(EpisodeRecord(0, np.zeros((T, 17)), np.zeros((T, 4))))


def test_sampling_empty_and_zero():
    m = EpisodeMemory(T)
    with pytest.raises(ValueError):
        m.sample_transitions(3, np.random.default_rng(0))
    m.store_episode(rec(4, {1}))
    b = m.sample_transitions(0, np.random.default_rng(0))
    assert len(b) == 0


def test_single_episode_is_the_only_source():
    m = EpisodeMemory(T)
    m.store_episode(rec(4, {1}))
    b = m.sample_transitions(500, np.random.default_rng(0))
    assert set(b.episode_ids) == {4}
    assert b.t.min() >= 0 and b.t.max() <= T - 1
    # transition fields line up with the stored arrays
    assert np.array_equal(b.obs[:, 0], b.t) and np.array_equal(b.next_obs[:, 0], b.t + 1)
    assert (b.obs0[:, 0] == 0).all()
    assert set(b.source_buffer) <= {MAIN_BUFFER, 1}


def test_two_goal_balance_within_3_sigma():
    m = EpisodeMemory(T, capacity=2000)
    for e in range(1000):
        m.store_episode(rec(e, {0}))
    m.store_episode(rec(1000, {1}))
    n = 10_000
    b = m.sample_transitions(n, np.random.default_rng(3))
    frac_b = np.mean(b.source_buffer == 1)
    sigma = np.sqrt((1 / 3) * (2 / 3) / n)
    assert abs(frac_b - 1 / 3) < 3 * sigma
    # fractions for each of the three buffers
    for src in (MAIN_BUFFER, 0, 1):
        assert abs(np.mean(b.source_buffer == src) - 1 / 3) < 3 * sigma
    assert np.all(b.episode_ids[b.source_buffer == 1] == 1000)


def test_sampling_is_seeded():
    m = EpisodeMemory(T)
    for e in range(20):
        m.store_episode(rec(e, {e % 3}))
    a = m.sample_transitions(64, np.random.default_rng(9))
    b = m.sample_transitions(64, np.random.default_rng(9))
    assert np.array_equal(a.slots, b.slots) and np.array_equal(a.t, b.t)


def test_reward_cache_reset_on_store_and_invalidate():
    m = EpisodeMemory(T, capacity=1)
    m.store_episode(rec(0, {0}))
    m.reward_cache[0, :, 0] = 1
    m.store_episode(rec(1))
    assert (m.reward_cache[0] == -1).all()
    m.reward_cache[0] = 0
    m.invalidate_reward_cache()
    assert (m.reward_cache == -1).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.lists(st.frozensets(st.integers(0, 4), max_size=3), min_size=1, max_size=40))
def test_audit_after_random_store_evict(capacity, achieved_sets):
    m = EpisodeMemory(T, capacity=capacity, max_goals=5)
    counts = np.zeros(5, dtype=int)
    for e, ach in enumerate(achieved_sets):
        m.store_episode(rec(e, ach))
        for g in ach:
            counts[g] += 1
        m.audit()
        assert len(m) == min(e + 1, capacity)
    live = m.stored_episode_ids()
    assert live == list(range(max(0, len(achieved_sets) - capacity), len(achieved_sets)))
    for g in range(5):
        assert m.goal_buffer(g) == [e for e in live if g in achieved_sets[e]]
        assert m.reward_counts().get(g, 0) == counts[g]
