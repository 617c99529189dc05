from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from le2.goal_sampler import GoalSampler, NoiseGoal, probability_matching


def sampler_with(counts, windows, **kw):
    s = GoalSampler(dim=3, **kw)
    s.counts.update(counts)
    for target, outcomes in windows.items():
        for o in outcomes:
            s.windows.setdefault(target, deque(maxlen=s.window)).append(frozenset(o))
    return s


def test_update_on_episode():
    s = GoalSampler(3)
    s.update_on_episode(0, {0})
    assert s.freq(0, 0) == 1.0
    s.update_on_episode(0, set())
    assert s.freq(0, 0) == 0.5
    s.update_on_episode(None, {1})
    assert s.counts[1] == 1 and 1 not in s.windows


def test_value_hand_example():
    # freq(d0|g0) = 1, freq(d1|g0) = 0.5; g0 described 10x, g1 2x
    s = sampler_with({0: 10, 1: 2}, {0: [{0, 1}, {0}]})
    assert s.value(0) == pytest.approx(0.35, abs=1e-15)


def test_value_edge_cases():
    s = sampler_with({0: 3}, {0: [set(), set()]})
    assert s.value(0) == 0.0
    s = GoalSampler(3)
    s.update_on_episode(0, {0})
    assert s.value(0) == 1.0


def test_optimistic_value_for_untargeted_goals():
    s = sampler_with({0: 2, 1: 4}, {0: [{0}]})
    assert s.value(1) == s.value(0) == 0.5


def test_selection_hand_example():
    p = probability_matching([0.35, 0.05], 0.2)
    assert abs(p[0] - 0.8) < 1e-12 and abs(p[1] - 0.2) < 1e-12


def test_selection_fallbacks():
    assert np.allclose(probability_matching([0, 0, 0, 0], 0.2), 0.25)
    assert probability_matching([0.7], 0.2)[0] == pytest.approx(1.0)
    assert probability_matching([0.0], 0.5)[0] == pytest.approx(1.0)


def test_random_instances_sum_and_floor():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        eps = float(rng.uniform(0, 1))
        v = rng.exponential(size=n) * (rng.random(n) < 0.7)
        p = probability_matching(v, eps)
        assert abs(p.sum() - 1) < 1e-9
        assert (p >= eps / n - 1e-15).all()


def test_sample_target_noise_and_single():
    s = GoalSampler(7)
    g = s.sample_target(np.random.default_rng(0))
    assert isinstance(g, NoiseGoal) and g.encoding.shape == (7,)
    assert (np.abs(g.encoding) <= 1).all()
    s.update_on_episode(None, {4})
    assert all(s.sample_target(np.random.default_rng(i)) == 4 for i in range(20))


def test_sample_target_reproducible_and_matches_distribution():
    s = sampler_with({0: 10, 1: 2}, {0: [{0, 1}, {0}], 1: [{1}]})
    a = [s.sample_target(np.random.default_rng(5)) for _ in range(3)]
    assert a[0] == a[1] == a[2]
    rng = np.random.default_rng(1)
    draws = np.array([s.sample_target(rng) for _ in range(20_000)])
    p = s.selection_probabilities().probabilities
    assert abs(np.mean(draws == 0) - p[0]) < 0.015


def test_window_bounded():
    s = GoalSampler(3, window=4)
    for _ in range(10):
        s.update_on_episode(0, {0})
    assert len(s.windows[0]) == 4


def test_confusion_rows_are_frequencies():
    s = sampler_with({0: 5, 1: 5, 2: 1}, {0: [{0, 1}, {0}], 1: [{1, 2}], 2: [set()]})
    goals, m = s.confusion()
    assert goals == [0, 1, 2]
    assert m.shape == (3, 3) and ((0 <= m) & (m <= 1)).all()
    assert m[0, 0] == 1.0 and m[0, 1] == 0.5 and m[1, 2] == 1.0


def test_invalid_parameters():
    with pytest.raises(ValueError):
        GoalSampler(3, epsilon=1.5)
    with pytest.raises(ValueError):
        GoalSampler(3, window=0)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_curriculum_shift_and_rarity_monotonicity(data):
    n = data.draw(st.integers(2, 5))
    counts = {g: data.draw(st.integers(1, 50)) for g in range(n)}
    windows = {t: [data.draw(st.frozensets(st.integers(0, n - 1), max_size=n)) for _ in range(data.draw(st.integers(1, 6)))]
               for t in range(n)}
    s = sampler_with(counts, windows)
    i = data.draw(st.integers(0, n - 1))
    before = {t: s.value(t) for t in range(n)}
    r0 = s.rarity(i)
    s.counts[i] += data.draw(st.integers(1, 10))
    assert s.rarity(i) < r0
    for t in range(n):
        if s.freq(i, t) > 0:
            assert s.value(t) < before[t]
        else:
            assert s.value(t) == before[t]
