import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from curiopath.environment import (Environment, chi_square, continuous_transition, gate,
                                   is_mastered, run_episode, step_continuous, step_discrete)
from curiopath.scenario import load_scenario


def test_gate_zero_state_opens_roots_only(cont1):
    g = gate(np.zeros(10), cont1.graph)
    assert np.flatnonzero(g).tolist() == [0, 2, 3]


@pytest.mark.parametrize("fixture", ["discrete", "cont1", "cont2"])
def test_gate_all_ones(fixture, request):
    sc = request.getfixturevalue(fixture)
    np.testing.assert_array_equal(gate(np.ones(sc.n_points), sc.graph), 1.0)


# hand-enumerated AND cases; points are 1-based
GATE_CASES_ONE = [
    ({1: 0.69}, 2, 0),             # 1 -> 2 needs 0.7
    ({1: 0.7}, 2, 1),
    ({2: 0.6}, 5, 1),
    ({2: 0.59}, 6, 0),
    ({3: 0.7}, 7, 1),
    ({3: 0.65}, 8, 1),
    ({3: 0.65}, 7, 0),
    ({4: 0.7}, 9, 1),
    ({6: 0.6}, 10, 1),
]

GATE_CASES_TWO = [
    ({5: 0.5, 6: 0.5}, 11, 1),      # both parents at 0.5
    ({5: 0.5, 6: 0.49}, 11, 0),
    ({5: 0.49, 6: 0.9}, 11, 0),
    ({1: 0.6, 2: 0.5}, 5, 1),
    ({1: 0.6, 2: 0.4}, 5, 0),
    ({4: 0.6, 9: 0.5}, 7, 1),
    ({4: 0.6, 9: 0.4}, 7, 0),
    ({12: 0.5, 15: 0.5}, 16, 1),
    ({12: 0.5}, 16, 0),
    ({4: 0.5, 9: 0.6}, 13, 1),
    ({2: 0.7, 4: 0.5}, 10, 1),
    ({2: 0.69, 4: 0.5}, 10, 0),
]


def gate_case_holds(scenario, setting, point, expected):
    s = np.zeros(scenario.n_points)
    for k, v in setting.items():
        s[k - 1] = v
    return gate(s, scenario.graph)[point - 1] == expected


@pytest.mark.parametrize("setting, point, expected", GATE_CASES_ONE)
def test_gate_case_one(cont1, setting, point, expected):
    assert gate_case_holds(cont1, setting, point, expected)


@pytest.mark.parametrize("setting, point, expected", GATE_CASES_TWO)
def test_gate_case_two(cont2, setting, point, expected):
    assert gate_case_holds(cont2, setting, point, expected)


def test_discrete_step_probabilities(discrete, rng):
    P = discrete.transition.matrices
    n = 100_000
    hits = sum(step_discrete(1, 1, P, rng) == 2 for _ in range(n))
    assert abs(hits / n - 0.6) < 0.01
    assert all(step_discrete(4, a, P, rng) == 4 for a in range(4) for _ in range(100))


def test_continuous_transition_examples():
    s = np.array([0.0, 0.3, 1.0, 0.2])
    w = np.array([1.0, 0.0, 0.7, 0.5])
    g = np.array([1.0, 1.0, 1.0, 0.0])
    out = continuous_transition(s, w, g, 2.0)
    assert out[0] == pytest.approx(1 - np.exp(-2), abs=1e-12)
    assert out[0] == pytest.approx(0.864665, abs=1e-6)
    assert out[1] == pytest.approx(s[1], abs=1e-15)   # untrained
    assert out[2] == 1.0    # already mastered
    assert out[3] == pytest.approx(s[3], abs=1e-15)   # gated


_CONT1 = load_scenario("continuous_case_1")


@given(st.lists(st.floats(0, 1), min_size=10, max_size=10), st.integers(0, 14),
       st.integers(0, 2**32 - 1))
def test_step_continuous_monotone_bounded(state, action, seed):
    sc = _CONT1
    s = np.array(state)
    out = step_continuous(s, sc.actions[action], sc.graph, np.random.default_rng(seed))
    assert np.all(out >= s) and np.all(out <= 1.0)


@pytest.mark.parametrize("df", [1, 2, 8, 2.5])
def test_chi_square_law(df):
    rng = np.random.default_rng(7)
    x = np.array([chi_square(df, rng) for _ in range(20_000)])
    assert stats.kstest(x, stats.chi2(df).cdf).pvalue > 0.001


def test_episode_shapes(discrete, rng):
    tr = run_episode(discrete, lambda s: int(rng.integers(4)), None, rng)
    assert len(tr) == 15
    assert tr.true_states.shape == (16, 4)
    np.testing.assert_array_equal(tr.estimates, tr.true_states)
    np.testing.assert_array_equal(tr.estimates[0], discrete.initial_state)
    assert any(np.array_equal(tr.final_state, s) for s in discrete.admissible_states)


def test_always_d1_never_beyond_s2(discrete, rng):
    for _ in range(200):
        tr = run_episode(discrete, lambda s: 0, None, rng)
        assert tr.final_state[1:].sum() == 0


def test_horizon_one(discrete, rng):
    tr = run_episode(discrete.with_horizon(1), lambda s: 0, None, rng)
    assert len(tr) == 1 and tr.true_states.shape == (2, 4)


def test_stop_at_mastery(discrete, rng):
    policy = lambda s: int(np.argmin(s)) if s.min() == 0 else 0  # noqa: E731
    for _ in range(50):
        tr = run_episode(discrete, policy, None, rng, stop_at_mastery=True)
        if tr.terminated:
            assert is_mastered(tr.final_state, True) and len(tr) <= 15
            assert not any(is_mastered(s, True) for s in tr.true_states[:-1])
        else:
            assert len(tr) == 15


def test_no_retrograde_discrete(discrete, rng):
    env = Environment(discrete)
    for _ in range(200):
        env.reset()
        last = env.index
        for _ in range(15):
            env.step(int(rng.integers(4)), rng)
            assert env.index >= last
            last = env.index


def test_gating_soundness(cont2, rng):
    # only root-level materials: point 16 is never unlocked and must stay at 0
    tr = run_episode(cont2, lambda s: 0, None, rng)
    assert tr.final_state[15] == 0.0
    assert np.all(np.diff(tr.true_states, axis=0) >= 0)


def test_reward_fn_and_assessor_are_called(cont1, rng):
    seen = []

    def assessor(s_next, s_hat, a):
        seen.append(a)
        return np.clip(s_next + 0.01, 0, 1)

    tr = run_episode(cont1, lambda s: 3, assessor, rng, reward_fn=lambda s, a, n: float(a))
    assert seen == [3] * 25
    np.testing.assert_array_equal(tr.rewards, 3.0)
    assert not np.array_equal(tr.estimates[1:], tr.true_states[1:])
