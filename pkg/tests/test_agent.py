import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curiopath.agent import (TrainConfig, action_probabilities, actor_loss_grad, advantage,
                             compute_returns, critic_loss_grad, episode_score, make_policy_net,
                             make_value_net, random_policy_baseline, sample_action,
                             td_advantage, train, values)
from curiopath.harness import dp_oracle
from curiopath.neuralnet import Mlp
from curiopath.scenario import AssessmentSpec


def _fd(f, params, h=1e-6):
    out = np.empty_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        up = f()
        params[i] = old - h
        down = f()
        params[i] = old
        out[i] = (up - down) / (2 * h)
    return out


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


def _tiny(rng, head, n_out):
    K = int(rng.integers(2, 5))
    dims = [K, int(rng.integers(2, 6)), int(rng.integers(2, 6)), n_out]
    net = Mlp.create(dims, head, rng)
    net.params += rng.normal(0, 0.1, net.params.size)
    return net, rng.random((int(rng.integers(1, 6)), K))


def test_critic_gradient_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(100):
        net, states = _tiny(rng, "identity", 1)
        returns = rng.normal(0, 3, states.shape[0])
        loss, grad = critic_loss_grad(net, states, returns)
        assert loss == pytest.approx(np.sum((returns - values(net, states)) ** 2))
        numeric = _fd(lambda: critic_loss_grad(net, states, returns)[0], net.params)
        assert _rel_err(grad, numeric) < 1e-4


def test_actor_gradient_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        D = int(rng.integers(2, 6))
        net, states = _tiny(rng, "softmax", D)
        actions = rng.integers(0, D, states.shape[0])
        adv = rng.normal(0, 2, states.shape[0])
        obj, grad = actor_loss_grad(net, states, actions, adv)
        logp = np.log([action_probabilities(net, s)[a] for s, a in zip(states, actions)])
        assert obj == pytest.approx(logp @ adv)
        numeric = _fd(lambda: actor_loss_grad(net, states, actions, adv)[0], net.params)
        assert _rel_err(grad, numeric) < 1e-4


def test_critic_zero_at_fit_and_linear_in_residual():
    rng = np.random.default_rng(2)
    net, states = _tiny(rng, "identity", 1)
    v = values(net, states)
    loss, grad = critic_loss_grad(net, states, v)
    assert loss == 0 and np.all(grad == 0)
    _, g1 = critic_loss_grad(net, states, v + 0.7)
    _, g2 = critic_loss_grad(net, states, v + 1.4)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12)


def test_actor_zero_and_scaling():
    rng = np.random.default_rng(3)
    net, states = _tiny(rng, "softmax", 4)
    actions = rng.integers(0, 4, states.shape[0])
    _, g0 = actor_loss_grad(net, states, actions, np.zeros(states.shape[0]))
    assert np.all(g0 == 0)
    _, g1 = actor_loss_grad(net, states, actions, np.ones(states.shape[0]))
    _, gc = actor_loss_grad(net, states, actions, np.full(states.shape[0], -2.5))
    np.testing.assert_allclose(gc, -2.5 * g1, rtol=1e-12)


def test_ascent_step_raises_taken_action_probability():
    rng = np.random.default_rng(4)
    pol = make_policy_net(4, 4, 16, 0.01, rng)
    s = np.array([1.0, 0.0, 0.0, 0.0])
    before = action_probabilities(pol.net, s)[2]
    _, g = actor_loss_grad(pol.net, s, [2], [1.0])
    pol.apply(-g)
    assert action_probabilities(pol.net, s)[2] > before


@pytest.mark.parametrize("rewards, terminal, expected", [
    ([1, 2], 0.0, [3, 2]),
    ([1, 2], 0.5, [3.5, 2.5]),
    ([0, 0, 0], 4.0, [4, 4, 4]),
])
def test_returns_examples(rewards, terminal, expected):
    np.testing.assert_allclose(compute_returns(rewards, terminal), expected)


def test_returns_match_suffix_sums():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        r = rng.normal(size=int(rng.integers(1, 30)))
        brute = [sum(r[i:]) for i in range(len(r))]
        np.testing.assert_allclose(compute_returns(r, 0.0), brute, rtol=1e-12, atol=1e-12)


def test_advantage_examples():
    assert td_advantage(1.0, 2.0, 2.5) == 0.5
    assert advantage(3.0, 3.0) == 0
    assert advantage(2.0, 3.0) == -1


def test_sampling_uniform_for_zero_net(rng):
    pol = Mlp.zeros([4, 8, 8, 8, 5], "softmax")
    draws = np.bincount([sample_action(pol, np.zeros(4), rng) for _ in range(100_000)],
                        minlength=5) / 100_000
    np.testing.assert_allclose(draws, 0.2, atol=0.02 * 0.2 + 0.003)


def test_sampling_peaked_logits(rng):
    pol = Mlp.zeros([2, 4], "softmax")
    pol.layer(0)[1][:] = [10, 0, 0, 0]
    draws = np.array([sample_action(pol, np.zeros(2), rng) for _ in range(100_000)])
    assert np.mean(draws == 0) > 0.999


@given(st.integers(0, 2**32 - 1))
def test_policy_output_is_distribution(seed):
    rng = np.random.default_rng(seed)
    pol = make_policy_net(10, 15, 32, 0.001, rng)
    p = action_probabilities(pol.net, rng.random(10) * 5)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


def test_network_shapes():
    rng = np.random.default_rng(0)
    assert make_policy_net(4, 4, 64, 1e-3, rng).net.dims.tolist() == [4, 64, 64, 64, 4]
    assert make_value_net(10, 32, 1e-3, rng).net.dims.tolist() == [10, 32, 32, 32, 1]


def test_train_is_deterministic(cont1):
    cfg = TrainConfig(episodes=6, seed=7)
    a, b = train(cont1, cfg), train(cont1, cfg)
    np.testing.assert_array_equal(a.scores, b.scores)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.policy.params, b.policy.params)
    c = train(cont1, TrainConfig(episodes=6, seed=8))
    assert not np.array_equal(a.scores, c.scores)


@pytest.mark.parametrize("bad", [dict(episodes=0), dict(episodes=5, workers=0),
                                 dict(episodes=5, hidden_width=0)])
def test_invalid_config(discrete, bad):
    with pytest.raises(ValueError):
        train(discrete, TrainConfig(**bad))


def test_multi_worker_invariants(discrete):
    res = train(discrete, TrainConfig(episodes=60, workers=3, seed=1, memory_capacity=100))
    assert res.scores.shape == (60,) and not np.any(np.isnan(res.scores))
    assert np.all((res.scores >= 0) & (res.scores <= 100))
    assert res.commits == 60
    assert np.all((res.lengths >= 1) & (res.lengths <= discrete.horizon))
    p = action_probabilities(res.policy, np.zeros(4))
    assert abs(p.sum() - 1) < 1e-9


def test_train_logs_true_terminal_score(discrete):
    res = train(discrete, TrainConfig(episodes=30, seed=3))
    allowed = {round(episode_score(discrete, s), 9) for s in discrete.admissible_states}
    assert {round(x, 9) for x in res.scores} <= allowed
    # early stop only at full mastery
    short = res.lengths < discrete.horizon
    assert np.all(res.scores[short] == 100.0)


def test_random_baseline(discrete):
    res = random_policy_baseline(discrete, 5000, seed=0)
    assert res.scores.shape == (5000,)
    assert res.scores.mean() < dp_oracle(discrete).optimal_score
    freq = res.action_counts / res.action_counts.sum()
    assert res.action_counts.sum() > 50_000
    np.testing.assert_allclose(freq, 0.25, atol=0.01)
    with pytest.raises(ValueError):
        random_policy_baseline(discrete, 0)


def test_learning_signal(discrete):
    # later episodes beat early ones for most seeds
    wins = 0
    for seed in range(3):
        s = train(discrete, TrainConfig(episodes=5000, seed=seed)).scores
        wins += s[4000:].mean() > s[:1000].mean()
    assert wins >= 2


def test_shorter_run_is_prefix_of_longer(discrete):
    # harness reuses the head of long runs as the short-run curves
    cfg = dict(seed=5, assessment=AssessmentSpec("dina", 4))
    short = train(discrete, TrainConfig(episodes=300, **cfg))
    long = train(discrete, TrainConfig(episodes=600, **cfg))
    np.testing.assert_array_equal(short.scores, long.scores[:300])
    np.testing.assert_array_equal(short.rewards, long.rewards[:300])
