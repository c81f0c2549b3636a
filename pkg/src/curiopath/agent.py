"""Actor-critic recommender trained on curiosity rewards.

Each episode rolls one learner through the scenario with the current
policy. Every step the curiosity module scores the transition and trains
its predictor. After the episode the undiscounted returns

    r_i = R_i + r_{i+1},   r_end = 0

drive one Adam step on the critic loss ``sum (r_i - V(s_hat_i))^2`` and one
ascent step on ``sum log pi(a_i | s_hat_i) * (r_i - V(s_hat_i))``.

With ``workers > 1`` the episodes are shared among threads in the A3C
style: a worker snapshots the global networks when it starts an episode
and commits its two gradient sets as whole Adam steps under a lock, so
other workers may see stale parameters but never a half-applied update.
``workers=1`` runs inline and is bit-for-bit reproducible for a seed.

Every rollout is a whole episode, so its last state is terminal whether the
learner reached full mastery or the horizon. Seeding the recursion with
``V(s_hat_T)`` at the horizon (``bootstrap_horizon=True``) is kept for
comparison only: the value net has no clock, so the bootstrap chains episode
onto episode, V grows without bound and unmastered endings end up worth more
than mastery.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .assessment import DEFAULT_M3PL, Assessor, M3plConfig
from .curiosity import BATCH_SIZE, MEMORY_CAPACITY, CuriosityModule, Predictor
from .environment import Environment, run_episode
from .neuralnet import Mlp, Trainable, softmax
from .scenario import AssessmentSpec, Scenario

AC_LR = {"discrete": 0.0006, "continuous": 0.0005}
AC_DEPTH = 3


def make_policy_net(n_points: int, n_actions: int, width: int, learning_rate: float,
                    rng: np.random.Generator) -> Trainable:
    return Trainable.create([n_points, *(width,) * AC_DEPTH, n_actions], "softmax",
                            learning_rate, rng)


def make_value_net(n_points: int, width: int, learning_rate: float,
                   rng: np.random.Generator) -> Trainable:
    return Trainable.create([n_points, *(width,) * AC_DEPTH, 1], "identity", learning_rate, rng)


def action_probabilities(policy: Mlp, s_hat) -> np.ndarray:
    x = np.asarray(s_hat, dtype=float).reshape(1, -1)
    logits, _ = kernels.mlp_forward(policy.params, policy.dims, x)
    return softmax(logits[0])


def sample_action(policy: Mlp, s_hat, rng: np.random.Generator) -> int:
    probs = action_probabilities(policy, s_hat)
    j = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return min(j, probs.shape[0] - 1)


def compute_returns(rewards, terminal_value: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = float(terminal_value)
    for i in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[i] + acc
        out[i] = acc
    return out


def advantage(r_return: float, value_estimate: float) -> float:
    return r_return - value_estimate


def td_advantage(reward: float, next_value: float, value: float) -> float:
    """One-step form ``R + V(s') - V(s)``."""
    return reward + next_value - value


def values(value_net: Mlp, states) -> np.ndarray:
    x = np.ascontiguousarray(np.atleast_2d(states), dtype=float)
    out, _ = kernels.mlp_forward(value_net.params, value_net.dims, x)
    return out[:, 0]


def critic_loss_grad(value_net: Mlp, states, returns) -> tuple[float, np.ndarray]:
    """Loss ``sum_i (returns_i - V(states_i))^2`` and its gradient (descent orientation)."""
    x = np.ascontiguousarray(np.atleast_2d(states), dtype=float)
    v, acts = kernels.mlp_forward(value_net.params, value_net.dims, x)
    resid = np.asarray(returns, dtype=float) - v[:, 0]
    grad = kernels.mlp_backward(value_net.params, value_net.dims, acts,
                                np.ascontiguousarray(-2.0 * resid[:, None]))
    return float(resid @ resid), grad


def actor_loss_grad(policy: Mlp, states, actions, advantages) -> tuple[float, np.ndarray]:
    """Objective ``sum_i log pi(a_i|s_i) * A_i`` and its gradient (ascent orientation).

    Advantages are constants here; no gradient flows into the critic.
    """
    x = np.ascontiguousarray(np.atleast_2d(states), dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(advantages, dtype=float)
    logits, acts = kernels.mlp_forward(policy.params, policy.dims, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(actions.shape[0])
    logp = shifted[rows, actions] - log_z
    g_logits = -np.exp(shifted - log_z[:, None])
    g_logits[rows, actions] += 1.0
    g_logits *= adv[:, None]
    grad = kernels.mlp_backward(policy.params, policy.dims, acts, np.ascontiguousarray(g_logits))
    return float(logp @ adv), grad


def episode_score(scenario: Scenario, true_final_state) -> float:
    return 100.0 * float(np.dot(scenario.eval_weights, true_final_state))


# 64-wide layers train fine at first but flip to a degenerate policy after a
# few thousand episodes far more often than 32-wide ones (see README).
DEFAULT_HIDDEN_WIDTH = 32


@dataclass
class TrainConfig:
    """Training run settings. ``None`` learning rates pick the mode defaults."""

    episodes: int
    workers: int = 1
    seed: int = 0
    lr_actor_critic: float | None = None
    lr_predictor: float | None = None
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    memory_capacity: int = MEMORY_CAPACITY
    batch_size: int = BATCH_SIZE
    assessment: AssessmentSpec | None = None
    m3pl: M3plConfig = DEFAULT_M3PL
    stop_at_mastery: bool = True
    bootstrap_horizon: bool = False

    def validate(self) -> None:
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.hidden_width < 1 or self.batch_size < 1 or self.memory_capacity < 1:
            raise ValueError("widths, batch size and memory capacity must be >= 1")


@dataclass
class TrainResult:
    policy: Mlp
    value: Mlp
    scores: np.ndarray
    rewards: np.ndarray
    lengths: np.ndarray
    commits: int = 0
    predictor: Predictor | None = field(default=None, repr=False)


class _Globals:
    def __init__(self, policy: Trainable, value: Trainable):
        self.policy = policy
        self.value = value
        self.lock = threading.Lock()
        self.commits = 0
        self.next_episode = 0

    def snapshot(self) -> tuple[Mlp, Mlp]:
        with self.lock:
            return self.policy.net.copy(), self.value.net.copy()

    def commit(self, actor_grad: np.ndarray, critic_grad: np.ndarray) -> None:
        with self.lock:
            self.policy.apply(-actor_grad)
            self.value.apply(critic_grad)
            self.commits += 1


def _run_worker(scenario: Scenario, cfg: TrainConfig, glob: _Globals, curiosity: CuriosityModule,
                rng: np.random.Generator, scores, rewards, lengths, inline: bool,
                progress: Callable[[int, float], None] | None) -> None:
    env = Environment(scenario)
    assessor = Assessor(scenario, cfg.assessment, cfg.m3pl)
    assess = None if assessor.perfect else (lambda s, prior, a: assessor(s, prior, a, rng))
    while True:
        with glob.lock:
            ep = glob.next_episode
            if ep >= cfg.episodes:
                return
            glob.next_episode += 1
        if inline:
            pol, val = glob.policy.net, glob.value.net
        else:
            pol, val = glob.snapshot()
        traj = run_episode(
            scenario,
            lambda s_hat: sample_action(pol, s_hat, rng),
            assess,
            rng,
            reward_fn=lambda s_hat, a, s_next: curiosity.step(s_hat, a, s_next, rng),
            stop_at_mastery=cfg.stop_at_mastery,
            env=env,
        )
        states = traj.estimates[:-1]
        if cfg.bootstrap_horizon and not traj.terminated:
            terminal = float(values(val, traj.estimates[-1])[0])
        else:
            terminal = 0.0
        returns = compute_returns(traj.rewards, terminal)
        _, critic_grad = critic_loss_grad(val, states, returns)
        adv = returns - values(val, states)
        _, actor_grad = actor_loss_grad(pol, states, traj.actions, adv)
        glob.commit(actor_grad, critic_grad)
        scores[ep] = episode_score(scenario, traj.final_state)
        rewards[ep] = float(traj.rewards.sum())
        lengths[ep] = len(traj)
        if progress is not None:
            progress(ep, scores[ep])


def train(scenario: Scenario, config: TrainConfig,
          progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Train a curiosity-driven policy; logs ``100 * w . s_true(end)`` per episode."""
    config.validate()
    mode = scenario.mode
    lr_ac = AC_LR[mode] if config.lr_actor_critic is None else config.lr_actor_critic
    init_seq, *worker_seqs = np.random.SeedSequence(config.seed).spawn(config.workers + 1)
    init_rng = np.random.default_rng(init_seq)
    K, D = scenario.n_points, scenario.n_actions
    policy = make_policy_net(K, D, config.hidden_width, lr_ac, init_rng)
    value = make_value_net(K, config.hidden_width, lr_ac, init_rng)
    predictor = Predictor.for_mode(mode, K, D, config.hidden_width, init_rng, config.lr_predictor)
    curiosity = CuriosityModule(predictor, config.memory_capacity, config.batch_size)
    glob = _Globals(policy, value)

    M = config.episodes
    scores = np.full(M, np.nan)
    rewards = np.full(M, np.nan)
    lengths = np.zeros(M, dtype=np.int64)
    rngs = [np.random.default_rng(s) for s in worker_seqs]
    if config.workers == 1:
        _run_worker(scenario, config, glob, curiosity, rngs[0], scores, rewards, lengths,
                    True, progress)
    else:
        errors: list[BaseException] = []

        def target(r):
            try:
                _run_worker(scenario, config, glob, curiosity, r, scores, rewards, lengths,
                            False, progress)
            except BaseException as exc:  # surfaced after join
                errors.append(exc)

        threads = [threading.Thread(target=target, args=(r,), daemon=True) for r in rngs]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
    return TrainResult(policy.net, value.net, scores, rewards, lengths, glob.commits, predictor)


@dataclass
class BaselineResult:
    scores: np.ndarray
    lengths: np.ndarray
    action_counts: np.ndarray


def random_policy_baseline(scenario: Scenario, episodes: int, seed: int = 0,
                           stop_at_mastery: bool = True) -> BaselineResult:
    """Uniformly random recommendations, scored like :func:`train`."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    env = Environment(scenario)
    D = scenario.n_actions
    scores = np.empty(episodes)
    lengths = np.empty(episodes, dtype=np.int64)
    counts = np.zeros(D, dtype=np.int64)
    for ep in range(episodes):
        traj = run_episode(scenario, lambda _s: int(rng.integers(D)), None, rng,
                           stop_at_mastery=stop_at_mastery, env=env)
        scores[ep] = episode_score(scenario, traj.final_state)
        lengths[ep] = len(traj)
        counts += np.bincount(traj.actions, minlength=D)
    return BaselineResult(scores, lengths, counts)
