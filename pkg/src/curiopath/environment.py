"""Ground-truth learner dynamics.

The agent never sees these states directly; it only receives assessment
estimates. Discrete scenarios move between admissible mastery profiles
through per-action row-stochastic matrices. Continuous scenarios follow

    s' = 1 - (1 - s) * exp(-xi * W_a * gate(s)),   xi ~ chi-square(noise_df)

with one shared draw of ``xi`` per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .scenario import PrerequisiteGraph, Scenario

MASTERY_LEVEL = 0.999


def gate(state, graph: PrerequisiteGraph) -> np.ndarray:
    """Zero-one learnability vector: 1 where every incoming threshold is met."""
    state = np.asarray(state, dtype=float)
    out = np.ones(graph.n_points)
    par, chi, thr = graph.gate_arrays()
    if par.size:
        out[chi[state[par] < thr]] = 0.0
    return out


def chi_square(df: float, rng: np.random.Generator) -> float:
    """Sum of ``df`` squared normals for integer ``df``, gamma draw otherwise."""
    if float(df).is_integer() and df >= 1:
        z = rng.standard_normal(int(df))
        return float(z @ z)
    return float(rng.gamma(df / 2.0, 2.0))


def step_discrete(state_index: int, action: int, matrices: np.ndarray,
                  rng: np.random.Generator) -> int:
    row = matrices[action, state_index]
    j = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return min(j, row.shape[0] - 1)


def continuous_transition(state, weights, gate_vec, xi: float) -> np.ndarray:
    """Deterministic part of the continuous update for a given noise draw.

    Written as ``s + (1 - s)(1 - exp(-x))`` so that untouched points keep
    their exact value and rounding never moves a point backwards.
    """
    state = np.asarray(state, dtype=float)
    gain = -np.expm1(-xi * np.asarray(weights) * gate_vec)
    return np.minimum(state + (1.0 - state) * gain, 1.0)


def step_continuous(state, material, graph: PrerequisiteGraph, rng: np.random.Generator,
                    noise_df: float = 2.0) -> np.ndarray:
    weights = getattr(material, "training_weights", material)
    xi = chi_square(noise_df, rng)
    return continuous_transition(state, weights, gate(state, graph), xi)


def is_mastered(state, discrete: bool) -> bool:
    state = np.asarray(state)
    if discrete:
        return bool(np.all(state == 1.0))
    return bool(np.all(state >= MASTERY_LEVEL))


class Environment:
    """Stateful single-learner simulator for one scenario.

    Discrete mode tracks the admissible-state index alongside the mastery
    vector; :attr:`state` is always the mastery vector.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.discrete = scenario.is_discrete
        self._graph = scenario.graph
        self._gate = scenario.graph.gate_arrays()
        self._weights = scenario.weight_matrix
        if self.discrete:
            self._states = scenario.admissible_states
            self._cum = np.cumsum(np.asarray(scenario.transition.matrices, float), axis=2)
        else:
            self._df = float(scenario.transition.noise_df)
        self.reset()

    def reset(self) -> np.ndarray:
        init = np.asarray(self.scenario.initial_state, dtype=float)
        if self.discrete:
            self.index = self.scenario.state_index(init)
        self.state = init.copy()
        return self.state

    def gate(self, state=None) -> np.ndarray:
        state = self.state if state is None else np.asarray(state, dtype=float)
        par, chi, thr = self._gate
        out = np.ones(state.shape[0])
        if par.size:
            out[chi[state[par] < thr]] = 0.0
        return out

    def step(self, action: int, rng: np.random.Generator) -> np.ndarray:
        if self.discrete:
            cum = self._cum[action, self.index]
            j = int(np.searchsorted(cum, rng.random(), side="right"))
            self.index = min(j, cum.shape[0] - 1)
            self.state = self._states[self.index].copy()
        else:
            xi = chi_square(self._df, rng)
            self.state = continuous_transition(self.state, self._weights[action],
                                               self.gate(), xi)
        return self.state

    @property
    def mastered(self) -> bool:
        return is_mastered(self.state, self.discrete)


@dataclass
class Trajectory:
    """One episode.

    ``true_states`` and ``estimates`` have one more row than ``actions``:
    row ``t`` is the state before action ``t`` and the last row is the
    final state.
    """

    true_states: np.ndarray
    estimates: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminated: bool = False

    def __len__(self):
        return int(self.actions.shape[0])

    @property
    def final_state(self) -> np.ndarray:
        return self.true_states[-1]


Policy = Callable[[np.ndarray], int]
Assessor = Callable[[np.ndarray, np.ndarray, int], np.ndarray]
RewardFn = Callable[[np.ndarray, int, np.ndarray], float]


def run_episode(scenario: Scenario, policy: Policy, assessor: Assessor | None,
                rng: np.random.Generator, reward_fn: RewardFn | None = None,
                stop_at_mastery: bool = False, env: Environment | None = None) -> Trajectory:
    """Roll one learner through the horizon.

    ``policy(s_hat)`` picks an action from the current estimate,
    ``assessor(true_next, s_hat, action)`` returns the next estimate (None
    means perfect assessment), and ``reward_fn(s_hat, a, s_hat_next)``
    supplies the per-step reward. The first estimate equals the initial
    true state. With ``stop_at_mastery`` the episode ends as soon as the
    true state is fully mastered.
    """
    env = Environment(scenario) if env is None else env
    s = env.reset().copy()
    s_hat = s.copy()
    T = scenario.horizon
    K = scenario.n_points
    true_states = np.empty((T + 1, K))
    estimates = np.empty((T + 1, K))
    actions = np.empty(T, dtype=np.int64)
    rewards = np.zeros(T)
    true_states[0] = s
    estimates[0] = s_hat
    n = 0
    terminated = False
    for t in range(T):
        a = int(policy(s_hat))
        s_next = env.step(a, rng)
        s_hat_next = s_next.copy() if assessor is None else assessor(s_next, s_hat, a)
        if reward_fn is not None:
            rewards[t] = reward_fn(s_hat, a, s_hat_next)
        actions[t] = a
        true_states[t + 1] = s_next
        estimates[t + 1] = s_hat_next
        n = t + 1
        s_hat = s_hat_next
        if stop_at_mastery and env.mastered:
            terminated = True
            break
    return Trajectory(true_states[: n + 1], estimates[: n + 1], actions[:n], rewards[:n], terminated)
