"""Psychometric assessment: simulated quizzes and point estimates of mastery.

Each call to an assessor draws a fresh item bank (a new quiz per step),
simulates the learner's responses from the true state and returns the
estimate the recommender acts on.

DINA (discrete mode)
    P(correct) = 1 - slip if the learner holds every point the item
    requires, else guess. Estimation is exhaustive maximum likelihood over
    the admissible mastery profiles.

M3PL (continuous mode)
    P(correct) = c + (1 - c) * sigmoid(a . theta - b), theta = logit(s).
    Estimation maximises the log-likelihood minus ``lam * |theta - theta0|^2``
    where ``theta0`` is the previous estimate's logit, then maps back
    through the logistic function.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scenario import AssessmentSpec, PrerequisiteGraph, Scenario

ANCESTOR_PROB = 0.3


class M3plConvergenceWarning(RuntimeWarning):
    pass


# ------------------------------------------------------------------- DINA

@dataclass
class DinaItemBank:
    q_matrix: np.ndarray  # (J, K) bool
    slip: np.ndarray
    guess: np.ndarray

    @property
    def n_items(self) -> int:
        return int(self.slip.shape[0])


def generate_dina_bank(n_items: int, graph: PrerequisiteGraph, rng: np.random.Generator,
                       slip_guess_range=(0.1, 0.3), ancestor_prob: float = ANCESTOR_PROB,
                       ancestors: list[list[int]] | None = None) -> DinaItemBank:
    """Item ``j`` requires point ``j mod K``, plus one random ancestor with
    probability ``ancestor_prob``."""
    K = graph.n_points
    if ancestors is None:
        ancestors = [graph.ancestors(k) for k in range(K)]
    q = np.zeros((n_items, K), dtype=bool)
    for j in range(n_items):
        k = j % K
        q[j, k] = True
        anc = ancestors[k]
        if anc and rng.random() < ancestor_prob:
            q[j, anc[rng.integers(len(anc))]] = True
    lo, hi = slip_guess_range
    slip = rng.uniform(lo, hi, n_items)
    guess = rng.uniform(lo, hi, n_items)
    return DinaItemBank(q, slip, guess)


def dina_correct_prob(state, bank: DinaItemBank) -> np.ndarray:
    mastered = np.asarray(state) >= 0.5
    eta = np.all(mastered[None, :] | ~bank.q_matrix, axis=1)
    return np.where(eta, 1.0 - bank.slip, bank.guess)


def dina_simulate_responses(true_state, bank: DinaItemBank, rng: np.random.Generator) -> np.ndarray:
    p = dina_correct_prob(true_state, bank)
    return (rng.random(p.shape[0]) < p).astype(np.float64)


def dina_loglik(responses, bank: DinaItemBank, states: np.ndarray) -> np.ndarray:
    """Log-likelihood of one response vector under each candidate profile."""
    mastered = np.asarray(states) >= 0.5
    # eta[s, j]: profile s holds every requirement of item j
    eta = ~np.any(bank.q_matrix[None, :, :] & ~mastered[:, None, :], axis=2)
    y = np.asarray(responses, dtype=float)
    log_hit = np.where(eta, np.log1p(-bank.slip), np.log(bank.guess))
    log_miss = np.where(eta, np.log(bank.slip), np.log1p(-bank.guess))
    return log_hit @ y + log_miss @ (1.0 - y)


def dina_mle(responses, bank: DinaItemBank, admissible: np.ndarray) -> np.ndarray:
    """Most likely admissible profile; ties go to the earliest (least mastered) row."""
    admissible = np.asarray(admissible, dtype=float)
    if admissible.shape[0] == 0:
        raise ValueError("no admissible states")
    if bank.n_items == 0:
        return admissible[0].copy()
    ll = dina_loglik(responses, bank, admissible)
    return admissible[int(np.argmax(ll))].copy()


# ------------------------------------------------------------------- M3PL

@dataclass(frozen=True)
class M3plConfig:
    """Item-generation and estimation settings for the M3PL assessor.

    ``structure="simple"`` gives every item one loading, on a recently
    trained point with probability ``focus_prob`` and otherwise on a uniform
    random point. ``structure="compensatory"`` loads every item on all
    points, ``focus_loading`` on recently trained ones and ``other_loading``
    elsewhere.
    """

    structure: str = "simple"
    focus_prob: float = 0.5
    focus_loading: float = 1.0
    other_loading: float = 0.3
    guess_max: float = 0.25
    clamp: float = 0.05
    max_iter: int = 200
    tol: float = 1e-8


DEFAULT_M3PL = M3plConfig()


@dataclass
class M3plItemBank:
    discrimination: np.ndarray  # (J, K), nonnegative
    difficulty: np.ndarray
    guessing: np.ndarray

    @property
    def n_items(self) -> int:
        return int(self.difficulty.shape[0])


def generate_m3pl_bank(n_items: int, n_points: int, rng: np.random.Generator,
                       focus=(), config: M3plConfig = DEFAULT_M3PL) -> M3plItemBank:
    focus = list(focus)
    a = np.zeros((n_items, n_points))
    if config.structure == "compensatory":
        a[:] = config.other_loading
        if focus:
            a[:, focus] = config.focus_loading
    elif config.structure == "simple":
        for j in range(n_items):
            if focus and rng.random() < config.focus_prob:
                k = focus[rng.integers(len(focus))]
            else:
                k = rng.integers(n_points)
            a[j, k] = config.focus_loading
    else:
        raise ValueError(f"unknown item structure {config.structure!r}")
    b = rng.standard_normal(n_items)
    c = rng.uniform(0.0, config.guess_max, n_items)
    return M3plItemBank(a, b, c)


def to_latent(state, clamp: float = DEFAULT_M3PL.clamp) -> np.ndarray:
    s = np.clip(np.asarray(state, dtype=float), clamp, 1.0 - clamp)
    return np.log(s) - np.log1p(-s)


def m3pl_correct_prob(true_state, bank: M3plItemBank, clamp: float = DEFAULT_M3PL.clamp) -> np.ndarray:
    z = bank.discrimination @ to_latent(true_state, clamp) - bank.difficulty
    return bank.guessing + (1.0 - bank.guessing) / (1.0 + np.exp(-z))


def m3pl_simulate_responses(true_state, bank: M3plItemBank, rng: np.random.Generator,
                            clamp: float = DEFAULT_M3PL.clamp) -> np.ndarray:
    p = m3pl_correct_prob(true_state, bank, clamp)
    return (rng.random(p.shape[0]) < p).astype(np.float64)


def default_penalty(n_items: int) -> float:
    return 1.0 / n_items if n_items > 0 else 1.0


def m3pl_estimate(responses, bank: M3plItemBank, prior_estimate, lam: float | None = None,
                  config: M3plConfig = DEFAULT_M3PL, return_info: bool = False):
    """Penalised maximum-likelihood mastery estimate, in (0, 1).

    With no items the prior estimate is returned unchanged. If the ascent
    runs out of iterations before the scaled step drops below ``tol``, the
    best iterate is returned and an :class:`M3plConvergenceWarning` is issued.
    """
    prior_estimate = np.asarray(prior_estimate, dtype=float)
    if bank.n_items == 0:
        out = prior_estimate.copy()
        return (out, (0, True)) if return_info else out
    lam = default_penalty(bank.n_items) if lam is None else float(lam)
    theta0 = to_latent(prior_estimate, config.clamp)
    theta, iters, converged = kernels.m3pl_ascent(
        theta0, theta0, lam,
        np.ascontiguousarray(bank.discrimination), bank.difficulty, bank.guessing,
        np.asarray(responses, dtype=float), config.max_iter, config.tol)
    if not converged:
        warnings.warn(f"M3PL estimate stopped after {iters} iterations without meeting "
                      f"tol={config.tol}", M3plConvergenceWarning, stacklevel=2)
    out = 1.0 / (1.0 + np.exp(-np.clip(theta, -30.0, 30.0)))
    return (out, (int(iters), bool(converged))) if return_info else out


# ---------------------------------------------------------------- dispatch

class Assessor:
    """Per-scenario assessment callable: ``assessor(true_next, prior, action, rng)``.

    ``spec=None`` is perfect assessment, like kind ``none``; the scenario's
    own ``assessment`` field is not consulted.
    """

    def __init__(self, scenario: Scenario, spec: AssessmentSpec | None = None,
                 m3pl_config: M3plConfig = DEFAULT_M3PL):
        self.scenario = scenario
        self.spec = AssessmentSpec() if spec is None else spec
        self.config = m3pl_config
        if self.spec.kind == "dina":
            if not scenario.is_discrete:
                raise ValueError("DINA assessment needs a discrete scenario")
            self._admissible = scenario.admissible_states
            self._ancestors = [scenario.graph.ancestors(k) for k in range(scenario.n_points)]
        elif self.spec.kind == "m3pl" and scenario.is_discrete:
            raise ValueError("M3PL assessment needs a continuous scenario")
        self._focus = [list(a.trained_points) for a in scenario.actions]

    @property
    def perfect(self) -> bool:
        return self.spec.kind == "none"

    def __call__(self, true_state, prior_estimate, action: int | None,
                 rng: np.random.Generator) -> np.ndarray:
        kind = self.spec.kind
        if kind == "none":
            return np.array(true_state, dtype=float)
        if kind == "dina":
            bank = generate_dina_bank(self.spec.n_items, self.scenario.graph, rng,
                                      self.spec.slip_guess_range, ancestors=self._ancestors)
            y = dina_simulate_responses(true_state, bank, rng)
            return dina_mle(y, bank, self._admissible)
        focus = self._focus[action] if action is not None else ()
        bank = generate_m3pl_bank(self.spec.n_items, self.scenario.n_points, rng, focus, self.config)
        y = m3pl_simulate_responses(true_state, bank, rng, self.config.clamp)
        return m3pl_estimate(y, bank, prior_estimate, config=self.config)


def assess(true_state, spec: AssessmentSpec | None, prior_estimate, rng: np.random.Generator,
           scenario: Scenario | None = None, action: int | None = None,
           m3pl_config: M3plConfig = DEFAULT_M3PL) -> np.ndarray:
    """One-shot assessment. ``spec=None`` or kind ``none`` is the identity."""
    if spec is None or spec.kind == "none":
        return np.array(true_state, dtype=float)
    if scenario is None:
        raise ValueError("DINA and M3PL assessment need the scenario")
    return Assessor(scenario, spec, m3pl_config)(true_state, prior_estimate, action, rng)
