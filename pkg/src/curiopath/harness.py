"""Experiment runner: settings x replications -> bucketed score curves and CSVs.

A *setting* names how the recommender is run on a scenario:

``Random``
    uniform random recommendations (no training).
``NO_DINA`` / ``NO_IRT``
    curiosity-driven training with perfect assessment.
``DINA_<J>`` / ``IRT_<J>``
    training on DINA (discrete) or M3PL (continuous) estimates from
    ``J`` items per step.
"""

from __future__ import annotations

import csv
import logging
import re
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agent import DEFAULT_HIDDEN_WIDTH, TrainConfig, random_policy_baseline, train
from .neuralnet import save_snapshot
from .scenario import AssessmentSpec, Scenario, load_scenario

log = logging.getLogger(__name__)

CSV_HEADER = ("bucket", "episode_end", "mean_score", "stderr_score", "mean_reward")
SUMMARY_HEADER = ("setting", "replications", "episodes", "buckets", "first_bucket_score",
                  "final_bucket_score", "final_bucket_stderr", "final_bucket_reward")

PAPER_EPISODES = {"discrete_case": 50000, "continuous_case_1": 50000, "continuous_case_2": 70000}
PAPER_REPLICATIONS = 100
DESK_EPISODES = 5000
DESK_REPLICATIONS = 10


def score(weights, terminal_state) -> float:
    """``100 * w . s(T)`` on the true terminal state."""
    return 100.0 * float(np.dot(weights, terminal_state))


@dataclass
class OracleResult:
    values: np.ndarray  # (T + 1, n_states): optimal expected score-to-go at step t
    policy: np.ndarray  # (T, n_states): an optimal action (lowest index among ties)
    q_values: np.ndarray  # (T, n_actions, n_states)
    initial_state: int

    @property
    def optimal_score(self) -> float:
        return float(self.values[0, self.initial_state])


def dp_oracle(scenario: Scenario) -> OracleResult:
    """Backward induction for the expected terminal score of a discrete scenario."""
    if not scenario.is_discrete:
        raise ValueError("dp_oracle needs a discrete scenario")
    P = np.asarray(scenario.transition.matrices, dtype=float)
    states = scenario.admissible_states
    T = scenario.horizon
    V = np.empty((T + 1, states.shape[0]))
    V[T] = 100.0 * states @ scenario.eval_weights
    Q = np.empty((T, P.shape[0], states.shape[0]))
    pol = np.empty((T, states.shape[0]), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        Q[t] = P @ V[t + 1]
        pol[t] = np.argmax(Q[t], axis=0)
        V[t] = Q[t].max(axis=0)
    return OracleResult(V, pol, Q, scenario.state_index(scenario.initial_state))


_SETTING = re.compile(r"^(NO_DINA|NO_IRT|DINA_(\d+)|IRT_(\d+)|RANDOM)$", re.IGNORECASE)


def parse_setting(name: str, scenario: Scenario | None = None) -> tuple[bool, AssessmentSpec]:
    """Map a setting label to ``(is_random, assessment spec)``."""
    m = _SETTING.match(name.strip())
    if not m:
        raise ValueError(f"unknown setting {name!r}")
    label = m.group(1).upper()
    if label == "RANDOM":
        return True, AssessmentSpec()
    if label.startswith("NO_"):
        spec = AssessmentSpec()
    elif label.startswith("DINA"):
        lo_hi = (scenario.assessment.slip_guess_range
                 if scenario is not None and scenario.assessment.kind == "dina" else (0.1, 0.3))
        spec = AssessmentSpec("dina", int(m.group(2)), lo_hi)
    else:
        spec = AssessmentSpec("m3pl", int(m.group(3)))
    if scenario is not None:
        wants_discrete = spec.kind == "dina" or label == "NO_DINA"
        if wants_discrete != scenario.is_discrete:
            kind = "discrete" if wants_discrete else "continuous"
            raise ValueError(f"{name} applies to {kind} scenarios")
    return False, spec


def replication_seed(base_seed: int, setting: str, replication: int) -> int:
    """Seed for one (setting, replication) run.

    The replication counter ``base_seed + replication`` is combined with a
    stable hash of the setting label, so adding or removing settings never
    changes the streams of the others.
    """
    tag = zlib.crc32(setting.upper().encode())
    ss = np.random.SeedSequence([base_seed + replication, tag])
    return int(ss.generate_state(1, np.uint64)[0])


def bucket_means(x: np.ndarray, bucket_size: int) -> np.ndarray:
    n = (x.shape[-1] // bucket_size) * bucket_size
    return x[..., :n].reshape(*x.shape[:-1], -1, bucket_size).mean(axis=-1)


@dataclass
class ScoreCurve:
    setting: str
    bucket_size: int
    per_replication: np.ndarray  # (R, B) bucket means of score
    per_replication_reward: np.ndarray  # (R, B) bucket means of episode curiosity reward

    @property
    def n_buckets(self) -> int:
        return int(self.per_replication.shape[1])

    @property
    def episode_end(self) -> np.ndarray:
        return self.bucket_size * np.arange(1, self.n_buckets + 1)

    @property
    def mean_score(self) -> np.ndarray:
        return self.per_replication.mean(axis=0)

    @property
    def stderr_score(self) -> np.ndarray:
        R = self.per_replication.shape[0]
        if R < 2:
            return np.zeros(self.n_buckets)
        return self.per_replication.std(axis=0, ddof=1) / np.sqrt(R)

    @property
    def mean_reward(self) -> np.ndarray:
        return self.per_replication_reward.mean(axis=0)

    def rows(self):
        for b, (end, ms, se, mr) in enumerate(zip(self.episode_end, self.mean_score,
                                                  self.stderr_score, self.mean_reward)):
            yield b, int(end), float(ms), float(se), float(mr)


@dataclass
class ExperimentPlan:
    scenario: str | Path
    settings: list[str]
    replications: int = DESK_REPLICATIONS
    episodes: int = DESK_EPISODES
    bucket_size: int = 100
    base_seed: int = 0
    workers: int = 1
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    out_dir: str | Path | None = None
    save_policies: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.bucket_size < 1:
            raise ValueError("bucket size must be >= 1")
        if self.episodes < self.bucket_size:
            raise ValueError("episodes must cover at least one bucket")
        if not self.settings:
            raise ValueError("no settings given")


def run_setting(scenario: Scenario, setting: str, plan: ExperimentPlan,
                progress: Callable[[str, int, float], None] | None = None) -> ScoreCurve:
    is_random, spec = parse_setting(setting, scenario)
    n_buckets = plan.episodes // plan.bucket_size
    per_rep = np.empty((plan.replications, n_buckets))
    per_rep_reward = np.empty((plan.replications, n_buckets))
    for r in range(plan.replications):
        seed = replication_seed(plan.base_seed, setting, r)
        t0 = time.perf_counter()
        if is_random:
            res = random_policy_baseline(scenario, plan.episodes, seed)
            rewards = np.full(plan.episodes, np.nan)
        else:
            cfg = TrainConfig(episodes=plan.episodes, workers=plan.workers, seed=seed,
                              hidden_width=plan.hidden_width, assessment=spec, **plan.extra)
            res = train(scenario, cfg)
            rewards = res.rewards
            if plan.save_policies and plan.out_dir is not None:
                save_snapshot(Path(plan.out_dir) / f"policy_{setting}_rep{r}.npz", res.policy)
        per_rep[r] = bucket_means(res.scores, plan.bucket_size)
        per_rep_reward[r] = bucket_means(rewards, plan.bucket_size)
        log.info("%s %s rep %d: final bucket %.2f (%.1fs)", scenario.name, setting, r,
                 per_rep[r, -1], time.perf_counter() - t0)
        if progress is not None:
            progress(setting, r, float(per_rep[r, -1]))
    return ScoreCurve(setting, plan.bucket_size, per_rep, per_rep_reward)


def write_curve_csv(curve: ScoreCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in curve.rows():
            w.writerow([row[0], row[1], f"{row[2]:.6f}", f"{row[3]:.6f}", f"{row[4]:.6f}"])


def read_curve_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary_csv(curves: dict[str, ScoreCurve], plan: ExperimentPlan, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for name, c in curves.items():
            w.writerow([name, plan.replications, plan.episodes, c.n_buckets,
                        f"{c.mean_score[0]:.6f}", f"{c.mean_score[-1]:.6f}",
                        f"{c.stderr_score[-1]:.6f}", f"{c.mean_reward[-1]:.6f}"])


def run_experiment(plan: ExperimentPlan, progress=None) -> dict[str, ScoreCurve]:
    """Run every setting; with ``out_dir`` set, write one CSV per setting plus ``summary.csv``."""
    plan.validate()
    scenario = load_scenario(plan.scenario)
    for s in plan.settings:
        parse_setting(s, scenario)
    out = Path(plan.out_dir) if plan.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    curves: dict[str, ScoreCurve] = {}
    for setting in plan.settings:
        curve = run_setting(scenario, setting, plan, progress)
        curves[setting] = curve
        if out is not None:
            write_curve_csv(curve, out / f"{scenario.name}_{setting}.csv")
    if out is not None:
        write_summary_csv(curves, plan, out / "summary.csv")
    return curves
