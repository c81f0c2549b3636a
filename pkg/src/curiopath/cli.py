"""Command line entry point: ``curiopath {run,oracle,validate}``.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import kernels
from .agent import DEFAULT_HIDDEN_WIDTH
from .harness import (DESK_EPISODES, DESK_REPLICATIONS, PAPER_EPISODES, PAPER_REPLICATIONS,
                      ExperimentPlan, dp_oracle, parse_setting, run_experiment)
from .scenario import BUNDLED, ScenarioError, ScenarioValidationError, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _settings(values: list[str]) -> list[str]:
    out: list[str] = []
    for v in values:
        out.extend(s for s in (t.strip() for t in v.split(",")) if s)
    return out


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioValidationError as exc:
        print(f"invalid: {args.scenario}")
        for v in exc.report.violations:
            print(f"  - {v}")
        return EXIT_INVALID
    except ScenarioError as exc:
        print(f"invalid: {exc}")
        return EXIT_INVALID
    print(f"ok: {sc.name} ({sc.mode}, K={sc.n_points}, D={sc.n_actions}, T={sc.horizon}, "
          f"assessment {sc.assessment})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not sc.is_discrete:
        print("oracle: only discrete scenarios have a tabular model", file=sys.stderr)
        return EXIT_INVALID
    res = dp_oracle(sc)
    names = [m.name or f"d{m.id + 1}" for m in sc.actions]
    labels = ["".join(str(int(b)) for b in s) for s in sc.admissible_states]
    print(f"optimal expected score: {res.optimal_score:.10f}")
    print("t    " + "  ".join(f"{lab:>6}" for lab in labels))
    for t in range(sc.horizon):
        print(f"{t:<4} " + "  ".join(f"{names[a]:>6}" for a in res.policy[t]))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
        settings = _settings(args.setting)
        for s in settings:
            parse_setting(s, sc)
    except (ScenarioError, ValueError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.paper_scale:
        episodes, reps = PAPER_EPISODES.get(sc.name, 50000), PAPER_REPLICATIONS
    else:
        episodes, reps = DESK_EPISODES, DESK_REPLICATIONS
    episodes = episodes if args.episodes is None else args.episodes
    reps = reps if args.replications is None else args.replications
    plan = ExperimentPlan(args.scenario, settings, reps, episodes, args.bucket_size, args.seed,
                          args.workers, args.hidden_width, args.out, args.save_policies)
    try:
        plan.validate()
    except ValueError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID

    def progress(setting, rep, final):
        if not args.quiet:
            print(f"  {setting} rep {rep + 1}/{reps}: final bucket {final:.2f}", flush=True)

    print(f"{sc.name}: {len(settings)} setting(s) x {reps} replication(s) x {episodes} episodes "
          f"[{kernels.BACKEND}]", flush=True)
    try:
        curves = run_experiment(plan, progress)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{'setting':<10} {'first':>8} {'final':>8} {'stderr':>8}")
    for name, c in curves.items():
        print(f"{name:<10} {c.mean_score[0]:8.2f} {c.mean_score[-1]:8.2f} "
              f"{c.stderr_score[-1]:8.2f}")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curiopath",
                                description="Curiosity-driven learning-path recommendation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-run details")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate settings over replications")
    r.add_argument("--scenario", required=True, help=f"scenario file or one of {', '.join(BUNDLED)}")
    r.add_argument("--setting", action="append", required=True,
                   help="Random, NO_DINA, DINA_<J>, NO_IRT or IRT_<J>; repeat or comma-separate")
    r.add_argument("--episodes", type=int, default=None)
    r.add_argument("--replications", type=int, default=None)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed", type=int, default=0, help="base seed")
    r.add_argument("--out", default=None, help="directory for CSV output")
    r.add_argument("--bucket-size", type=int, default=100)
    r.add_argument("--hidden-width", type=int, default=DEFAULT_HIDDEN_WIDTH)
    r.add_argument("--paper-scale", action="store_true",
                   help="default to the full episode counts and 100 replications")
    r.add_argument("--save-policies", action="store_true", help="write policy checkpoints (npz)")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="optimal expected score and policy of a discrete scenario")
    o.add_argument("--scenario", required=True)
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("validate", help="parse and check a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
