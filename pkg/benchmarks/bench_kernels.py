"""Time the numba kernels against the pure-numpy path.

    python3 benchmarks/bench_kernels.py [--repeat 2000]

Both backends are imported directly, so the ``CURIOPATH_PURE_NUMPY`` flag
does not matter here. Shapes match the training loop: single-row policy
and value evaluations, 64-row predictor batches and M3PL estimation with
J=8 items over K=10 points. A short training run per backend is timed at
the end (set through the environment flag in a subprocess).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from curiopath.agent import DEFAULT_HIDDEN_WIDTH
from curiopath.kernels import numba_impl, numpy_impl
from curiopath.neuralnet import Mlp


def _time(fn, repeat: int) -> float:
    fn()  # warm-up / compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1e6


def kernel_cases(rng: np.random.Generator):
    h = DEFAULT_HIDDEN_WIDTH
    pol = Mlp.create([10, h, h, h, 15], "softmax", rng)
    pred = Mlp.create([25, h, h, h, 10], "identity", rng)
    x1 = rng.random((1, 10))
    xb = rng.random((64, 25))
    xe = rng.random((25, 10))
    g = rng.standard_normal(pred.params.shape[0])
    k, j = 10, 8
    a = np.zeros((j, k))
    a[np.arange(j), rng.integers(0, k, j)] = 1.0
    b = rng.standard_normal(j)
    c = rng.uniform(0, 0.25, j)
    y = (rng.random(j) < 0.5).astype(float)
    th0 = rng.standard_normal(k)

    def cases(impl):
        _, acts_b = impl.mlp_forward(pred.params, pred.dims, xb)
        _, acts_e = impl.mlp_forward(pol.params, pol.dims, xe)
        grad_b = rng.standard_normal((64, 10))
        grad_e = rng.standard_normal((25, 15))
        p, m, v = pred.params.copy(), np.zeros_like(g), np.zeros_like(g)
        return {
            "forward 1x10 -> 15 (policy)": lambda: impl.mlp_forward(pol.params, pol.dims, x1),
            "forward 64x25 -> 10 (predictor)": lambda: impl.mlp_forward(pred.params, pred.dims, xb),
            "backward 64x25 (predictor)": lambda: impl.mlp_backward(pred.params, pred.dims,
                                                                    acts_b, grad_b),
            "backward 25x10 (episode)": lambda: impl.mlp_backward(pol.params, pol.dims,
                                                                  acts_e, grad_e),
            f"adam {g.shape[0]} params": lambda: impl.adam_update(p, g, m, v, 10, 1e-3,
                                                                  0.9, 0.999, 1e-8),
            "m3pl ascent J=8 K=10": lambda: impl.m3pl_ascent(th0, th0, 1 / j, a, b, c, y,
                                                             200, 1e-8),
        }

    return cases


def train_timing(episodes: int) -> dict[str, float]:
    code = ("import time; from curiopath.agent import train, TrainConfig; "
            "from curiopath.scenario import load_scenario; "
            "sc = load_scenario('continuous_case_1'); train(sc, TrainConfig(episodes=2)); "
            f"t = time.perf_counter(); r = train(sc, TrainConfig(episodes={episodes})); "
            "print((time.perf_counter() - t) / r.lengths.sum() * 1e6)")
    out = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, CURIOPATH_PURE_NUMPY=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[name] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--train-episodes", type=int, default=200,
                    help="episodes for the end-to-end timing (0 skips it)")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    nb, npy = cases(numba_impl), cases(numpy_impl)
    print(f"{'kernel':<34} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    for name in nb:
        t_nb = _time(nb[name], args.repeat)
        t_np = _time(npy[name], args.repeat)
        print(f"{name:<34} {t_nb:10.2f} {t_np:10.2f} {t_np / t_nb:8.2f}")
    if args.train_episodes > 0:
        t = train_timing(args.train_episodes)
        print(f"{'train continuous_case_1 (per step)':<34} {t['numba']:10.2f} {t['numpy']:10.2f} "
              f"{t['numpy'] / t['numba']:8.2f}")


if __name__ == "__main__":
    main()
