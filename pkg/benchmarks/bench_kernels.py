"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--trials 1000] [--repeat 5]

Compilation happens once, outside the timed region.
"""
import argparse
import time

import numpy as np

from satdwell import _kernels
from satdwell.doa import ellipse_boundary
from satdwell.model import two_mode_example, random_admissible_schedule


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--horizon", type=int, default=400)
    ap.add_argument("--resolution", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    sys_ = two_mode_example()
    A, B, K = sys_.stacked
    rng = np.random.default_rng(0)
    modes = np.stack([random_admissible_schedule(2, 2, args.horizon, s).mode_sequence(args.horizon) for s in range(args.trials)])
    x0 = rng.uniform(-1, 1, size=(args.trials, 2))
    P = np.ascontiguousarray(np.array([[[1.08, 1.53], [1.53, 3.14]], [[1.34, -0.77], [-0.77, 1.26]]]))
    H = np.ascontiguousarray(np.array([[[0.89, 0.75]], [[0.57, 1.56]], [[1.13, -0.86]], [[-0.31, -0.43]]]))
    e1 = ellipse_boundary(P[0], args.resolution)[1]
    e2 = ellipse_boundary(P[1], args.resolution)[1]

    jit, ref = _kernels.jit_impls(), _kernels.numpy_impls
    states = ref["rollout"](A, B, K, modes, x0)
    cases = {
        "rollout": lambda f: f(A, B, K, modes, x0),
        "clip_convex": lambda f: f(e1, e2),
        "membership": lambda f: f(states, P, H),
    }
    print(f"trials={args.trials} horizon={args.horizon} resolution={args.resolution} repeat={args.repeat}")
    print(f"{'kernel':<12} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for name, call in cases.items():
        call(jit[name])  # compile
        tn = best_of(lambda: call(ref[name]), args.repeat)
        tj = best_of(lambda: call(jit[name]), args.repeat)
        print(f"{name:<12} {1e3 * tn:>11.2f} {1e3 * tj:>11.2f} {tn / tj:>7.1f}x")


if __name__ == "__main__":
    main()
