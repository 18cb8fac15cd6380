"""Benchmark the jitted rollout kernels against the pure-Python fallback.

The fallback executes the same source without numba (as selected by
NHTRACK_PURE_NUMPY=1); this script runs both in subprocesses so each
backend initializes cleanly, then reports per-call timings and the
speedup. The shooting column shows the cost of one full tracking solve,
which is the operation the kernels exist for.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, time
import numpy as np
from nhtrack import kernels
from nhtrack.shooting import solve_tracking
from nhtrack.tracking import benchmark_problem

repeats = int(__import__("sys").argv[1])
x0 = np.array([0.5, 0.2, 0.7, 0.5, 0.4])
prob = benchmark_problem()

def best_of(fn, n=repeats):
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

# warm-up (jit or cache load)
kernels.rollout_reduced(x0, 1e-3, 10)
kernels.rollout_unreduced(np.concatenate([x0[:3], [-x0[1]*x0[4], x0[3], x0[4]]]), 1e-3, 10)
_ = prob._ref_table
solve_tracking(benchmark_problem(N=50))

result = {
    "backend": kernels.backend(),
    "reduced_4k_steps": best_of(lambda: kernels.rollout_reduced(x0, 1e-3, 4000)),
    "unreduced_40k_steps": best_of(
        lambda: kernels.rollout_unreduced(
            np.concatenate([x0[:3], [-x0[1]*x0[4], x0[3], x0[4]]]), 1e-4, 40000
        )
    ),
    "coupled_4k_steps": best_of(
        lambda: kernels.rollout_coupled(
            np.concatenate([x0, np.zeros(5)]), 1e-3, 4000, prob._ref_table, 7.0, False
        )
    ),
    "tracking_solve": best_of(lambda: solve_tracking(benchmark_problem()), n=max(1, repeats // 2)),
}
print(json.dumps(result))
"""


def run_backend(pure_numpy: bool, repeats: int) -> dict:
    env = dict(os.environ)
    env["NHTRACK_PURE_NUMPY"] = "1" if pure_numpy else "0"
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeats)],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print("benchmarking numba backend ...")
    fast = run_backend(pure_numpy=False, repeats=args.repeats)
    print("benchmarking pure-numpy fallback ...")
    slow = run_backend(pure_numpy=True, repeats=args.repeats)

    if fast["backend"] == slow["backend"]:
        print(f"note: both runs used the {fast['backend']} backend (numba unavailable?)")

    names = [
        ("reduced flow, 4000 steps", "reduced_4k_steps"),
        ("unreduced flow, 40000 steps", "unreduced_40k_steps"),
        ("coupled flow, 4000 steps", "coupled_4k_steps"),
        ("full tracking solve", "tracking_solve"),
    ]
    print()
    print(f"{'kernel':32s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for label, key in names:
        a, b = fast[key], slow[key]
        print(f"{label:32s} {a*1e3:9.3f} ms {b*1e3:9.3f} ms {b/a:8.1f}x")


if __name__ == "__main__":
    main()
