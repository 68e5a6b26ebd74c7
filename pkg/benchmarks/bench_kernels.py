"""Compare the compiled and pure-Python kernels and time OptKG episodes.

Usage: python3 benchmarks/bench_kernels.py [--K 800] [--budgets 3200,6400]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from crowdkg import _pykernels

try:
    from crowdkg import _ckernels
except ImportError:
    _ckernels = None

EPISODE = """
import json, sys, time
import numpy as np
from crowdkg import kernels
from crowdkg.mdp import StateMatrix, SyntheticEnv, run_episode
from crowdkg.policies import OptKG
K, budgets = int(sys.argv[1]), [int(t) for t in sys.argv[2].split(",")]
env = SyntheticEnv(np.random.default_rng(0).beta(1, 1, K))
S0 = StateMatrix.uniform(K)
out = {"backend": kernels.BACKEND}
for T in budgets:
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        run_episode(env, OptKG(), T, S0, 1)
        best = min(best, time.perf_counter() - t0)
    out[T] = best
print(json.dumps(out))
"""


def best_time(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_table(n):
    rng = np.random.default_rng(0)
    a = rng.integers(1, 200, n).astype(float)
    b = rng.integers(1, 200, n).astype(float)
    c = rng.uniform(0.5, 10, n)
    d = rng.uniform(0.5, 10, n)
    mods = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    rows = []
    for name, mod in mods:
        t_scores = best_time(lambda m=mod: m.scores(a, b, m.OPTIMISTIC))
        t_hetero = best_time(lambda m=mod: m.hetero_scores(a, b, c, d, m.OPTIMISTIC))
        rows.append((name, t_scores, t_hetero))
    return rows


def episode_times(K, budgets, pure):
    env = dict(os.environ, CROWDKG_PURE_PYTHON="1" if pure else "0")
    res = subprocess.run([sys.executable, "-c", EPISODE, str(K), ",".join(map(str, budgets))],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--K", type=int, default=800)
    parser.add_argument("--budgets", default="3200,6400")
    parser.add_argument("--n", type=int, default=20_000, help="states per kernel call")
    args = parser.parse_args()
    budgets = [int(t) for t in args.budgets.split(",")]

    print(f"kernel calls over {args.n} states (best of 5, seconds)")
    print(f"{'backend':<8} {'scores':>10} {'hetero':>10}")
    for name, ts, th in kernel_table(args.n):
        print(f"{name:<8} {ts:>10.4f} {th:>10.4f}")

    print(f"\nOptKG episodes, K={args.K} (best of 3, seconds)")
    print(f"{'backend':<8} " + " ".join(f"{'T=' + str(T):>10}" for T in budgets) + f" {'ratio':>7}")
    for pure in ([False, True] if _ckernels is not None else [True]):
        res = episode_times(args.K, budgets, pure)
        times = [res[str(T)] for T in budgets]
        ratio = times[-1] / times[0] if len(times) > 1 else float("nan")
        print(f"{res['backend']:<8} " + " ".join(f"{t:>10.4f}" for t in times) + f" {ratio:>7.2f}")


if __name__ == "__main__":
    main()
