"""Compare the compiled and pure-Python coincidence matchers.

    python3 benchmarks/bench_kernels.py [--sizes 100000 1000000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from eprsim import kernels
from eprsim.experiment import ExperimentConfig, run_pair_source


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100_000, 1_000_000])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    print(f"backends: {sorted(kernels.BACKENDS)} (default {kernels.BACKEND})")
    print(f"{'pairs':>10} {'backend':>9} {'seconds':>9} {'pairs/s':>12} {'matched':>9}")
    for n in args.sizes:
        a, b = run_pair_source(ExperimentConfig(n_pairs=n, seed=1))
        results = {}
        for name in sorted(kernels.BACKENDS):
            secs, (ia, ib) = best_of(
                lambda: kernels.greedy_match(a.timestamps, b.timestamps, 1e-3, backend=name),
                args.repeat)
            results[name] = (ia, ib)
            print(f"{n:>10} {name:>9} {secs:>9.4f} {n / secs:>12.3e} {len(ia):>9}")
        first = next(iter(results.values()))
        assert all(np.array_equal(r[0], first[0]) and np.array_equal(r[1], first[1])
                   for r in results.values()), "backends disagree"


if __name__ == "__main__":
    main()
