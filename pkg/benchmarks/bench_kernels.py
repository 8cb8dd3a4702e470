"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from adstrain import kernels
from adstrain.rng import make_rng


def oracle_instances(n, seed=0):
    rng = make_rng(seed, "bench")
    out = []
    for _ in range(n):
        T, N = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        loads = [rng.random((int(rng.integers(4, 20)), N)) for _ in range(T)]
        mems = [rng.random(l.shape) for l in loads]
        buckets = [rng.integers(0, 2, l.shape[0]) for l in loads]
        out.append((loads, mems, buckets, np.array([1.0, 1.25]), 2.0 * T))
    return out


def bench(fn, args_list, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for a in args_list:
            fn(*a)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--instances", type=int, default=200)
    args = ap.parse_args()
    impls = kernels.backends()
    rng = make_rng(1, "bench")
    cdf = np.cumsum(1.0 / np.arange(1, 100_001) ** 1.1)
    cdf /= cdf[-1]
    cases = {
        "best_combination": [oracle_instances(args.instances)],
        "zipf_ranks": [[(cdf, rng.random(1_000_000))]],
        "dedup_first": [[(rng.integers(0, 50_000, 1_000_000),)]],
        "node_bytes": [[(rng.random(1_000_000), rng.integers(0, 64, 1_000_000), 64, 4.0)]],
    }
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for kernel, (arg_list,) in cases.items():
        times = {name: bench(getattr(mod, kernel), arg_list, args.repeat) for name, mod in impls.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{kernel:<18}" + "".join(f"{t:>11.3f}s" for t in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
