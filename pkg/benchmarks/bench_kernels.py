"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--groups 200] [--repeat 5]

Prints best-of-``repeat`` wall time per kernel and backend, plus the speedup.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from proxyaudit import kernels


def cases(n: int, groups: int, k: int):
    rng = np.random.default_rng(0)
    values = rng.random(n)
    ids = rng.integers(-1, groups, size=n).astype(np.intp)
    probs = np.ascontiguousarray(rng.dirichlet(np.full(k, 0.5), size=n))
    return {
        "group_sums": lambda impl: impl.group_sums(values, ids, groups),
        "weighted_column_sums": lambda impl: impl.weighted_column_sums(values, probs),
        "threshold_assign": lambda impl: impl.threshold_assign(probs, 0.75),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--groups", type=int, default=200)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the fallback only")
    print(f"n={args.n} groups={args.groups} classes={args.classes} best of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for name, call in cases(args.n, args.groups, args.classes).items():
        times = {}
        for backend, impl in backends.items():
            times[backend] = min(timeit.repeat(lambda: call(impl), number=1, repeat=args.repeat))
        row = f"{name:<22}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
