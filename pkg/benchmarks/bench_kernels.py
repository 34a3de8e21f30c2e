"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 400] [--d 200] [--repeat 3]

Each row reports the best wall time per backend and checks that both
backends return the same result.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from robustgraph import _backend
from robustgraph.changepoint import scan_pvalue, scan_window
from robustgraph.data import neighbor_ranks, pairwise_distances
from robustgraph.graphs import build_kmst, build_krnng


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--d", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        _backend.get("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    x = np.random.default_rng(args.seed).standard_normal((args.n, args.d))
    dm = pairwise_distances(x)
    rm = neighbor_ranks(dm)
    g = build_krnng(rm, 5, 0.3, args.seed).graph
    window = scan_window(args.n, 0.05)

    cases = {
        "krnng (K=5, lam=0.3)": lambda b: build_krnng(rm, 5, 0.3, args.seed, backend=b).graph.edge_set(),
        "kmst (K=5)": lambda b: build_kmst(dm, 5, backend=b).edge_set(),
        "scan p-value (B=1000)": lambda b: scan_pvalue(g, window, "get", 1000, args.seed, backend=b),
    }
    print(f"N={args.n} d={args.d} best of {args.repeat}")
    print(f"{'kernel':<24}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  same")
    for name, fn in cases.items():
        tp, rp = best_of(lambda: fn("python"), args.repeat)
        tc, rc = best_of(lambda: fn("cython"), args.repeat)
        print(f"{name:<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {rp == rc}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
