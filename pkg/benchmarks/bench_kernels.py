"""Time the compiled and numpy forest kernels on the same workload.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--features D] [--repeat R]
"""

import argparse
import time

import numpy as np

from increpair import kernels
from increpair.forest import CostMatrix, ForestParams, train_forest


def _data(rows, features, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, features))
    w = rng.normal(size=features)
    y = (X @ w + rng.normal(scale=2.0, size=rows) > 1.5).astype(np.int8)
    return X, y


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_split(X, y, repeat):
    nlogn = kernels.nlogn_table(len(y))
    idx = np.arange(len(y), dtype=np.int64)
    feats = np.arange(X.shape[1], dtype=np.int64)
    out = {}
    for b in _backends():
        out[b] = _time(lambda: kernels.best_split(X, y, idx, feats, nlogn, backend=b), repeat)
    return out


def bench_train(X, y, repeat):
    params = ForestParams(seed=0)
    names = tuple(f"f{i}" for i in range(X.shape[1]))
    out = {}
    for b in _backends():
        saved = kernels.set_backend(b)
        try:
            out[b] = _time(lambda: train_forest(X, y, CostMatrix(4, 1), params, names), repeat)
        finally:
            kernels.set_backend(saved)
    return out


def bench_apply(X, y, repeat):
    names = tuple(f"f{i}" for i in range(X.shape[1]))
    f = train_forest(X, y, CostMatrix(1, 1), ForestParams(seed=0), names)
    packed = f._arrays
    out = {}
    for b in _backends():
        out[b] = _time(lambda: kernels.apply_forest(X, *packed, backend=b), repeat)
    return out


def _backends():
    return ("python", "cython") if kernels.HAVE_CYTHON else ("python",)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--features", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    X, y = _data(a.rows, a.features, 0)
    print(f"rows={a.rows} features={a.features} default backend={kernels.BACKEND}")
    for label, fn in (("best_split", bench_split), ("train_forest", bench_train),
                      ("apply_forest", bench_apply)):
        res = fn(X, y, a.repeat)
        line = "  ".join(f"{b}={t * 1e3:9.2f} ms" for b, t in res.items())
        if "cython" in res:
            line += f"  speedup={res['python'] / res['cython']:.1f}x"
        print(f"{label:<14}{line}")


if __name__ == "__main__":
    main()
