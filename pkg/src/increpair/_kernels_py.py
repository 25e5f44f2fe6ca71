"""Pure numpy versions of the forest kernels.

They must agree bit-for-bit with ``_speedups``: impurities are built from the
same ``nlogn`` table with the same operation order, ties keep the first
strict minimum, and thresholds are midpoints between distinct values.
"""

import numpy as np


def split_threshold(a: float, b: float) -> float:
    thr = 0.5 * (a + b)
    return a if thr >= b else thr


def best_split(X, y, idx, features, nlogn):
    """Best information-gain split of the rows ``idx`` over candidate ``features``.

    Returns ``(feature, threshold, impurity)``; ``feature`` is -1 when no
    feature has two distinct values.  ``impurity`` is the size-weighted child
    entropy scaled by the node size (lower is better).
    """
    n = idx.shape[0]
    best_i, best_f, best_t = np.inf, -1, 0.0
    if n < 2:
        return best_f, best_t, best_i
    ysub = y[idx].astype(np.int64)
    total = int(ysub.sum())
    nl = np.arange(1, n)
    nr = n - nl
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        l1 = np.cumsum(ysub[order])[:-1]
        r1 = total - l1
        imp = (nlogn[nl] - nlogn[l1] - nlogn[nl - l1]) + (nlogn[nr] - nlogn[r1] - nlogn[nr - r1])
        imp[~(xs[:-1] < xs[1:])] = np.inf
        i = int(np.argmin(imp))
        if imp[i] < best_i:
            best_i, best_f, best_t = float(imp[i]), int(f), float(split_threshold(xs[i], xs[i + 1]))
    return best_f, best_t, best_i


def apply_forest(X, feature, threshold, left, right, value, roots):
    """Number of trees voting positive (leaf value > 0.5) for each row of ``X``."""
    n = X.shape[0]
    votes = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            nd = node[inner]
            go_left = X[r, f[inner]] <= threshold[nd]
            node[inner] = np.where(go_left, left[nd], right[nd])
        votes += value[node] > 0.5
    return votes
