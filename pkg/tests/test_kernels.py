import json

import numpy as np
import pytest

from increpair import _kernels_py, kernels
from increpair.forest import CostMatrix, ForestParams, train_forest

needs_cython = pytest.mark.skipif(not kernels.HAVE_CYTHON, reason="compiled extension not built")


def _brute_best_split(X, y, idx, features):
    """Try every midpoint of every feature and score it from scratch."""
    best = (np.inf, -1, 0.0)
    ys = y[idx]
    for f in features:
        vals = np.unique(X[idx, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = _kernels_py.split_threshold(a, b)
            left = X[idx, f] <= thr
            imp = 0.0
            for part in (ys[left], ys[~left]):
                n = len(part)
                for c in (part.sum(), n - part.sum()):
                    if c:
                        imp -= c * np.log2(c / n)
            if imp < best[0] - 1e-9:
                best = (imp, int(f), float(thr))
    return best


class TestReferenceSplit:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X = np.round(rng.normal(size=(60, 4)), 1)  # rounding forces ties
        y = (rng.random(60) < 0.35).astype(np.int8)
        idx = rng.choice(60, 45).astype(np.int64)
        feats = np.arange(4, dtype=np.int64)
        f, thr, imp = kernels.best_split(X, y, idx, feats, kernels.nlogn_table(60), "python")
        b_imp, b_f, b_thr = _brute_best_split(X, y, idx, feats)
        assert imp == pytest.approx(b_imp, abs=1e-9)
        assert (f, thr) == (b_f, b_thr)

    def test_constant_features(self):
        X = np.ones((5, 2))
        y = np.array([0, 1, 0, 1, 1], dtype=np.int8)
        f, _, imp = kernels.best_split(X, y, np.arange(5), np.arange(2), kernels.nlogn_table(5),
                                       "python")
        assert f == -1 and imp == np.inf


@needs_cython
class TestBackendParity:
    @pytest.mark.parametrize("seed", range(8))
    def test_best_split_identical(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 300))
        X = np.round(rng.normal(size=(n, 6)), int(rng.integers(0, 3)))
        y = (rng.random(n) < rng.random()).astype(np.int8)
        idx = rng.integers(0, n, size=n).astype(np.int64)
        feats = np.sort(rng.choice(6, 3, replace=False)).astype(np.int64)
        tab = kernels.nlogn_table(n)
        a = kernels.best_split(X, y, idx, feats, tab, "python")
        b = kernels.best_split(X, y, idx, feats, tab, "cython")
        assert a == b

    def test_apply_identical(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(400, 5))
        y = (X[:, 1] + rng.normal(size=400) > 0.5).astype(np.int8)
        f = train_forest(X, y, CostMatrix(2, 1), ForestParams(seed=0))
        assert np.array_equal(kernels.apply_forest(X, *f._arrays, backend="python"),
                              kernels.apply_forest(X, *f._arrays, backend="cython"))

    def test_forests_identical(self):
        rng = np.random.default_rng(10)
        X = np.round(rng.normal(size=(500, 9)), 1)
        y = (X[:, 0] - X[:, 3] + rng.normal(size=500) > 1.0).astype(np.int8)
        out = []
        for b in ("python", "cython"):
            prev = kernels.set_backend(b)
            try:
                f = train_forest(X, y, CostMatrix(8, 1), ForestParams(seed=3))
            finally:
                kernels.set_backend(prev)
            out.append(json.dumps(f.to_dict(), sort_keys=True))
        assert out[0] == out[1]


class TestSelection:
    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.best_split(np.zeros((2, 1)), np.zeros(2, np.int8), np.arange(2),
                               np.arange(1), kernels.nlogn_table(2), backend="fortran")

    def test_nlogn_table(self):
        t = kernels.nlogn_table(4)
        assert t[0] == 0.0 and t[1] == 0.0 and t[4] == 8.0
