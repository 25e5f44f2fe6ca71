"""Kernel backend selection.

The compiled ``_speedups`` extension is used when it imports; setting
``INCREPAIR_PURE=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
if os.environ.get("INCREPAIR_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _speedups as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

try:
    from . import _speedups  # noqa: F401
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False


def nlogn_table(n: int) -> np.ndarray:
    """``k * log2(k)`` for k = 0..n (0 at k = 0)."""
    k = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1)
    out[1:] = k[1:] * np.log2(k[1:])
    return out


def best_split(X, y, idx, features, nlogn, backend=None):
    impl = _select(backend)
    return impl.best_split(X, y, idx, features, nlogn)


def apply_forest(X, feature, threshold, left, right, value, roots, backend=None):
    impl = _select(backend)
    return impl.apply_forest(X, feature, threshold, left, right, value, roots)


def set_backend(name: str) -> str:
    """Switch the default backend; returns the previous one."""
    global _impl, BACKEND
    prev = BACKEND
    _impl = _select(name)
    BACKEND = name
    return prev


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _speedups
        return _speedups
    raise ValueError(f"unknown kernel backend {backend!r}")
