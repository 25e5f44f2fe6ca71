# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled forest kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector

cnp.import_array()


def best_split(const double[:, ::1] X, const signed char[::1] y, const long[::1] idx,
               const long[::1] features, const double[::1] nlogn):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t nf = features.shape[0]
    cdef Py_ssize_t i, k, f
    cdef long total = 0, l1, r1, nl, nr
    cdef double imp, thr
    cdef double best_i = np.inf
    cdef double best_t = 0.0
    cdef long best_f = -1
    # ties in x are ordered by label; only boundaries between distinct x are scored,
    # so the counts there match the stable sort of the numpy version
    cdef vector[pair[double, int]] buf
    if n < 2:
        return best_f, best_t, best_i
    buf.resize(n)
    with nogil:
        for i in range(n):
            total += y[idx[i]]
        for k in range(nf):
            f = features[k]
            for i in range(n):
                buf[i].first = X[idx[i], f]
                buf[i].second = y[idx[i]]
            sort(buf.begin(), buf.end())
            l1 = 0
            for i in range(n - 1):
                l1 += buf[i].second
                if not (buf[i].first < buf[i + 1].first):
                    continue
                nl = i + 1
                nr = n - nl
                r1 = total - l1
                imp = (nlogn[nl] - nlogn[l1] - nlogn[nl - l1]) + (nlogn[nr] - nlogn[r1] - nlogn[nr - r1])
                if imp < best_i:
                    best_i = imp
                    best_f = f
                    thr = 0.5 * (buf[i].first + buf[i + 1].first)
                    best_t = buf[i].first if thr >= buf[i + 1].first else thr
    return best_f, best_t, best_i


def apply_forest(const double[:, ::1] X, const long[::1] feature, const double[::1] threshold,
                 const long[::1] left, const long[::1] right, const double[::1] value,
                 const long[::1] roots):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t nt = roots.shape[0]
    cdef Py_ssize_t i, t
    cdef long node, f
    votes = np.zeros(n, dtype=np.int64)
    cdef long[::1] v = votes
    with nogil:
        for i in range(n):
            for t in range(nt):
                node = roots[t]
                f = feature[node]
                while f >= 0:
                    if X[i, f] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                    f = feature[node]
                if value[node] > 0.5:
                    v[i] += 1
    return votes
