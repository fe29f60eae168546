# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Must stay bit-compatible with ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def neumaier_colsum(x):
    cdef const double[:, ::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], k = v.shape[1], i, j
    s_arr = np.zeros(k)
    c_arr = np.zeros(k)
    cdef double[::1] s = s_arr
    cdef double[::1] c = c_arr
    cdef double t, y
    with nogil:
        for i in range(n):
            for j in range(k):
                y = v[i, j]
                t = s[j] + y
                if (s[j] if s[j] >= 0 else -s[j]) >= (y if y >= 0 else -y):
                    c[j] += (s[j] - t) + y
                else:
                    c[j] += (y - t) + s[j]
                s[j] = t
        for j in range(k):
            s[j] = s[j] + c[j]
    return s_arr


cdef inline Py_ssize_t _first_included(const double[::1] thr, double score) noexcept nogil:
    cdef Py_ssize_t a = 0, m = thr.shape[0]
    while a < m and thr[a] > score:
        a += 1
    return a


def loss_tables(offsets, relevance, s_ret, s_rank, lam, gam, long r0, weights):
    cdef const cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const cnp.int64_t[::1] rel = np.ascontiguousarray(relevance, dtype=np.int64)
    cdef const double[::1] sr = np.ascontiguousarray(s_ret, dtype=np.float64)
    cdef const double[::1] sk = np.ascontiguousarray(s_rank, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    thr_l_arr = 1.0 - np.ascontiguousarray(lam, dtype=np.float64)
    thr_g_arr = 1.0 - np.ascontiguousarray(gam, dtype=np.float64)
    cdef const double[::1] thr_l = thr_l_arr
    cdef const double[::1] thr_g = thr_g_arr
    cdef Py_ssize_t nq = off.shape[0] - 1, m1 = thr_l.shape[0], m2 = thr_g.shape[0]
    t1_arr = np.zeros((nq, m1))
    t2_arr = np.zeros((nq, m1, m2))
    cdef double[:, ::1] t1 = t1_arr
    cdef double[:, :, ::1] t2 = t2_arr

    cdef Py_ssize_t maxdocs = 0, q
    for q in range(nq):
        if off[q + 1] - off[q] > maxdocs:
            maxdocs = off[q + 1] - off[q]
    buf = np.zeros(maxdocs + 1, dtype=np.int64)
    zbuf = np.zeros((3, maxdocs + 1), dtype=np.int64)
    cdef cnp.int64_t[::1] amin = buf
    cdef cnp.int64_t[:, ::1] z = zbuf   # rows: doc index, a_min, b_min

    cdef Py_ssize_t lo, hi, d, a, b, j, kz, n_rel, covered, p
    cdef cnp.int64_t key_rel, key_doc
    cdef double idcg, dcg
    with nogil:
        for q in range(nq):
            lo = off[q]
            hi = off[q + 1]
            n_rel = 0
            kz = 0
            for d in range(lo, hi):
                amin[d - lo] = _first_included(thr_l, sr[d])
                if rel[d] > 0:
                    n_rel += 1
                if rel[d] >= r0:
                    # stable insertion by descending relevance
                    p = kz
                    while p > 0 and rel[z[0, p - 1]] < rel[d]:
                        z[0, p] = z[0, p - 1]
                        p -= 1
                    z[0, p] = d
                    kz += 1
            if n_rel > 0:
                for a in range(m1):
                    covered = 0
                    for d in range(lo, hi):
                        if rel[d] > 0 and amin[d - lo] <= a:
                            covered += 1
                    t1[q, a] = 1.0 - <double>covered / <double>n_rel
            if kz == 0:
                continue
            for j in range(kz):
                d = z[0, j]
                z[1, j] = amin[d - lo]
                z[2, j] = _first_included(thr_g, sk[d])
            idcg = 0.0
            for j in range(kz):
                idcg = idcg + w[j]
            for a in range(m1):
                for b in range(m2):
                    dcg = 0.0
                    for j in range(kz):
                        if z[1, j] <= a and z[2, j] <= b:
                            dcg = dcg + w[j]
                    t2[q, a, b] = 1.0 - dcg / idcg
    return t1_arr, t2_arr


def set_size_totals(s_ret, s_rank, lam, gam):
    cdef const double[::1] sr = np.ascontiguousarray(s_ret, dtype=np.float64)
    cdef const double[::1] sk = np.ascontiguousarray(s_rank, dtype=np.float64)
    thr_l_arr = 1.0 - np.ascontiguousarray(lam, dtype=np.float64)
    thr_g_arr = 1.0 - np.ascontiguousarray(gam, dtype=np.float64)
    cdef const double[::1] thr_l = thr_l_arr
    cdef const double[::1] thr_g = thr_g_arr
    cdef Py_ssize_t m1 = thr_l.shape[0], m2 = thr_g.shape[0], d, a, b
    hist_arr = np.zeros((m1 + 1, m2 + 1), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] h = hist_arr
    with nogil:
        for d in range(sr.shape[0]):
            h[_first_included(thr_l, sr[d]), _first_included(thr_g, sk[d])] += 1
        for a in range(1, m1 + 1):
            for b in range(m2 + 1):
                h[a, b] += h[a - 1, b]
        for a in range(m1 + 1):
            for b in range(1, m2 + 1):
                h[a, b] += h[a, b - 1]
    return hist_arr[:m1, m2].copy(), hist_arr[:m1, :m2].copy()
