"""Pure numpy implementations of the hot kernels.

Every function here mirrors one in ``_kernels.pyx`` operation for operation,
so both backends produce bit-identical floats.  Sequential sums use
``np.cumsum`` (a strict left-to-right scan) rather than ``np.sum`` (pairwise).
"""

import numpy as np


def neumaier_colsum(x):
    """Column sums of a 2-D array with Neumaier compensation, rows in order."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, k = x.shape
    s = np.zeros(k)
    c = np.zeros(k)
    for i in range(n):
        v = x[i]
        t = s + v
        c += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
        s = t
    return s + c


def _first_included(thresholds, scores):
    # number of leading grid points whose threshold is strictly above the score
    return (thresholds[None, :] > scores[:, None]).sum(axis=1)


def loss_tables(offsets, relevance, s_ret, s_rank, lam, gam, r0, weights):
    """Retrieval and ranking loss tables for a flat batch of queries.

    Parameters
    ----------
    offsets : int64 array, shape (nq + 1,)
        Query ``q`` owns docs ``offsets[q]:offsets[q + 1]``.
    relevance, s_ret, s_rank : arrays over all docs
    lam, gam : float64 arrays
        Increasing threshold grids.
    r0 : int
        Relevance cutoff for the ranked set.
    weights : float64 array
        Position discounts ``1 / log(j + 1)``, at least as long as the
        largest ranked set.

    Returns
    -------
    t1 : ndarray, shape (nq, len(lam))
    t2 : ndarray, shape (nq, len(lam), len(gam))
    """
    nq = len(offsets) - 1
    m1, m2 = len(lam), len(gam)
    thr_l = 1.0 - np.asarray(lam, dtype=np.float64)
    thr_g = 1.0 - np.asarray(gam, dtype=np.float64)
    t1 = np.zeros((nq, m1))
    t2 = np.zeros((nq, m1, m2))
    ia = np.arange(m1)
    ib = np.arange(m2)
    for q in range(nq):
        lo, hi = offsets[q], offsets[q + 1]
        rel = relevance[lo:hi]
        a_min = _first_included(thr_l, s_ret[lo:hi])

        pos = rel > 0
        n_rel = int(pos.sum())
        if n_rel:
            counts = np.bincount(a_min[pos], minlength=m1 + 1)[:m1]
            covered = np.cumsum(counts)
            t1[q] = 1.0 - covered / n_rel

        zmask = rel >= r0
        k = int(zmask.sum())
        if k == 0:
            continue
        order = np.argsort(-rel[zmask], kind="stable")
        za = a_min[zmask][order]
        zb = _first_included(thr_g, s_rank[lo:hi][zmask])[order]
        w = weights[:k]
        idcg = np.cumsum(w)[-1]
        inc = (ia[:, None, None] >= za[None, None, :]) & (ib[None, :, None] >= zb[None, None, :])
        dcg = np.cumsum(np.where(inc, w, 0.0), axis=2)[:, :, -1]
        t2[q] = 1.0 - dcg / idcg
    return t1, t2


def set_size_totals(s_ret, s_rank, lam, gam):
    """Total first- and second-stage set sizes over a batch, per grid cell.

    Returns integer arrays of shape (len(lam),) and (len(lam), len(gam)).
    """
    m1, m2 = len(lam), len(gam)
    a_min = _first_included(1.0 - np.asarray(lam, dtype=np.float64), s_ret)
    b_min = _first_included(1.0 - np.asarray(gam, dtype=np.float64), s_rank)
    hist = np.zeros((m1 + 1, m2 + 1), dtype=np.int64)
    np.add.at(hist, (a_min, b_min), 1)
    cum = hist.cumsum(axis=0).cumsum(axis=1)
    return cum[:m1, m2].copy(), cum[:m1, :m2].copy()
