"""Synthetic ranked-retrieval data with closed-form risk surfaces.

Each document draws a relevance grade ``g`` from ``grade_probs`` and two
independent scores ``clip(loc[g] + width[g] * (2U - 1), 0, 1)``, one for
retrieval and one for ranking.  Because the noise is uniform, the chance that
a grade-``g`` document clears a threshold is piecewise linear, and the true
first- and second-stage risks follow in closed form (the second through
binomial sums over ranked positions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .retrieval import DocRecord, QueryBatch, QueryRecord, discount_weights


@dataclass(frozen=True)
class SynthConfig:
    n_queries: int = 1000
    docs_min: int = 20
    docs_max: int = 40
    grade_probs: tuple[float, ...] = (0.50, 0.28, 0.14, 0.06, 0.02)
    ret_loc: tuple[float, ...] = (0.020, 0.075, 0.110, 0.140, 0.170)
    ret_width: tuple[float, ...] = (0.020, 0.070, 0.090, 0.100, 0.110)
    rank_loc: tuple[float, ...] = (0.015, 0.060, 0.100, 0.130, 0.160)
    rank_width: tuple[float, ...] = (0.015, 0.050, 0.070, 0.080, 0.090)
    seed: int = 0

    def __post_init__(self):
        for name in ("grade_probs", "ret_loc", "ret_width", "rank_loc", "rank_width"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        k = len(self.grade_probs)
        if k < 2:
            raise ValueError("need at least grades 0 and 1")
        if any(len(getattr(self, n)) != k for n in ("ret_loc", "ret_width", "rank_loc", "rank_width")):
            raise ValueError("per-grade score parameters must match grade_probs in length")
        if any(p < 0 for p in self.grade_probs) or not math.isclose(sum(self.grade_probs), 1.0, abs_tol=1e-9):
            raise ValueError("grade_probs must be a probability vector")
        if any(w < 0 for w in self.ret_width + self.rank_width):
            raise ValueError("noise widths must be non-negative")
        if not 1 <= self.docs_min <= self.docs_max:
            raise ValueError("need 1 <= docs_min <= docs_max")
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")

    @property
    def max_grade(self) -> int:
        return len(self.grade_probs) - 1

    def with_seed(self, seed: int, n_queries: int | None = None) -> "SynthConfig":
        return replace(self, seed=seed, n_queries=self.n_queries if n_queries is None else n_queries)


def _scores(rng, loc, width, grades):
    u = rng.random(grades.size)
    return np.clip(loc[grades] + width[grades] * (2.0 * u - 1.0), 0.0, 1.0)


def synth_batch(config: SynthConfig) -> QueryBatch:
    """Generate ``config.n_queries`` queries as a flat batch (deterministic in the seed)."""
    rng = np.random.default_rng(config.seed)
    sizes = rng.integers(config.docs_min, config.docs_max + 1, size=config.n_queries)
    offsets = np.zeros(config.n_queries + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    total = int(offsets[-1])
    grades = rng.choice(len(config.grade_probs), size=total, p=np.array(config.grade_probs))
    s_ret = _scores(rng, np.array(config.ret_loc), np.array(config.ret_width), grades)
    s_rank = _scores(rng, np.array(config.rank_loc), np.array(config.rank_width), grades)
    ids = tuple(f"q{i}" for i in range(config.n_queries))
    return QueryBatch(offsets, grades.astype(np.int64), s_ret, s_rank, ids)


def batch_to_queries(batch: QueryBatch) -> list[QueryRecord]:
    out = []
    for q in range(len(batch)):
        lo, hi = batch.offsets[q], batch.offsets[q + 1]
        qid = batch.query_ids[q] if batch.query_ids else q
        docs = tuple(
            DocRecord(f"d{j}", int(batch.relevance[lo + j]), float(batch.score_retrieval[lo + j]),
                      float(batch.score_rank[lo + j]))
            for j in range(hi - lo)
        )
        out.append(QueryRecord(qid, docs))
    return out


def synth_generate(config: SynthConfig) -> list[QueryRecord]:
    """Synthetic queries as records; see ``synth_batch`` for the array form."""
    return batch_to_queries(synth_batch(config))


# ---------------------------------------------------------------- analytics


def exceedance(loc: float, width: float, thresholds) -> np.ndarray:
    """P(clip(loc + width * (2U - 1), 0, 1) >= thr) for each threshold."""
    thr = np.asarray(thresholds, dtype=np.float64)
    if width == 0.0:
        p = (min(max(loc, 0.0), 1.0) >= thr).astype(np.float64)
    else:
        p = np.clip((loc + width - thr) / (2.0 * width), 0.0, 1.0)
    p = np.where(thr <= 0.0, 1.0, p)
    return np.where(thr > 1.0, 0.0, p)


def score_cdf(loc: float, width: float, x) -> np.ndarray:
    """P(score <= x) for one grade's clipped uniform score."""
    x = np.asarray(x, dtype=np.float64)
    if width == 0.0:
        return (min(max(loc, 0.0), 1.0) <= x).astype(np.float64)
    raw = np.clip((x - (loc - width)) / (2.0 * width), 0.0, 1.0)
    return np.where(x >= 1.0, 1.0, np.where(x < 0.0, 0.0, raw))


def grade_exceedances(config: SynthConfig, grid_lambda, grid_gamma) -> tuple[np.ndarray, np.ndarray]:
    """Per-grade inclusion probabilities: retrieval (G, m_lambda) and ranking (G, m_gamma).

    Thresholds are ``1.0 - t`` exactly as the loss code computes them.
    """
    thr_l = 1.0 - np.asarray(list(grid_lambda), dtype=np.float64)
    thr_g = 1.0 - np.asarray(list(grid_gamma), dtype=np.float64)
    q = np.array([exceedance(l, w, thr_l) for l, w in zip(config.ret_loc, config.ret_width)])
    p = np.array([exceedance(l, w, thr_g) for l, w in zip(config.rank_loc, config.rank_width)])
    return q, p


def _doc_count_probs(config: SynthConfig):
    ns = np.arange(config.docs_min, config.docs_max + 1)
    return ns, np.full(ns.size, 1.0 / ns.size)


def true_risk1(config: SynthConfig, grid_lambda) -> np.ndarray:
    """Expected retrieval loss at each lambda.

    Given at least one relevant document, each relevant document's grade is
    an independent draw from the grades above 0, so the expected covered
    fraction does not depend on how many there are.
    """
    q, _ = grade_exceedances(config, grid_lambda, [1.0])
    pi = np.array(config.grade_probs)
    p_any = sum(pn * (1.0 - pi[0] ** n) for n, pn in zip(*_doc_count_probs(config)))
    if pi[0] >= 1.0:
        return np.zeros(q.shape[1])
    qbar = (pi[1:, None] * q[1:]).sum(axis=0) / (1.0 - pi[0])
    return p_any * (1.0 - qbar)


@lru_cache(maxsize=16)
def _rank_coefficients(config: SynthConfig, r0: int) -> tuple[float, np.ndarray]:
    """P(any ranked target) and E[1{k>0} W_g / W] per grade g >= r0.

    ``W_g`` is the discount mass at the positions holding grade-g targets in
    the ranked list and ``W`` the total.  With ``k`` targets of i.i.d. grades
    sorted best first, position ``j`` holds grade ``g`` exactly when fewer
    than ``j`` targets beat ``g`` but at least ``j`` reach it, so each
    position's chance is a difference of two binomial CDFs.
    """
    pi = np.array(config.grade_probs)
    p_target = float(pi[r0:].sum())
    kmax = config.docs_max
    w = discount_weights(kmax)
    if p_target == 0.0:
        return 0.0, np.zeros(config.max_grade + 1 - r0)
    cond = pi[r0:] / p_target
    above = np.concatenate([np.cumsum(cond[::-1])[::-1][1:], [0.0]])  # P(grade > g | target)
    share = np.zeros((kmax + 1, cond.size))  # E[W_g / W | k]
    for k in range(1, kmax + 1):
        j = np.arange(k)
        for gi in range(cond.size):
            pos = _binom_cdf_upto(k, above[gi]) - _binom_cdf_upto(k, above[gi] + cond[gi])
            share[k, gi] = float(np.dot(w[:k], pos[j])) / float(w[:k].sum())
    p_any = 0.0
    coef = np.zeros(cond.size)
    for n, pn in zip(*_doc_count_probs(config)):
        pk = np.array([math.comb(n, k) * p_target**k * (1.0 - p_target) ** (n - k) for k in range(n + 1)])
        p_any += pn * float(pk[1:].sum())
        coef += pn * (pk[1:, None] * share[1 : n + 1]).sum(axis=0)
    return p_any, coef


def _binom_cdf_upto(k: int, p: float) -> np.ndarray:
    """P(Bin(k, p) <= i) for i = 0..k-1."""
    p = min(p, 1.0)
    pmf = np.array([math.comb(k, i) * p**i * (1.0 - p) ** (k - i) for i in range(k)])
    return np.cumsum(pmf)


def true_risk2(config: SynthConfig, grid_lambda, grid_gamma, r0: int = 1) -> np.ndarray:
    """Expected ranking loss on the (lambda, gamma) grid."""
    if not 1 <= r0 <= config.max_grade:
        raise ValueError(f"r0 must lie in [1, {config.max_grade}]")
    q, p = grade_exceedances(config, grid_lambda, grid_gamma)
    p_any, coef = _rank_coefficients(config, r0)
    covered = sum(c * np.outer(q[g], p[g]) for c, g in zip(coef, range(r0, config.max_grade + 1)))
    return np.maximum(p_any - covered, 0.0)  # clip round-off below 0


def known_lambda0(config: SynthConfig, grid_lambda, r0: int = 1) -> float:
    """Smallest grid lambda at which every ranked target is surely retrieved.

    At that lambda and gamma = 1 the ranking loss is 0 for every query,
    which makes it a valid feasibility point for the split calibrator.
    """
    floor = min(max(config.ret_loc[g] - config.ret_width[g], 0.0) for g in range(r0, config.max_grade + 1))
    for lam in grid_lambda:
        if floor > 1.0 - lam:
            return lam
    return list(grid_lambda)[-1]
