"""Ranked-retrieval data model, prediction sets, losses and monotonization.

The scalar functions here (``build_c1``, ``retrieval_loss``, ...) work on one
``QueryRecord`` at a time and are the readable reference.  ``build_loss_tables``
evaluates the same losses on whole grids through the compiled kernels and
agrees with the scalar path bit for bit: both compare ``score >= 1.0 - t``
and accumulate discounted gains left to right in ranked order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Sequence

import numpy as np

from ._backend import kernels
from .core import LossTable1, LossTable2, ParameterGrid

log = logging.getLogger(__name__)


class ValidationError(ValueError):
    """Malformed query or document data."""


@dataclass(frozen=True)
class DocRecord:
    doc_id: Hashable
    relevance: int
    score_retrieval: float
    score_rank: float

    def __post_init__(self):
        if int(self.relevance) != self.relevance or self.relevance < 0:
            raise ValidationError(f"doc {self.doc_id!r}: relevance must be a non-negative integer, got {self.relevance!r}")
        for name in ("score_retrieval", "score_rank"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and 0.0 <= v <= 1.0):
                raise ValidationError(f"doc {self.doc_id!r}: {name} must lie in [0, 1], got {v!r}")


@dataclass(frozen=True)
class QueryRecord:
    query_id: Hashable
    docs: tuple[DocRecord, ...]

    def __post_init__(self):
        docs = tuple(self.docs)
        if not docs:
            raise ValidationError(f"query {self.query_id!r} has no documents")
        ids = [d.doc_id for d in docs]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"query {self.query_id!r} has duplicate doc ids")
        object.__setattr__(self, "docs", docs)

    def relevant(self) -> list[DocRecord]:
        """Documents with relevance > 0."""
        return [d for d in self.docs if d.relevance > 0]

    def ranked_targets(self, r0: int) -> list[DocRecord]:
        """Documents with relevance >= r0, highest grade first, ties in input order."""
        return sorted((d for d in self.docs if d.relevance >= r0), key=lambda d: -d.relevance)


@dataclass(frozen=True)
class R0Config:
    r0: int = 1
    max_relevance: int | None = None

    def __post_init__(self):
        if self.r0 < 1:
            raise ValueError(f"r0 must be >= 1, got {self.r0}")
        if self.max_relevance is not None and self.r0 > self.max_relevance:
            raise ValueError(f"r0={self.r0} exceeds the maximum relevance grade {self.max_relevance}")


def _r0(r0) -> int:
    return r0.r0 if isinstance(r0, R0Config) else int(r0)


def build_c1(query: QueryRecord, lam: float) -> set:
    """Ids of documents whose retrieval score is at least ``1 - lam``."""
    thr = 1.0 - lam
    return {d.doc_id for d in query.docs if d.score_retrieval >= thr}


def build_c2(query: QueryRecord, lam: float, gam: float) -> set:
    """Retrieved documents whose ranking score is also at least ``1 - gam``."""
    thr = 1.0 - gam
    c1 = build_c1(query, lam)
    return {d.doc_id for d in query.docs if d.score_rank >= thr and d.doc_id in c1}


def retrieval_loss(query: QueryRecord, lam: float) -> float:
    """Fraction of relevant documents missed by the retrieved set (0 if none are relevant)."""
    rel = query.relevant()
    if not rel:
        return 0.0
    c1 = build_c1(query, lam)
    covered = sum(1 for d in rel if d.doc_id in c1)
    return 1.0 - covered / len(rel)


@lru_cache(maxsize=8)
def _discounts(k: int) -> tuple[float, ...]:
    return tuple(1.0 / math.log(j + 1.0) for j in range(1, k + 1))


def discount_weights(k: int) -> np.ndarray:
    """Position discounts ``1 / ln(j + 1)`` for ``j = 1..k``."""
    return np.array(_discounts(_bucket(k)), dtype=np.float64)[:k]


def _bucket(k: int) -> int:
    # cache a few sizes instead of one per k
    return 1 << max(k - 1, 0).bit_length()


def ranking_loss(query: QueryRecord, lam: float, gam: float, r0=1, log_base: float | None = None) -> float:
    """One minus the modified nDCG of the second-stage set against the ranked targets.

    Position ``j`` of the ranked target list carries weight ``1/log(j+1)``;
    gains are 0/1 membership in the prediction set.  The log base cancels
    between numerator and denominator; ``log_base`` exists to check that.
    """
    z = query.ranked_targets(_r0(r0))
    if not z:
        return 0.0
    c2 = build_c2(query, lam, gam)
    if log_base is None:
        w = _discounts(_bucket(len(z)))
    else:
        w = [1.0 / math.log(j + 1.0, log_base) for j in range(1, len(z) + 1)]
    dcg = 0.0
    idcg = 0.0
    for j, d in enumerate(z):
        idcg += w[j]
        if d.doc_id in c2:
            dcg += w[j]
    return 1.0 - dcg / idcg


@dataclass(frozen=True, eq=False)
class QueryBatch:
    """Flat, array-backed view of many queries for the kernels."""

    offsets: np.ndarray
    relevance: np.ndarray
    score_retrieval: np.ndarray
    score_rank: np.ndarray
    query_ids: tuple = ()

    @classmethod
    def from_queries(cls, queries: Sequence[QueryRecord]) -> "QueryBatch":
        sizes = [len(q.docs) for q in queries]
        offsets = np.zeros(len(queries) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        docs = [d for q in queries for d in q.docs]
        return cls(
            offsets,
            np.fromiter((d.relevance for d in docs), dtype=np.int64, count=len(docs)),
            np.fromiter((d.score_retrieval for d in docs), dtype=np.float64, count=len(docs)),
            np.fromiter((d.score_rank for d in docs), dtype=np.float64, count=len(docs)),
            tuple(q.query_id for q in queries),
        )

    def __len__(self):
        return len(self.offsets) - 1

    def take(self, index) -> "QueryBatch":
        """Sub-batch of the given query positions, in that order."""
        index = np.asarray(index, dtype=np.int64)
        lo, hi = self.offsets[index], self.offsets[index + 1]
        sizes = hi - lo
        offsets = np.zeros(len(index) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        doc_idx = np.repeat(lo - offsets[:-1], sizes) + np.arange(offsets[-1])
        ids = tuple(self.query_ids[i] for i in index) if self.query_ids else ()
        return QueryBatch(offsets, self.relevance[doc_idx], self.score_retrieval[doc_idx],
                          self.score_rank[doc_idx], ids)

    def max_ranked(self, r0: int) -> int:
        q_of_doc = np.repeat(np.arange(len(self)), np.diff(self.offsets))
        counts = np.bincount(q_of_doc[self.relevance >= r0], minlength=len(self))
        return int(counts.max()) if counts.size else 0


def _as_batch(queries) -> QueryBatch:
    return queries if isinstance(queries, QueryBatch) else QueryBatch.from_queries(queries)


def loss_arrays(queries, grid_lambda, grid_gamma, r0=1) -> tuple[np.ndarray, np.ndarray]:
    """Raw loss arrays ``(n, m_lambda)`` and ``(n, m_lambda, m_gamma)``.

    Grids may be any increasing float arrays here (they need not end at 1).
    """
    b = _as_batch(queries)
    r0 = _r0(r0)
    lam = np.asarray(list(grid_lambda), dtype=np.float64)
    gam = np.asarray(list(grid_gamma), dtype=np.float64)
    w = discount_weights(max(b.max_ranked(r0), 1))
    return kernels.loss_tables(b.offsets, b.relevance, b.score_retrieval, b.score_rank, lam, gam, r0, w)


def build_loss_tables(queries, grid_lambda: ParameterGrid, grid_gamma: ParameterGrid, r0=1) -> tuple[LossTable1, LossTable2]:
    """Loss tables for every query at every grid point, flagged monotone."""
    b = _as_batch(queries)
    t1, t2 = loss_arrays(b, grid_lambda, grid_gamma, r0)
    table1 = LossTable1(t1, grid_lambda, monotone=True)
    table2 = LossTable2(t2, grid_lambda, grid_gamma, monotone=True)
    _warn_boundary(t1)
    return table1, table2


def _warn_boundary(t1: np.ndarray):
    # relevant docs scoring exactly 1.0 make L1(0) < 1; only worth a warning
    if t1.shape[1] and t1.shape[0]:
        frac = float(np.mean(t1[:, 0] < 1.0))
        if frac > 0.01:
            log.debug("%.1f%% of queries have first-stage loss < 1 at the smallest lambda", 100 * frac)


def empty_target_counts(queries, r0=1) -> dict[str, int]:
    """How many queries have no relevant docs / no ranked targets (their losses are 0)."""
    b = _as_batch(queries)
    q_of_doc = np.repeat(np.arange(len(b)), np.diff(b.offsets))
    n_rel = np.bincount(q_of_doc[b.relevance > 0], minlength=len(b))
    n_z = np.bincount(q_of_doc[b.relevance >= _r0(r0)], minlength=len(b))
    return {"no_relevant": int((n_rel == 0).sum()), "no_ranked_targets": int((n_z == 0).sum())}


def monotonize_rows(entries: np.ndarray) -> np.ndarray:
    """Suffix running maximum along the last axis."""
    return np.maximum.accumulate(entries[..., ::-1], axis=-1)[..., ::-1]


def monotonize1(table1: LossTable1) -> LossTable1:
    """Replace each loss by its supremum over all larger thresholds."""
    return LossTable1(monotonize_rows(table1.entries), table1.grid, monotone=True)


def monotonize2(table2: LossTable2) -> LossTable2:
    """Replace each loss by its supremum over the upper-right quadrant of the grid."""
    e = monotonize_rows(table2.entries)  # along gamma
    e = np.maximum.accumulate(e[:, ::-1, :], axis=1)[:, ::-1, :]  # then along lambda
    return LossTable2(e, table2.grid_lambda, table2.grid_gamma, monotone=True)
