"""Choosing one pair from a feasible set, and held-out evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._backend import kernels
from .core import FeasibleSet
from .retrieval import QueryBatch, _as_batch, _r0, loss_arrays


class EmptyFeasibleSetError(ValueError):
    """Raised when asked to select from an empty feasible set."""


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights on the mean first-stage and second-stage set sizes."""

    weight_c1: float = 0.0
    weight_c2: float = 1.0

    def __post_init__(self):
        if self.weight_c1 < 0 or self.weight_c2 < 0:
            raise ValueError("objective weights must be non-negative")
        if self.weight_c1 == 0 and self.weight_c2 == 0:
            raise ValueError("at least one objective weight must be positive")


def set_size_means(queries, grid_lambda, grid_gamma) -> tuple[np.ndarray, np.ndarray]:
    """Mean |C1| per lambda and mean |C2| per (lambda, gamma) over the queries."""
    b = _as_batch(queries)
    lam = np.asarray(list(grid_lambda), dtype=np.float64)
    gam = np.asarray(list(grid_gamma), dtype=np.float64)
    s1, s2 = kernels.set_size_totals(b.score_retrieval, b.score_rank, lam, gam)
    return s1 / len(b), s2 / len(b)


def objective_values(queries, grid_lambda, grid_gamma, objective: ObjectiveConfig = ObjectiveConfig()) -> np.ndarray:
    c1, c2 = set_size_means(queries, grid_lambda, grid_gamma)
    return objective.weight_c2 * c2 + objective.weight_c1 * c1[:, None]


def select_pair(feasible: FeasibleSet, queries, objective: ObjectiveConfig = ObjectiveConfig()) -> tuple[float, float]:
    """Feasible pair with the smallest set-size objective on the calibration queries.

    Ties go to the smallest lambda, then the smallest gamma.
    """
    a, b = select_pair_index(feasible, queries, objective)
    return feasible.grid_lambda[a], feasible.grid_gamma[b]


def select_pair_index(feasible: FeasibleSet, queries, objective: ObjectiveConfig = ObjectiveConfig()) -> tuple[int, int]:
    if not feasible:
        raise EmptyFeasibleSetError("feasible set is empty: infeasible at the requested risk levels")
    obj = objective_values(queries, feasible.grid_lambda, feasible.grid_gamma, objective)
    best, best_val = None, math.inf
    for a, b in feasible.sorted_pairs():
        if obj[a, b] < best_val:
            best, best_val = (a, b), obj[a, b]
    return best


@dataclass(frozen=True)
class EvalReport:
    risk1: float
    risk2: float
    set_size: float
    recall_ge2: float
    recall_eq1: float
    precision: float
    n_queries: int
    skipped_recall_ge2: int = 0
    skipped_recall_eq1: int = 0
    skipped_precision: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def evaluate(queries, lam: float, gam: float, r0=1) -> EvalReport:
    """Risks, mean second-stage set size, recalls and precision at one pair.

    Ratios with an empty denominator are left out of their average; the
    number left out is reported alongside.
    """
    b: QueryBatch = _as_batch(queries)
    nq = len(b)
    t1, t2 = loss_arrays(b, [lam], [gam], _r0(r0))
    in_c2 = (b.score_retrieval >= 1.0 - lam) & (b.score_rank >= 1.0 - gam)
    q_of_doc = np.repeat(np.arange(nq), np.diff(b.offsets))

    def per_query(mask):
        return np.bincount(q_of_doc[mask], minlength=nq)

    size = per_query(in_c2)
    rel = b.relevance
    ge2, eq1, ge1 = per_query(rel >= 2), per_query(rel == 1), per_query(rel >= 1)
    hit_ge2, hit_eq1, hit_ge1 = per_query(in_c2 & (rel >= 2)), per_query(in_c2 & (rel == 1)), per_query(in_c2 & (rel >= 1))

    def ratios(num, den):
        keep = den > 0
        return (num[keep] / den[keep]).tolist(), int((~keep).sum())

    r_ge2, s_ge2 = ratios(hit_ge2, ge2)
    r_eq1, s_eq1 = ratios(hit_eq1, eq1)
    prec, s_prec = ratios(hit_ge1, size)
    return EvalReport(
        risk1=_mean(t1[:, 0].tolist()),
        risk2=_mean(t2[:, 0, 0].tolist()),
        set_size=_mean(size.tolist()),
        recall_ge2=_mean(r_ge2),
        recall_eq1=_mean(r_eq1),
        precision=_mean(prec),
        n_queries=nq,
        skipped_recall_ge2=s_ge2,
        skipped_recall_eq1=s_eq1,
        skipped_precision=s_prec,
    )
