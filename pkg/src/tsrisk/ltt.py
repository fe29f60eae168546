"""Learn-then-test calibration: p-value families and FWER-controlling procedures.

Stage-1 hypotheses ``H1[i]: R1(lambda_i) > alpha1`` and stage-2 hypotheses
``H2[i, j]: R2(lambda_i, gamma_j) > alpha2`` are tested jointly.  Every
procedure is described by a *level table*: a per-``i`` level for stage 1,
a per-``i`` level for stage 2, and for each stage whether it is tested by
fixed sequence (from the largest index down, stopping at the first
non-rejection) or by Bonferroni (each hypothesis on its own).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeasibleSet, LossTable1, LossTable2, ParameterGrid, RiskLevels
from .pvalue import hb_pvalues_from_sums

PROCEDURES = ("main", "appendix1", "appendix2", "appendix3")


@dataclass(frozen=True, eq=False)
class PValueFamilies:
    stage1: np.ndarray  # (m_lambda,)
    stage2: np.ndarray  # (m_lambda, m_gamma)
    grid_lambda: object = None
    grid_gamma: object = None

    def __post_init__(self):
        s1 = np.asarray(self.stage1, dtype=np.float64)
        s2 = np.asarray(self.stage2, dtype=np.float64)
        if s1.ndim != 1 or s2.ndim != 2 or s2.shape[0] != s1.shape[0]:
            raise ValueError(f"mismatched p-value shapes {s1.shape} and {s2.shape}")
        # bare p-value arrays get placeholder grids k/m so results can be indexed
        if self.grid_lambda is None:
            object.__setattr__(self, "grid_lambda", ParameterGrid.uniform(s1.shape[0]))
        if self.grid_gamma is None:
            object.__setattr__(self, "grid_gamma", ParameterGrid.uniform(s2.shape[1]))
        if len(self.grid_lambda) != s1.shape[0]:
            raise ValueError("stage-1 p-values do not match the lambda grid")
        if len(self.grid_gamma) != s2.shape[1]:
            raise ValueError("stage-2 p-values do not match the gamma grid")
        object.__setattr__(self, "stage1", s1)
        object.__setattr__(self, "stage2", s2)

    @property
    def shape(self) -> tuple[int, int]:
        return self.stage2.shape


@dataclass(frozen=True)
class LttConfig:
    delta: float = 0.01
    procedure: str = "main"
    w: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.procedure not in PROCEDURES:
            raise ValueError(f"unknown procedure {self.procedure!r}; choose from {PROCEDURES}")
        if self.procedure in ("appendix1", "appendix3"):
            if self.w is None or not 0.0 < self.w < 1.0:
                raise ValueError(f"procedure {self.procedure} needs w in (0, 1), got {self.w!r}")


def compute_pvalue_families(table1: LossTable1, table2: LossTable2, levels: RiskLevels) -> PValueFamilies:
    if table1.n != table2.n:
        raise ValueError(f"tables disagree on sample count: {table1.n} vs {table2.n}")
    if table1.grid != table2.grid_lambda:
        raise ValueError("first-stage grid differs from the second-stage lambda grid")
    n = table1.n
    return PValueFamilies(
        hb_pvalues_from_sums(table1.column_sums, n, levels.alpha1),
        hb_pvalues_from_sums(table2.cell_sums, n, levels.alpha2),
        table1.grid,
        table2.grid_gamma,
    )


@dataclass(frozen=True)
class LevelTable:
    stage1: np.ndarray
    stage1_sequential: bool
    stage2: np.ndarray  # per lambda index, applied to every gamma
    stage2_sequential: bool


def level_table(config: LttConfig, m_lambda: int, m_gamma: int) -> LevelTable:
    """Per-hypothesis testing levels of a procedure.

    Geometric budgets ``w**(m-i) * delta`` use a direct power; for any
    ``m`` where it underflows the level is 0 and nothing is rejected,
    which is the conservative outcome anyway.
    """
    delta, w = config.delta, config.w
    bonf = np.full(m_lambda, delta / m_lambda)
    if config.procedure == "main":
        return LevelTable(bonf, False, bonf, True)
    if config.procedure == "appendix2":
        return LevelTable(bonf, False, np.full(m_lambda, delta / (m_lambda * m_gamma)), False)
    # the largest index is tested first at the full budget; products are
    # formed left to right as written, w**k * delta and (1-w) * w**k * delta
    wk = w ** np.arange(m_lambda - 1, -1, -1, dtype=np.float64)
    if config.procedure == "appendix1":
        return LevelTable(wk * delta, True, (1.0 - w) * wk * delta, True)
    return LevelTable(wk * delta, True, (1.0 - w) * wk * delta / m_gamma, False)


def _suffix_rejections(p: np.ndarray, level) -> int:
    """Start index of the rejected suffix under fixed-sequence testing."""
    ok = p <= level
    start = len(p)
    while start > 0 and ok[start - 1]:
        start -= 1
    return start


def run_procedure(families: PValueFamilies, config: LttConfig) -> FeasibleSet:
    """Apply ``config.procedure`` to the p-value families."""
    m1, m2 = families.shape
    lv = level_table(config, m1, m2)
    p1, p2 = families.stage1, families.stage2
    if lv.stage1_sequential:
        rejected1 = range(_suffix_rejections(p1, lv.stage1), m1)
    else:
        rejected1 = np.flatnonzero(p1 <= lv.stage1)
    pairs = []
    for i in rejected1:
        i = int(i)
        if lv.stage2_sequential:
            js = range(_suffix_rejections(p2[i], lv.stage2[i]), m2)
        else:
            js = np.flatnonzero(p2[i] <= lv.stage2[i])
        pairs.extend((i, int(j)) for j in js)
    return FeasibleSet(
        frozenset(pairs), families.grid_lambda, families.grid_gamma, provenance=f"ltt:{config.procedure}",
        info={"delta": config.delta, "w": config.w, "stage1_rejected": [int(i) for i in rejected1]},
    )


def _require(config: LttConfig, name: str):
    if config.procedure != name:
        raise ValueError(f"expected procedure {name!r}, config has {config.procedure!r}")


def ltt_main(families: PValueFamilies, config: LttConfig) -> FeasibleSet:
    """Bonferroni over lambda at delta/m, then fixed sequence over gamma at delta/m."""
    _require(config, "main")
    return run_procedure(families, config)


def ltt_appendix1(families: PValueFamilies, config: LttConfig) -> FeasibleSet:
    """Fixed sequence at geometric budgets in both stages."""
    _require(config, "appendix1")
    return run_procedure(families, config)


def ltt_appendix2(families: PValueFamilies, config: LttConfig) -> FeasibleSet:
    """Bonferroni in both stages (delta/m_lambda, then delta/(m_lambda*m_gamma))."""
    _require(config, "appendix2")
    return run_procedure(families, config)


def ltt_appendix3(families: PValueFamilies, config: LttConfig) -> FeasibleSet:
    """Geometric fixed sequence over lambda, Bonferroni over gamma."""
    _require(config, "appendix3")
    return run_procedure(families, config)


def ltt_calibrate(table1: LossTable1, table2: LossTable2, levels: RiskLevels, config: LttConfig) -> FeasibleSet:
    """p-value families plus the configured procedure, in one call."""
    for t in (table1, table2):
        if not t.monotone:
            raise ValueError("LTT needs monotone loss tables; monotonize first")
    return run_procedure(compute_pvalue_families(table1, table2, levels), config)
