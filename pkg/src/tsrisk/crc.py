"""Two-stage conformal risk control (tCRC) and its data-splitting variant (tCRC-s).

All infima are over the finite grids.  A threshold is the smallest grid
value whose compensated loss sum is at most ``(n + 1) * alpha - 1``; sums
are compared with exact ``<=``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FeasibleSet, LossTable1, LossTable2, ParameterGrid, RiskLevels, ceil_to_grid


class InfeasibleError(RuntimeError):
    """No grid point satisfies a first-stage style constraint."""


@dataclass(frozen=True)
class CrcThresholds:
    lambda0_stage1: float
    lambda0_stage2: float
    gamma0_by_lambda: tuple[float, ...]

    @property
    def lambda_floor(self) -> float:
        return max(self.lambda0_stage1, self.lambda0_stage2)


@dataclass(frozen=True)
class SplitConfig:
    split_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must lie in (0, 1), got {self.split_fraction!r}")

    def split(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Seeded uniform shuffle, first ``round(fraction * n)`` indices go to I1."""
        n1 = int(round(self.split_fraction * n))
        if n1 < 1 or n - n1 < 1:
            raise ValueError(f"split of n={n} at fraction {self.split_fraction} leaves an empty part")
        perm = np.random.default_rng(self.seed).permutation(n)
        return np.sort(perm[:n1]), np.sort(perm[n1:])


def _require_monotone(*tables):
    for t in tables:
        if not t.monotone:
            raise ValueError("conformal calibration needs monotone loss tables; monotonize first")


def _first_at_most(sums: np.ndarray, bound: float) -> int | None:
    hits = np.flatnonzero(sums <= bound)
    return int(hits[0]) if hits.size else None


def _crc_bound(n: int, alpha: float) -> float:
    return (n + 1) * alpha - 1.0


def lambda_hat0_stage1_index(table1: LossTable1, alpha1: float) -> int:
    _require_monotone(table1)
    i = _first_at_most(table1.column_sums, _crc_bound(table1.n, alpha1))
    if i is None:
        raise InfeasibleError(
            f"no lambda in the grid brings the first-stage loss sum to (n+1)*alpha1-1 = "
            f"{_crc_bound(table1.n, alpha1):.6g}; sum at lambda=1 is {table1.column_sums[-1]:.6g} "
            "(losses at lambda=1 should be 0)"
        )
    return i


def lambda_hat0_stage1(table1: LossTable1, alpha1: float) -> float:
    """Smallest lambda whose first-stage loss sum is at most ``(n+1)*alpha1 - 1``."""
    return table1.grid[lambda_hat0_stage1_index(table1, alpha1)]


def _gamma_one_index(table2: LossTable2) -> int:
    # grid validity guarantees gamma=1 is the last grid point
    return len(table2.grid_gamma) - 1


def lambda_hat0_stage2_index(table2: LossTable2, alpha2: float) -> int:
    _require_monotone(table2)
    sums = table2.cell_sums[:, _gamma_one_index(table2)]
    i = _first_at_most(sums, _crc_bound(table2.n, alpha2))
    if i is None:
        raise InfeasibleError(
            f"no lambda makes the second-stage loss sum at gamma=1 at most "
            f"{_crc_bound(table2.n, alpha2):.6g}; sum at (1, 1) is {sums[-1]:.6g}"
        )
    return i


def lambda_hat0_stage2(table2: LossTable2, alpha2: float) -> float:
    """Smallest lambda keeping the gamma=1 second-stage loss sum at most ``(n+1)*alpha2 - 1``."""
    return table2.grid_lambda[lambda_hat0_stage2_index(table2, alpha2)]


def _gamma_indices(sums: np.ndarray, bound: float) -> np.ndarray:
    """Per row, first column with sum <= bound; the last column when none qualifies."""
    ok = sums <= bound
    first = np.argmax(ok, axis=1)
    return np.where(ok.any(axis=1), first, sums.shape[1] - 1)


def gamma_hat0_index(table2: LossTable2, lambda_index: int, alpha2: float) -> int:
    _require_monotone(table2)
    row = table2.cell_sums[lambda_index][None, :]
    return int(_gamma_indices(row, _crc_bound(table2.n, alpha2))[0])


def gamma_hat0(table2: LossTable2, lambda_index: int, alpha2: float) -> float:
    """Smallest gamma with loss sum at most ``(n+1)*alpha2 - 1`` at this lambda, else 1.0."""
    return table2.grid_gamma[gamma_hat0_index(table2, lambda_index, alpha2)]


def crc_thresholds(table1: LossTable1, table2: LossTable2, levels: RiskLevels) -> CrcThresholds:
    _check_pair(table1, table2)
    levels.check_conformal(table1.n)
    gi = _gamma_indices(table2.cell_sums, _crc_bound(table2.n, levels.alpha2))
    return CrcThresholds(
        lambda_hat0_stage1(table1, levels.alpha1),
        lambda_hat0_stage2(table2, levels.alpha2),
        tuple(table2.grid_gamma[int(j)] for j in gi),
    )


def lambda_hat_t(t: float, thresholds: CrcThresholds, grid_lambda: ParameterGrid) -> float:
    """Grid ceiling of ``t * max(lambda0_1, lambda0_2) + (1 - t)``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t!r}")
    x = min(t * thresholds.lambda_floor + (1.0 - t), 1.0)
    return ceil_to_grid(x, grid_lambda)


def _check_pair(table1: LossTable1, table2: LossTable2):
    _require_monotone(table1, table2)
    if table1.n != table2.n:
        raise ValueError(f"tables disagree on sample count: {table1.n} vs {table2.n}")
    if table1.grid != table2.grid_lambda:
        raise ValueError("first-stage grid differs from the second-stage lambda grid")


def tcrc_point(table1: LossTable1, table2: LossTable2, levels: RiskLevels, t: float) -> tuple[float, float]:
    """The tCRC pair at mixing weight ``t``: (lambda_hat(t), gamma_hat0(lambda_hat(t)))."""
    return tcrc_points(table1, table2, levels, [t])[0]


def tcrc_points(table1: LossTable1, table2: LossTable2, levels: RiskLevels, ts) -> list[tuple[float, float]]:
    """``tcrc_point`` for several mixing weights, sharing one threshold computation."""
    th = crc_thresholds(table1, table2, levels)
    out = []
    for t in ts:
        lam = lambda_hat_t(t, th, table1.grid)
        out.append((lam, th.gamma0_by_lambda[table1.grid.index_of(lam)]))
    return out


def tcrc_feasible_set(table1: LossTable1, table2: LossTable2, levels: RiskLevels) -> FeasibleSet:
    """Every grid lambda at or above the tCRC floor, each with gammas from its gamma_hat0 up.

    The ceiling of ``t * floor + (1 - t)`` sweeps exactly the grid values in
    ``[floor, 1]`` as ``t`` runs over [0, 1], so no t-discretisation is needed.
    """
    th = crc_thresholds(table1, table2, levels)
    gl, gg = table1.grid, table2.grid_gamma
    a0 = gl.ceil_index(th.lambda_floor)
    pairs = {(a, b) for a in range(a0, len(gl)) for b in range(gg.ceil_index(th.gamma0_by_lambda[a]), len(gg))}
    return FeasibleSet(frozenset(pairs), gl, gg, provenance="tcrc", info={"thresholds": th})


def estimate_lambda0(table2_i1: LossTable2, alpha2: float) -> float:
    """Smallest lambda whose gamma=1 loss is at most ``alpha2`` for every sample; 1.0 if none.

    A per-sample reading of the feasibility assumption, estimated on the
    first split part.
    """
    _require_monotone(table2_i1)
    worst = table2_i1.entries[:, :, _gamma_one_index(table2_i1)].max(axis=0)
    i = _first_at_most(worst, alpha2)
    return table2_i1.grid_lambda[-1 if i is None else i]


@dataclass(frozen=True)
class SplitThresholds:
    lambda0_stage1: float  # on I1
    lambda0: float  # known or estimated feasibility point, on the grid
    lambda_floor: float
    gamma_bar: float
    n1: int
    n2: int
    lambda0_estimated: bool = False
    split: tuple = field(default=(), repr=False, compare=False)


def split_thresholds(table1: LossTable1, table2: LossTable2, levels: RiskLevels,
                     split: SplitConfig, lambda0: float | str = "estimate") -> SplitThresholds:
    _check_pair(table1, table2)
    i1, i2 = split.split(table1.n)
    n1, n2 = len(i1), len(i2)
    levels.check_conformal(n1)
    t1_a, t2_a, t2_b = table1.subset(i1), table2.subset(i1), table2.subset(i2)

    lam1 = lambda_hat0_stage1(t1_a, levels.alpha1)
    estimated = isinstance(lambda0, str)
    if estimated:
        if lambda0 != "estimate":
            raise ValueError(f"lambda0 must be a number or 'estimate', got {lambda0!r}")
        lam0 = estimate_lambda0(t2_a, levels.alpha2)
    else:
        lam0 = ceil_to_grid(float(lambda0), table1.grid)
    floor = ceil_to_grid(max(lam1, lam0), table1.grid)

    a = table1.grid.index_of(floor)
    gb = _gamma_indices(t2_b.cell_sums[a][None, :], _crc_bound(n2, levels.alpha2))[0]
    return SplitThresholds(lam1, lam0, floor, table2.grid_gamma[int(gb)], n1, n2, estimated, (i1, i2))


def tcrc_split_feasible_set(table1: LossTable1, table2: LossTable2, levels: RiskLevels,
                            split: SplitConfig, lambda0: float | str = "estimate") -> FeasibleSet:
    """tCRC-s set: lambdas from the split floor up, gammas from ``gamma_bar`` up."""
    st = split_thresholds(table1, table2, levels, split, lambda0)
    gl, gg = table1.grid, table2.grid_gamma
    b0 = gg.index_of(st.gamma_bar)
    pairs = {(a, b) for a in range(gl.index_of(st.lambda_floor), len(gl)) for b in range(b0, len(gg))}
    return FeasibleSet(frozenset(pairs), gl, gg, provenance="tcrc-s", info={"thresholds": st})


def tcrc_split_point(table1: LossTable1, table2: LossTable2, levels: RiskLevels, t: float,
                     split: SplitConfig, lambda0: float | str = "estimate") -> tuple[float, float]:
    """The tCRC-s pair at mixing weight ``t``; gamma is calibrated on I2 at that lambda."""
    return tcrc_split_points(table1, table2, levels, [t], split, lambda0)[0]


def tcrc_split_points(table1: LossTable1, table2: LossTable2, levels: RiskLevels, ts,
                      split: SplitConfig, lambda0: float | str = "estimate") -> list[tuple[float, float]]:
    """``tcrc_split_point`` for several mixing weights, sharing one split."""
    for t in ts:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t!r}")
    st = split_thresholds(table1, table2, levels, split, lambda0)
    sums = table2.subset(st.split[1]).cell_sums
    bound = _crc_bound(st.n2, levels.alpha2)
    out = []
    for t in ts:
        lam = ceil_to_grid(min(t * st.lambda_floor + (1.0 - t), 1.0), table1.grid)
        gb = _gamma_indices(sums[table1.grid.index_of(lam)][None, :], bound)[0]
        out.append((lam, table2.grid_gamma[int(gb)]))
    return out
