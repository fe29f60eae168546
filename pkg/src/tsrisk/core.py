"""Threshold grids, per-sample loss tables and feasible parameter sets."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._backend import kernels


class GridError(ValueError):
    """Raised for malformed threshold grids."""


class LossTableError(ValueError):
    """Raised for malformed loss tables."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """A finite, strictly increasing set of thresholds in [0, 1] ending at 1.0."""

    values: np.ndarray

    def __post_init__(self):
        v = _readonly(np.atleast_1d(np.asarray(self.values, dtype=np.float64)))
        if v.ndim != 1 or v.size == 0:
            raise GridError("grid must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(v)) or v[0] < 0.0 or v[-1] > 1.0:
            raise GridError("grid values must lie in [0, 1]")
        if np.any(np.diff(v) <= 0):
            raise GridError("grid must be strictly increasing")
        if v[-1] != 1.0:
            raise GridError(f"grid maximum must be exactly 1.0, got {v[-1]!r}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_list", v.tolist())

    @classmethod
    def arange(cls, start: float, stop: float = 1.0, step: float = 0.001, decimals: int = 6):
        """Evenly spaced grid from ``start`` to ``stop`` inclusive.

        Values are rounded to ``decimals`` places so that e.g. ``0.953`` is the
        double nearest to the decimal 0.953.
        """
        count = int(round((stop - start) / step)) + 1
        return cls(np.round(start + step * np.arange(count), decimals))

    @classmethod
    def uniform(cls, m: int):
        """The grid ``{1/m, 2/m, ..., 1}``."""
        return cls(np.arange(1, m + 1) / m)

    def __len__(self) -> int:
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]

    def __iter__(self):
        return iter(self._list)

    def __eq__(self, other):
        return isinstance(other, ParameterGrid) and self._list == other._list

    def __hash__(self):
        return hash(tuple(self._list))

    def __repr__(self):
        if len(self) > 6:
            return f"ParameterGrid([{self[0]!r}, {self[1]!r}, ..., {self[-1]!r}], m={len(self)})"
        return f"ParameterGrid({self._list!r})"

    def index_of(self, x: float) -> int:
        """Index of the grid value equal to ``x``; raises KeyError otherwise."""
        i = bisect.bisect_left(self._list, x)
        if i == len(self._list) or self._list[i] != x:
            raise KeyError(x)
        return i

    def ceil_index(self, x: float) -> int:
        """Index of the smallest grid value >= ``x``."""
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"x must lie in [0, 1], got {x!r}")
        return bisect.bisect_left(self._list, x)


def ceil_to_grid(x: float, grid: ParameterGrid) -> float:
    """Smallest grid value that is >= ``x``.

    Always defined on a valid grid because the grid contains 1.0.
    """
    return grid[grid.ceil_index(x)]


def _increases(e: np.ndarray, axis: int) -> bool:
    hi = [slice(None)] * e.ndim
    lo = [slice(None)] * e.ndim
    hi[axis], lo[axis] = slice(1, None), slice(None, -1)
    return bool(np.any(e[tuple(hi)] > e[tuple(lo)]))


def _trusted(cls, **attrs):
    # rows of an already validated table need no second check
    obj = object.__new__(cls)
    for k, v in attrs.items():
        object.__setattr__(obj, k, v)
    return obj


def _rows(e: np.ndarray, index) -> np.ndarray:
    out = e[np.asarray(index)]
    out.setflags(write=False)
    return out


def _check_unit_interval(a: np.ndarray):
    if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
        raise LossTableError("loss entries must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class LossTable1:
    """First-stage losses: ``entries[i, a]`` is sample i's loss at ``grid[a]``.

    ``monotone=True`` asserts each row is non-increasing along the grid; the
    claim is verified at construction.
    """

    entries: np.ndarray
    grid: ParameterGrid
    monotone: bool = False

    def __post_init__(self):
        e = _readonly(self.entries)
        if e.ndim != 2 or e.shape[1] != len(self.grid):
            raise LossTableError(f"expected shape (n, {len(self.grid)}), got {e.shape}")
        if e.shape[0] == 0:
            raise LossTableError("loss table needs at least one sample")
        _check_unit_interval(e)
        if self.monotone and _increases(e, 1):
            raise LossTableError("table flagged monotone but a row increases along the grid")
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def column_sums(self) -> np.ndarray:
        """Compensated per-threshold loss sums, accumulated over samples in order."""
        s = kernels.neumaier_colsum(self.entries)
        s.setflags(write=False)
        return s

    def subset(self, index) -> "LossTable1":
        return _trusted(LossTable1, entries=_rows(self.entries, index), grid=self.grid, monotone=self.monotone)


@dataclass(frozen=True, eq=False)
class LossTable2:
    """Second-stage losses: ``entries[i, a, b]`` at ``(grid_lambda[a], grid_gamma[b])``."""

    entries: np.ndarray
    grid_lambda: ParameterGrid
    grid_gamma: ParameterGrid
    monotone: bool = False

    def __post_init__(self):
        e = _readonly(self.entries)
        shape = (len(self.grid_lambda), len(self.grid_gamma))
        if e.ndim != 3 or e.shape[1:] != shape:
            raise LossTableError(f"expected shape (n, {shape[0]}, {shape[1]}), got {e.shape}")
        if e.shape[0] == 0:
            raise LossTableError("loss table needs at least one sample")
        _check_unit_interval(e)
        if self.monotone and (_increases(e, 1) or _increases(e, 2)):
            raise LossTableError("table flagged monotone but a slice increases along a grid axis")
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def cell_sums(self) -> np.ndarray:
        """Compensated per-cell loss sums, shape (m_lambda, m_gamma)."""
        n, m1, m2 = self.entries.shape
        s = kernels.neumaier_colsum(self.entries.reshape(n, m1 * m2)).reshape(m1, m2)
        s.setflags(write=False)
        return s

    def subset(self, index) -> "LossTable2":
        return _trusted(LossTable2, entries=_rows(self.entries, index), grid_lambda=self.grid_lambda,
                        grid_gamma=self.grid_gamma, monotone=self.monotone)


def empirical_risk1(table: LossTable1, lambda_index: int) -> float:
    return float(table.column_sums[lambda_index] / table.n)


def empirical_risk2(table: LossTable2, lambda_index: int, gamma_index: int) -> float:
    return float(table.cell_sums[lambda_index, gamma_index] / table.n)


@dataclass(frozen=True)
class RiskLevels:
    """Target risk levels for the retrieval (``alpha1``) and ranking (``alpha2``) stages."""

    alpha1: float
    alpha2: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")

    def check_conformal(self, n: int):
        """Raise unless both levels lie in (1/(n+1), 1]."""
        lo = 1.0 / (n + 1)
        for name in ("alpha1", "alpha2"):
            v = getattr(self, name)
            if not lo < v <= 1.0:
                raise ValueError(f"{name}={v!r} must lie in (1/(n+1), 1] = ({lo:.6g}, 1] for n={n}")


@dataclass(frozen=True)
class FeasibleSet:
    """Grid-index pairs ``(lambda_index, gamma_index)`` certified by a calibrator."""

    pairs: frozenset
    grid_lambda: ParameterGrid
    grid_gamma: ParameterGrid
    provenance: str = ""
    info: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        pairs = frozenset((int(a), int(b)) for a, b in self.pairs)
        m1, m2 = len(self.grid_lambda), len(self.grid_gamma)
        for a, b in pairs:
            if not (0 <= a < m1 and 0 <= b < m2):
                raise IndexError(f"pair {(a, b)} outside a {m1}x{m2} grid")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def __bool__(self):
        return bool(self.pairs)

    def __contains__(self, pair):
        return tuple(pair) in self.pairs

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def values(self) -> list[tuple[float, float]]:
        """Pairs as threshold values, sorted by lambda then gamma."""
        return [(self.grid_lambda[a], self.grid_gamma[b]) for a, b in self.sorted_pairs()]

    def mask(self) -> np.ndarray:
        m = np.zeros((len(self.grid_lambda), len(self.grid_gamma)), dtype=bool)
        for a, b in self.pairs:
            m[a, b] = True
        return m
