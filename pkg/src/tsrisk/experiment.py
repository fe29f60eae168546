"""Replicated calibrate/select/evaluate experiments and Monte Carlo guarantee checks.

Seeds
-----
Everything random is derived from one master seed through
``numpy.random.SeedSequence([master, counter])``: replication ``r`` of
``run_experiment`` uses counter ``r`` and trial ``k`` of ``mc_validate``
uses counter ``k``.  The two words drawn from each sequence seed the
calibration/test shuffle and the calibrator's own split, in that order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FeasibleSet, LossTable1, LossTable2, ParameterGrid, RiskLevels
from .crc import (
    InfeasibleError, SplitConfig, tcrc_feasible_set, tcrc_points, tcrc_split_feasible_set, tcrc_split_points,
)
from .ltt import PROCEDURES, LttConfig, compute_pvalue_families, ltt_calibrate, run_procedure
from .retrieval import QueryBatch, _as_batch, build_loss_tables, loss_arrays
from .selection import EmptyFeasibleSetError, EvalReport, ObjectiveConfig, evaluate, select_pair_index
from .synth import SynthConfig, known_lambda0, synth_batch, true_risk1, true_risk2

CALIBRATORS = ("ltt", "tcrc", "tcrc-s")
CSV_SCHEMA = "tsrisk-run/1"
CSV_COLUMNS = (
    "replication", "method", "alpha1", "alpha2", "risk1", "risk2", "set_size", "recall_ge2",
    "recall_eq1", "precision", "lambda_hat", "gamma_hat", "feasible_size",
)
METRICS = ("risk1", "risk2", "set_size", "recall_ge2", "recall_eq1", "precision")


def default_grid() -> ParameterGrid:
    return ParameterGrid.arange(0.95, 1.0, 0.001)


def derived_seeds(master: int, counter: int, k: int = 2) -> list[int]:
    """``k`` 32-bit seeds for stream ``counter`` under ``master``."""
    return [int(s) for s in np.random.SeedSequence([int(master), int(counter)]).generate_state(k)]


@dataclass(frozen=True)
class ExperimentConfig:
    calibrator: str = "tcrc"
    alpha1: float = 0.1
    alpha2: float = 0.1
    delta: float = 0.01
    procedure: str = "main"
    w: float | None = None
    split_fraction: float = 0.5
    lambda0: float | str = "estimate"
    grid_lambda: ParameterGrid = field(default_factory=default_grid)
    grid_gamma: ParameterGrid = field(default_factory=default_grid)
    r0: int = 1
    replications: int = 10
    calibration_fraction: float = 0.5
    seed: int = 0
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __post_init__(self):
        if self.calibrator not in CALIBRATORS:
            raise ValueError(f"unknown calibrator {self.calibrator!r}; choose from {CALIBRATORS}")
        self.levels  # validates alphas
        if self.calibrator == "ltt":
            self.ltt_config
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ValueError("calibration_fraction must lie in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.r0 < 1:
            raise ValueError("r0 must be >= 1")
        if isinstance(self.lambda0, str) and self.lambda0 != "estimate":
            raise ValueError("lambda0 must be a number or 'estimate'")

    @property
    def levels(self) -> RiskLevels:
        return RiskLevels(self.alpha1, self.alpha2)

    @property
    def ltt_config(self) -> LttConfig:
        return LttConfig(self.delta, self.procedure, self.w)

    @property
    def method(self) -> str:
        return f"ltt:{self.procedure}" if self.calibrator == "ltt" else self.calibrator


def calibrate(table1: LossTable1, table2: LossTable2, config: ExperimentConfig, split_seed: int = 0) -> FeasibleSet:
    """Run the configured calibrator on monotone loss tables."""
    if config.calibrator == "ltt":
        return ltt_calibrate(table1, table2, config.levels, config.ltt_config)
    if config.calibrator == "tcrc":
        return tcrc_feasible_set(table1, table2, config.levels)
    split = SplitConfig(config.split_fraction, split_seed)
    return tcrc_split_feasible_set(table1, table2, config.levels, split, config.lambda0)


def calibration_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_cal = int(round(fraction * n))
    if n_cal < 1 or n_cal >= n:
        raise ValueError(f"calibration fraction {fraction} leaves an empty part of {n} queries")
    return perm[:n_cal], perm[n_cal:]


@dataclass(frozen=True)
class ReplicationResult:
    replication: int
    method: str
    alpha1: float
    alpha2: float
    report: EvalReport | None
    lambda_hat: float | None
    gamma_hat: float | None
    feasible_size: int
    error: str = ""

    @property
    def feasible(self) -> bool:
        return self.report is not None


def run_replication(data: QueryBatch, config: ExperimentConfig, r: int) -> ReplicationResult:
    shuffle_seed, split_seed = derived_seeds(config.seed, r)
    cal_idx, test_idx = calibration_split(len(data), config.calibration_fraction, shuffle_seed)
    cal, test = data.take(cal_idx), data.take(test_idx)
    base = dict(replication=r, method=config.method, alpha1=config.alpha1, alpha2=config.alpha2)
    feas = None
    try:
        t1, t2 = build_loss_tables(cal, config.grid_lambda, config.grid_gamma, config.r0)
        feas = calibrate(t1, t2, config, split_seed)
        a, b = select_pair_index(feas, cal, config.objective)
    except (InfeasibleError, EmptyFeasibleSetError) as exc:
        return ReplicationResult(**base, report=None, lambda_hat=None, gamma_hat=None,
                                 feasible_size=len(feas) if feas is not None else 0,
                                 error=str(exc))
    lam, gam = config.grid_lambda[a], config.grid_gamma[b]
    return ReplicationResult(**base, report=evaluate(test, lam, gam, config.r0), lambda_hat=lam, gamma_hat=gam,
                             feasible_size=len(feas))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[ReplicationResult]

    @property
    def n_feasible(self) -> int:
        return sum(r.feasible for r in self.rows)

    def means(self) -> dict[str, float]:
        ok = [r for r in self.rows if r.feasible]
        out = {}
        for m in METRICS + ("lambda_hat", "gamma_hat", "feasible_size"):
            vals = [getattr(r.report, m) if m in METRICS else getattr(r, m) for r in ok]
            vals = [v for v in vals if not math.isnan(v)]
            out[m] = math.fsum(vals) / len(vals) if vals else math.nan
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {CSV_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            rep = r.report
            w.writerow([
                r.replication, r.method, _fmt(r.alpha1), _fmt(r.alpha2),
                *(_fmt(getattr(rep, m) if rep else math.nan) for m in METRICS),
                _fmt(r.lambda_hat), _fmt(r.gamma_hat), r.feasible_size,
            ])
        mean = self.means()
        w.writerow([
            "mean", self.config.method, _fmt(self.config.alpha1), _fmt(self.config.alpha2),
            *(_fmt(mean[m]) for m in METRICS), _fmt(mean["lambda_hat"]), _fmt(mean["gamma_hat"]),
            _fmt(mean["feasible_size"]),
        ])
        buf.write(f"# feasible_replications: {self.n_feasible}/{len(self.rows)}\n")
        return buf.getvalue()


def _fmt(x) -> str:
    # shortest round-trip repr keeps output byte-stable and lossless
    if x is None:
        return "nan"
    return repr(float(x)) if not isinstance(x, int) else str(x)


def run_experiment(data, config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Shuffle-split, calibrate, select and evaluate ``config.replications`` times.

    Replications are independent given their derived seeds, so running them
    on several threads gives the same rows in the same order.
    """
    batch = _as_batch(data)
    if len(batch) < 2:
        raise ValueError("need at least two queries to split into calibration and test sets")
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda r: run_replication(batch, config, r), reps))
    else:
        rows = [run_replication(batch, config, r) for r in reps]
    return ExperimentResult(config, rows)


# ------------------------------------------------------------ Monte Carlo


def mc_grid_gamma() -> ParameterGrid:
    return ParameterGrid.arange(0.95, 1.0, 0.005)


def mc_synth() -> SynthConfig:
    return SynthConfig(docs_min=5, docs_max=15)


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo check of one calibrator on the synthetic score model.

    ``stage2_slack=None`` tests the second stage at ``alpha2 + 3 SE``;
    a number replaces the 3 SE allowance by that fixed slack.
    """

    calibrator: str = "tcrc"
    trials: int = 1000
    n: int = 100
    n_test: int = 1
    alpha1: float = 0.1
    alpha2: float = 0.1
    delta: float = 0.1
    w: float = 0.5
    procedures: tuple[str, ...] = PROCEDURES
    t_values: tuple[float, ...] = (0.0, 0.5, 1.0)
    lambda0: float | str = "known"
    split_fraction: float = 0.5
    stage2_slack: float | None = None
    synth: SynthConfig = field(default_factory=mc_synth)
    grid_lambda: ParameterGrid = field(default_factory=default_grid)
    grid_gamma: ParameterGrid = field(default_factory=mc_grid_gamma)
    r0: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.calibrator not in CALIBRATORS:
            raise ValueError(f"unknown calibrator {self.calibrator!r}")
        if self.trials < 1 or self.n < 1 or self.n_test < 1:
            raise ValueError("trials, n and n_test must be >= 1")
        RiskLevels(self.alpha1, self.alpha2)
        for p in self.procedures:
            LttConfig(self.delta, p, self.w)


@dataclass(frozen=True)
class Check:
    name: str
    estimate: float
    bound: float
    se: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.estimate:.5f} <= {self.bound:.5f} (se {self.se:.5f})"


@dataclass
class MCReport:
    config: MCConfig
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def _trial_data(config: MCConfig, k: int, n_total: int) -> tuple[QueryBatch, int]:
    data_seed, split_seed = derived_seeds(config.seed, k)
    return synth_batch(config.synth.with_seed(data_seed, n_total)), split_seed


def _tables(batch: QueryBatch, config: MCConfig):
    t1, t2 = loss_arrays(batch, config.grid_lambda, config.grid_gamma, config.r0)
    return (LossTable1(t1, config.grid_lambda, monotone=True),
            LossTable2(t2, config.grid_lambda, config.grid_gamma, monotone=True))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return math.fsum(x.tolist()) / x.size, se


def _ltt_trial(config: MCConfig, k: int, r1: np.ndarray, r2: np.ndarray) -> list[bool]:
    batch, _ = _trial_data(config, k, config.n)
    t1, t2 = _tables(batch, config)
    fam = compute_pvalue_families(t1, t2, RiskLevels(config.alpha1, config.alpha2))
    bad = (r1[:, None] > config.alpha1) | (r2 > config.alpha2)
    out = []
    for proc in config.procedures:
        feas = run_procedure(fam, LttConfig(config.delta, proc, config.w))
        out.append(bool(feas) and bool((feas.mask() & bad).any()))
    return out


def _crc_trial(config: MCConfig, k: int, lam0) -> np.ndarray:
    """Held-out stage-1 and stage-2 losses for each t, shape (len(t_values), 2)."""
    batch, split_seed = _trial_data(config, k, config.n + config.n_test)
    t1, t2 = _tables(batch, config)
    cal = np.arange(config.n)
    c1, c2 = t1.subset(cal), t2.subset(cal)
    h1, h2 = t1.entries[config.n:], t2.entries[config.n:]
    levels = RiskLevels(config.alpha1, config.alpha2)
    if config.calibrator == "tcrc":
        points = tcrc_points(c1, c2, levels, config.t_values)
    else:
        split = SplitConfig(config.split_fraction, split_seed)
        points = tcrc_split_points(c1, c2, levels, config.t_values, split, lam0)
    out = np.empty((len(config.t_values), 2))
    for i, (lam, gam) in enumerate(points):
        a, b = config.grid_lambda.index_of(lam), config.grid_gamma.index_of(gam)
        out[i] = h1[:, a].mean(), h2[:, a, b].mean()
    return out


def mc_validate(config: MCConfig, threads: int = 1) -> MCReport:
    """Monte Carlo check of a calibrator's guarantee on synthetic data.

    For LTT: the fraction of trials whose certified set holds any pair that
    violates the true risks, against ``delta`` plus three binomial SEs.  For
    the conformal calibrators: the mean loss of fresh held-out queries at
    the calibrated pair, against ``alpha`` plus three Monte Carlo SEs.
    """
    trials = range(config.trials)
    mapper = _mapper(threads)
    if config.calibrator == "ltt":
        r1 = true_risk1(config.synth, config.grid_lambda)
        r2 = true_risk2(config.synth, config.grid_lambda, config.grid_gamma, config.r0)
        hits = np.array(mapper(lambda k: _ltt_trial(config, k, r1, r2), trials), dtype=bool)
        se = math.sqrt(config.delta * (1 - config.delta) / config.trials)
        checks = [
            Check(f"ltt:{p} FWER", float(hits[:, j].mean()), config.delta + 3 * se, se,
                  {"violations": int(hits[:, j].sum()), "trials": config.trials})
            for j, p in enumerate(config.procedures)
        ]
        return MCReport(config, checks)

    lam0 = config.lambda0
    if lam0 == "known":
        lam0 = known_lambda0(config.synth, config.grid_lambda, config.r0)
    res = np.array(mapper(lambda k: _crc_trial(config, k, lam0), trials))
    checks = []
    for i, t in enumerate(config.t_values):
        m1, se1 = _mean_se(res[:, i, 0])
        m2, se2 = _mean_se(res[:, i, 1])
        slack = 3 * se2 if config.stage2_slack is None else config.stage2_slack
        checks.append(Check(f"{config.calibrator} t={t:g} stage-1 held-out loss", m1, config.alpha1 + 3 * se1, se1))
        checks.append(Check(f"{config.calibrator} t={t:g} stage-2 held-out loss", m2, config.alpha2 + slack, se2))
    return MCReport(config, checks)


def _mapper(threads: int):
    if threads <= 1:
        return lambda f, xs: [f(x) for x in xs]

    def run(f, xs):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(f, xs))
    return run
