import math

import numpy as np
import pytest

from tsrisk.core import ParameterGrid
from tsrisk.experiment import (
    CSV_COLUMNS, ExperimentConfig, MCConfig, calibration_split, derived_seeds, mc_validate, run_experiment,
)
from tsrisk.synth import SynthConfig, synth_batch


@pytest.fixture(scope="module")
def data():
    return synth_batch(SynthConfig(n_queries=400, seed=3))


def test_derived_seeds_are_stable():
    assert derived_seeds(7, 0) == derived_seeds(7, 0)
    assert derived_seeds(7, 0) != derived_seeds(7, 1) != derived_seeds(8, 1)
    assert all(isinstance(s, int) for s in derived_seeds(0, 0, 3))


def test_calibration_split():
    a, b = calibration_split(10, 0.5, 1)
    assert len(a) == 5 and sorted(np.concatenate([a, b]).tolist()) == list(range(10))
    with pytest.raises(ValueError):
        calibration_split(2, 0.1, 0)


@pytest.mark.parametrize("kw", [dict(calibrator="x"), dict(replications=0), dict(calibration_fraction=1.0),
                                dict(calibrator="ltt", procedure="appendix1")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_same_seed_same_bytes(data):
    cfg = ExperimentConfig(replications=1, seed=5)
    a = run_experiment(data, cfg).to_csv()
    assert a == run_experiment(data, cfg).to_csv()
    lines = a.splitlines()
    assert lines[0] == "# schema: tsrisk-run/1"
    assert lines[1] == ",".join(CSV_COLUMNS)
    assert lines[3].startswith("mean,tcrc,")


def test_threads_do_not_change_output(data):
    cfg = ExperimentConfig(calibrator="tcrc-s", replications=4, seed=2)
    assert run_experiment(data, cfg, threads=1).to_csv() == run_experiment(data, cfg, threads=3).to_csv()


@pytest.mark.parametrize("calibrator", ["ltt", "tcrc", "tcrc-s"])
def test_degenerate_grids_give_zero_risks(data, calibrator):
    g = ParameterGrid([1.0])
    res = run_experiment(data, ExperimentConfig(calibrator=calibrator, grid_lambda=g, grid_gamma=g, replications=2))
    for row in res.rows:
        assert row.feasible and row.report.risk1 == 0.0 and row.report.risk2 == 0.0
        assert (row.lambda_hat, row.gamma_hat) == (1.0, 1.0)


def test_tcrc_ten_replications_control_risk():
    data = synth_batch(SynthConfig(n_queries=1000, seed=11))
    means = run_experiment(data, ExperimentConfig(calibrator="tcrc", replications=10, seed=1)).means()
    assert means["risk1"] <= 0.1
    assert means["risk2"] <= 0.115


def test_infeasible_replications_are_sentinel_rows(data):
    # LTT with a tiny delta and strict levels certifies nothing on 200 calibration queries
    cfg = ExperimentConfig(calibrator="ltt", alpha1=0.01, alpha2=0.01, delta=1e-6, replications=2)
    res = run_experiment(data, cfg)
    assert res.n_feasible == 0
    assert all(not r.feasible and r.error for r in res.rows)
    text = res.to_csv()
    assert text.splitlines()[2].split(",")[4:13] == ["nan"] * 8 + ["0"]
    assert text.rstrip().endswith("# feasible_replications: 0/2")
    assert math.isnan(res.means()["risk1"])


def test_mc_validate_zero_risk_surface_has_no_violations():
    sure = SynthConfig(docs_min=3, docs_max=5, ret_loc=(1.0,) * 5, ret_width=(0.0,) * 5,
                       rank_loc=(1.0,) * 5, rank_width=(0.0,) * 5)
    rep = mc_validate(MCConfig(calibrator="ltt", trials=20, n=50, synth=sure))
    assert rep.passed
    assert all(c.estimate == 0.0 and c.extra["violations"] == 0 for c in rep.checks)
    assert len(rep.checks) == 4


def test_mc_validate_small_crc_run_is_deterministic():
    cfg = MCConfig(calibrator="tcrc-s", trials=30, n=60)
    a, b = mc_validate(cfg), mc_validate(cfg, threads=2)
    assert a.text() == b.text()
    assert len(a.checks) == 6 and all("held-out" in c.name for c in a.checks)
