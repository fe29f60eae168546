import json
import os
import subprocess
import sys

import pytest

from tsrisk.cli import main

SMALL = ["--n-queries", "120"]


@pytest.fixture
def data(tmp_path):
    p = tmp_path / "d.tsv"
    assert main(["simulate", "--seed", "4", "--out", str(p), *SMALL]) == 0
    return p


def test_simulate_writes_tsv(data):
    lines = data.read_text().splitlines()
    assert lines[0].split("\t") == ["query_id", "doc_id", "relevance", "score_retrieval", "score_rank"]
    assert len(lines) > 120


def test_calibrate_reports_pair(data, tmp_path, capsys):
    assert main(["calibrate", "--data", str(data), "--calibrator", "tcrc"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["method"] == "tcrc" and out["n_calibration"] == 120
    assert out["feasible_size"] > 0 and 0.95 <= out["lambda"] <= 1.0
    assert main(["calibrate", "--data", str(data), "--calibrator", "tcrc", "--t", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda"] == 1.0


def test_calibrate_infeasible_exit_code(data):
    assert main(["calibrate", "--data", str(data), "--calibrator", "ltt", "--alpha1", "0.01",
                 "--alpha2", "0.01", "--delta", "0.000001"]) == 3


def test_evaluate(data, capsys):
    assert main(["evaluate", "--data", str(data), "--lambda", "1", "--gamma", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["risk1"] == 0.0 and out["risk2"] == 0.0
    assert main(["evaluate", "--data", str(data), "--lambda", "2", "--gamma", "1"]) == 1


def test_losses_schema_line(data, capsys):
    assert main(["losses", "--data", str(data), "--stage", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# schema: tsrisk-losses1/1" and lines[1] == "query_id,lambda,loss"
    q, lam, loss = lines[2].split(",")
    assert float(lam) == 0.95 and 0.0 <= float(loss) <= 1.0


def test_run_flags_after_subcommand(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--seed", "3", "run", "--replications", "2", "--out", str(a), *SMALL]) == 0
    assert main(["run", "--seed", "3", "--replications", "2", "--out", str(b), *SMALL]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# schema: tsrisk-run/1\n")


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"calibrator": "tcrc-s", "replications": 1, "grid_lambda": {"start": 0.95, "stop": 1.0, "step": 0.01},
                               "synth": {"n_queries": 80}}))
    assert main(["run", "--config", str(cfg)]) == 0
    assert ",tcrc-s," in capsys.readouterr().out
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert main(["run", "--config", str(cfg)]) == 1
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg)]) == 1


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run", "--alpha1", "x"], ["run", "--calibrator", "bogus"],
                                  ["calibrate"], ["run", "--alpha1", "1.5"]])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("q\ta\t1\t1.2\t0.5\n")
    assert main(["calibrate", "--data", str(bad)]) == 2
    bad.write_text("q\ta\t1\n")
    assert main(["evaluate", "--data", str(bad), "--lambda", "1", "--gamma", "1"]) == 2
    assert main(["calibrate", "--data", str(tmp_path / "missing.tsv")]) == 1


def test_validate_small(capsys):
    assert main(["validate", "--calibrator", "tcrc", "--trials", "20", "--n", "50"]) == 0
    out = capsys.readouterr().out
    assert "stage-1 held-out loss" in out and out.rstrip().splitlines()[-1] in ("overall: PASS", "overall: FAIL")


def test_console_entry_point(tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run([sys.executable, "-m", "tsrisk.cli", "run", "--replications", "1", "--out", str(out), *SMALL],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().splitlines()[1].startswith("replication,method,")


def test_backends_give_identical_run_output(tmp_path):
    outs = []
    for flag in ("0", "1"):
        out = tmp_path / f"r{flag}.csv"
        env = dict(os.environ, TSRISK_PURE_PYTHON=flag)
        cmd = [sys.executable, "-m", "tsrisk.cli", "run", "--seed", "5", "--replications", "2", "--out", str(out), *SMALL]
        assert subprocess.run(cmd, env=env, capture_output=True).returncode == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
