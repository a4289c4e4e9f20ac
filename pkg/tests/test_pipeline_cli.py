"""Pipeline staging, artifacts, resume semantics, and the command line."""
from __future__ import annotations

import json

import numpy as np
import pytest

from mcflow.cli import main
from mcflow.config import default_config
from mcflow.pipeline import read_csv, run_pipeline, tree_checksum, write_csv


def test_only_stops_after_requested_stage(tmp_path):
    out = tmp_path / "out"
    report = run_pipeline(default_config(), out, only="gsolve")
    assert report is None
    assert (out / "alencar.csv").exists()
    assert (out / "eigen.json").exists()
    assert (out / "g.csv").exists()
    assert not (out / "barriers.json").exists()
    assert not (out / "report.json").exists()


def test_artifact_layout(pipeline_out):
    report, out = pipeline_out
    assert report["all_pass"]
    for name in ("alencar.csv", "alencar.json", "eigen.json", "g.csv",
                 "barriers.json", "report.json", "meta.json", "timings.txt"):
        assert (out / name).exists(), name
    for n in range(default_config().time.n_runs):
        run_dir = out / "runs" / f"run{n}"
        assert (run_dir / "monitors.csv").exists()
        assert (run_dir / "diagnostics.csv").exists()
        assert (run_dir / "meta.json").exists()
        assert list(run_dir.glob("state_*.csv"))
    figs = list((out / "figures").glob("*.png"))
    assert len(figs) >= 3


def test_monitor_columns_fixed(pipeline_out):
    _, out = pipeline_out
    header = (out / "runs" / "run0" / "monitors.csv").read_text().splitlines()[0]
    assert header == "t,supH,supA,supUx,minUx,marginLo,marginHi,lambda,innerErr,dt"


def test_resume_keeps_artifacts_byte_identical(pipeline_out):
    report, out = pipeline_out
    before = tree_checksum(out)
    report2 = run_pipeline(default_config(), out, resume=True)
    assert tree_checksum(out) == before
    assert report2["all_pass"] == report["all_pass"]


def test_report_structure(pipeline_out):
    report, out = pipeline_out
    on_disk = json.loads((out / "report.json").read_text())
    assert len(on_disk["criteria"]) == 9
    for crit in on_disk["criteria"]:
        assert set(crit) >= {"name", "target", "measured", "tolerance", "pass"}
    assert on_disk["stages"]["report"] == "ok"


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    a = np.array([0.1 + 0.2, 1e-300, -3.5, 0.0])
    b = np.array([1.0, 2.0, 3.0, 4.0])
    write_csv(path, ("a", "b"), (a, b))
    back = read_csv(path)
    assert np.array_equal(back["a"], a) and np.array_equal(back["b"], b)


def test_cli_single_stage(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["--out", str(out), "eigen"]) == 0
    assert (out / "eigen.json").exists()
    assert "eigen" in capsys.readouterr().out


def test_cli_env_var_output_root(tmp_path, monkeypatch):
    out = tmp_path / "from_env"
    monkeypatch.setenv("MCFLOW_OUT", str(out))
    assert main(["alencar"]) == 0
    assert (out / "alencar.csv").exists()


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"model": {"p": 3.5}}')
    code = main(["--config", str(cfg), "--out", str(tmp_path / "o"), "eigen"])
    assert code == 2
    assert "model.p" in capsys.readouterr().err


def test_cli_only_flag_limits_stages(tmp_path):
    out = tmp_path / "limited"
    assert main(["--out", str(out), "--only", "eigen", "all"]) == 0
    assert (out / "eigen.json").exists()
    assert not (out / "report.json").exists()
