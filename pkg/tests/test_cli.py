"""Command-line interface: artifacts, sidecars, config handling, exit codes."""

import json

import numpy as np
import pytest

from qsdlab.cli import run


def test_scan_writes_csv_png_and_sidecar(tmp_path):
    out = tmp_path / "field.csv"
    code = run(["scan", "--kind", "dephasing", "--mu", "0.6", "--quantity", "curvature",
                "--grid", "12", "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert (tmp_path / "field.png").exists()
    sidecar = json.loads((tmp_path / "field.run.json").read_text())
    assert set(sidecar) == {"command", "config", "seed", "version", "elapsed_seconds"}
    assert sidecar["command"] == "scan"
    assert sidecar["config"]["mu"] == 0.6
    header = out.read_text().splitlines()[0]
    assert header == "theta,phi,value"


def test_scan_both_quantities_schema(tmp_path):
    out = tmp_path / "landscape.csv"
    code = run(["scan", "--kind", "measurement", "--mu", "1.0", "--quantity", "both",
                "--grid", "8", "--out", str(out), "--no-plot"])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "theta,phi,norm,scalar_curvature"
    assert len(lines) == 1 + 8 * 8
    assert not (tmp_path / "landscape_norm.png").exists()


def test_no_plot_suppresses_figure(tmp_path):
    out = tmp_path / "field.csv"
    assert run(["scan", "--kind", "dephasing", "--mu", "0.3", "--grid", "8",
                "--out", str(out), "--no-plot"]) == 0
    assert not (tmp_path / "field.png").exists()


def test_sidecar_rerun_is_bit_identical(tmp_path):
    out = tmp_path / "field.csv"
    run(["scan", "--kind", "thermal", "--mu1", "1.0", "--mu2", "0.5", "--grid", "10",
         "--out", str(out), "--no-plot"])
    first = out.read_bytes()
    code = run(["scan", "--config", str(tmp_path / "field.run.json")])
    assert code == 0
    assert out.read_bytes() == first


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "dephasing", "mu": 0.6, "grid": 6, "plot": False,
                               "out": str(tmp_path / "a.csv")}))
    code = run(["scan", "--config", str(cfg), "--out", str(tmp_path / "b.csv")])
    assert code == 0
    assert (tmp_path / "b.csv").exists()
    assert not (tmp_path / "a.csv").exists()


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "dephasing", "mu": 0.6, "spice": 1}))
    assert run(["scan", "--config", str(cfg), "--no-plot",
                "--out", str(tmp_path / "x.csv")]) == 2


def test_missing_required_flag_is_validation_error(tmp_path):
    assert run(["scan", "--out", str(tmp_path / "x.csv"), "--no-plot"]) == 2


def test_unparseable_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        run(["scan", "--kind", "dephasing", "--mu", "not-a-number"])
    assert err.value.code == 2


def test_sweep_artifacts(tmp_path):
    out = tmp_path / "sweep.csv"
    code = run(["sweep", "--kind", "dephasing", "--lo", "0.2", "--hi", "0.6",
                "--points", "3", "--grid", "10", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "coupling,max_curvature,min_curvature"
    assert len(lines) == 4
    assert (tmp_path / "sweep.png").exists()


def test_critical_reports_bracketing_failure(tmp_path):
    # the maximum never changes sign for this model, which is a usage error
    code = run(["critical", "--kind", "dephasing", "--lo", "0.3", "--hi", "0.5",
                "--tol", "1e-2", "--grid", "10", "--out", str(tmp_path / "c.json")])
    assert code == 2


def test_trajectory_artifacts_and_determinism(tmp_path):
    out1 = tmp_path / "t1.csv"
    out2 = tmp_path / "t2.csv"
    args = ["trajectory", "--kind", "measurement", "--mu", "1.0", "--theta0", "1.2",
            "--steps", "300", "--stride", "30", "--seed", "9", "--no-plot"]
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    assert out1.read_text().splitlines()[0] == "t,re_c0,im_c0,re_c1,im_c1,norm,sx,sy,sz"
    assert out1.read_bytes() == out2.read_bytes()


def test_trajectory_curvature_series(tmp_path):
    out = tmp_path / "traj.csv"
    code = run(["trajectory", "--kind", "dephasing", "--mu", "0.5", "--theta0", "0.7",
                "--steps", "200", "--stride", "50", "--curvature", "--no-plot",
                "--out", str(out)])
    assert code == 0
    series = (tmp_path / "traj.curvature.csv").read_text().splitlines()
    assert series[0] == "t,scalar_curvature"
    assert len(series) == 1 + 5


def test_stability_artifacts(tmp_path):
    out = tmp_path / "stab.json"
    code = run(["stability", "--kind", "thermal", "--mu1", "1.6", "--mu2", "0.8",
                "--t-final", "5", "--n-paths", "10", "--grid", "16",
                "--out", str(out), "--no-plot"])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["verdict"] in ("stable", "unstable")
    assert len(payload["per_path_fractions"]) == 10


def test_threads_flag_does_not_change_scan(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["scan", "--kind", "dephasing", "--mu", "0.6", "--grid", "24", "--no-plot"]
    assert run(base + ["--threads", "1", "--out", str(a)]) == 0
    assert run(base + ["--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_passes_on_pristine_checkout(capsys):
    assert run(["verify"]) == 0
    out = capsys.readouterr().out
    assert "all" in out and "passed" in out
