import csv
import json
import math
import subprocess
import sys

import pytest

from geolab import cli
from geolab.cli import (
    EXIT_CHECK,
    EXIT_CONJUGATE,
    EXIT_FALSIFIED,
    EXIT_OK,
    EXIT_SCHEMA,
    Outcome,
    ScenarioError,
    fmt,
    main,
    validate_scenario,
)


def _run(tmp_path, *argv):
    code = main(["--out-dir", str(tmp_path), *argv])
    return code


def _report(tmp_path, command):
    return json.loads((tmp_path / f"{command}-report.json").read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _config(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# ---------------------------------------------------------------------------
# commands


def test_selftest_passes(tmp_path, capsys):
    assert _run(tmp_path, "selftest") == EXIT_OK
    rep = _report(tmp_path, "selftest")
    assert rep["schema_version"] == 1 and rep["exit_code"] == 0
    assert all(c["status"] == "pass" for c in rep["checks"])
    assert "exit 0" in capsys.readouterr().out


def test_jacobi_csv_and_oracle(tmp_path):
    out = tmp_path / "field.csv"
    code = _run(tmp_path, "jacobi", "--profile", "constant:n=3,c=-1", "--t-max", "2", "--step", "1e-2", "--out", str(out))
    assert code == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["t", "X_00", "X_01", "X_10", "X_11", "Xp_00", "Xp_01", "Xp_10", "Xp_11", "detX"]
    assert len(rows) == 202
    last = [float(x) for x in rows[-1]]
    assert last[0] == 2.0 and last[1] == pytest.approx(math.sinh(2.0), rel=1e-8)
    rep = _report(tmp_path, "jacobi")
    assert rep["summary"]["first_conjugate_time"] is None
    assert rep["outputs"]["csv"] == str(out)


def test_jacobi_reports_sphere_conjugate_time(tmp_path):
    assert _run(tmp_path, "jacobi", "--profile", "constant:n=2,c=1", "--t-max", "4") == EXIT_OK
    assert _report(tmp_path, "jacobi")["summary"]["first_conjugate_time"] == pytest.approx(math.pi, abs=1e-6)


def test_theta_bound_hyperbolic_passes(tmp_path):
    assert _run(tmp_path, "theta-bound", "--profile", "constant:n=2,c=-1", "--s", "0.5", "--t-count", "10") == EXIT_OK
    rep = _report(tmp_path, "theta-bound")
    assert rep["summary"]["min_margin"] > 0
    assert rep["certificate"]["norm"] == "operator"


def test_theta_bound_refuses_sphere(tmp_path):
    assert _run(tmp_path, "theta-bound", "--profile", "constant:n=2,c=1") == EXIT_CONJUGATE
    rep = _report(tmp_path, "theta-bound")
    (check,) = rep["checks"]
    assert check["kind"] == "conjugate"
    assert check["witness"]["t"] == pytest.approx(math.pi, abs=1e-6)


def test_bridge_refuses_pair_across_zero(tmp_path):
    assert _run(tmp_path, "--seed", "2", "bridge", "--profile", "random:n=4") == EXIT_CONJUGATE


def test_bridge_grid(tmp_path):
    code = _run(tmp_path, "bridge", "--profile", "constant:n=2,c=-4", "--s-grid", "0.5,1", "--t-grid", "0.5,2")
    assert code == EXIT_OK
    rows = _rows(tmp_path / "bridge.csv")
    assert rows[0][:3] == ["s", "t", "lambda_min"]
    assert len(rows) == 5
    lam = float(rows[1][2])
    assert lam == pytest.approx(4 / math.tanh(1.0), rel=1e-9)


def test_parametrix_flat(tmp_path):
    assert _run(tmp_path, "parametrix", "--model", "flat:n=3", "--r-count", "2001") == EXIT_OK
    names = [c["name"] for c in _report(tmp_path, "parametrix")["checks"]]
    assert "flat_nullity" in names


def test_weyl_square_and_circle(tmp_path):
    assert _run(tmp_path, "weyl", "--torus", "L=6.283185307179586,6.283185307179586", "--lambda-max", "5", "--lambda-count", "1") == EXIT_OK
    rows = _rows(tmp_path / "weyl.csv")
    assert rows[1][1] == "81"
    assert _run(tmp_path, "weyl", "--torus", "L=6.283185307179586", "--lambda-max", "1000", "--lambda-count", "200") == EXIT_OK
    assert "circle_remainder" in [c["name"] for c in _report(tmp_path, "weyl")["checks"]]


def test_weyl_cap_is_a_check_failure(tmp_path):
    cfg = _config(tmp_path, {"command": "weyl", "parameters": {"torus": "L=6.3,6.3,6.3", "lambda_max": 1000, "cap": 1000}})
    assert _run(tmp_path, "--config", cfg) == EXIT_CHECK


# ---------------------------------------------------------------------------
# schema


@pytest.mark.parametrize(
    "doc",
    [
        {"command": "nope"},
        {"command": "jacobi"},
        {"command": "jacobi", "parameters": {"profile": "constant:n=2,c=0", "bogus": 1}},
        {"command": "jacobi", "parameters": {"profile": "constant:n=2,c=0", "step": "fast"}},
        {"command": "jacobi", "parameters": {"profile": "constant:n=2,c=0"}, "tolerances": {"wronskian": -1}},
        {"command": "jacobi", "parameters": {"profile": "constant:n=2,c=0"}, "tolerances": {"made_up": 1}},
        {"command": "jacobi", "parameters": {"profile": "constant:n=2,c=0"}, "extra": 1},
        {"command": "sweep", "template": {"command": "theta-bound"}, "axes": {"s": []}},
        {"command": "sweep", "template": {"command": "selftest"}, "axes": {"step": [1e-3]}},
    ],
)
def test_schema_rejections(tmp_path, doc):
    assert _run(tmp_path, "--config", _config(tmp_path, doc)) == EXIT_SCHEMA


def test_bad_profile_is_schema_error(tmp_path):
    assert _run(tmp_path, "jacobi", "--profile", "warp:n=2") == EXIT_SCHEMA


def test_unreadable_config(tmp_path):
    assert _run(tmp_path, "--config", str(tmp_path / "missing.json")) == EXIT_SCHEMA


def test_command_mismatch(tmp_path):
    cfg = _config(tmp_path, {"command": "weyl", "parameters": {"torus": "L=1"}})
    assert _run(tmp_path, "--config", cfg, "jacobi") == EXIT_SCHEMA


def test_tol_scale_must_be_positive(tmp_path):
    assert _run(tmp_path, "--tol-scale", "0", "selftest") == EXIT_SCHEMA


def test_unknown_flag_exits_two(tmp_path):
    with pytest.raises(SystemExit) as info:
        _run(tmp_path, "jacobi", "--bogus")
    assert info.value.code == 2


def test_validate_scenario_defaults_and_scale():
    sc = validate_scenario({"command": "theta-bound", "parameters": {"profile": "constant:n=2,c=-1"}}, 2.0)
    assert sc["parameters"]["s"] == 0.5 and sc["parameters"]["t_min"] is None
    assert sc["tolerances"]["margin_floor"] == pytest.approx(2e-8)
    with pytest.raises(ScenarioError):
        validate_scenario({"command": "weyl", "parameters": {}})


# ---------------------------------------------------------------------------
# exit codes


def test_exit_precedence():
    out = Outcome()
    out.check("a", False, "check")
    assert out.exit_code == EXIT_CHECK
    out.check("b", False, "falsification")
    assert out.exit_code == EXIT_FALSIFIED
    out.check("c", False, "conjugate")
    assert out.exit_code == EXIT_CONJUGATE
    out.check("d", False, "schema")
    assert out.exit_code == EXIT_SCHEMA
    assert Outcome().exit_code == EXIT_OK


def test_falsification_exit_code_and_witness(tmp_path, monkeypatch):
    # the shipped checks are theorems; inject a failing one to exercise the path
    def fake(p, tol, out, rng_seed=0):
        out.check("certificate_margin", False, "falsification", t=3.0, margin=-1.0)

    monkeypatch.setitem(cli.RUNNERS, "theta-bound", fake)
    assert _run(tmp_path, "theta-bound", "--profile", "constant:n=2,c=-1") == EXIT_FALSIFIED
    (check,) = _report(tmp_path, "theta-bound")["checks"]
    assert check["status"] == "fail" and check["witness"] == {"t": 3.0, "margin": -1.0}


# ---------------------------------------------------------------------------
# sweep and determinism


def test_sweep_over_s(tmp_path):
    doc = {
        "command": "sweep",
        "template": {"command": "theta-bound", "parameters": {"profile": "constant:n=2,c=-1", "t_max": 6, "t_count": 8}},
        "axes": {"s": [0.1, 0.5, 1.0]},
    }
    assert _run(tmp_path, "--config", _config(tmp_path, doc)) == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert rows[0][:4] == ["index", "s", "status", "exit_code"]
    assert [r[1] for r in rows[1:]] == ["0.10000000000000001", "0.5", "1"]
    rep = _report(tmp_path, "sweep")
    assert rep["summary"]["cells"] == 3
    assert "C_decreasing_along_s" in rep["summary"]


def test_sweep_mixed_outcomes(tmp_path):
    doc = {
        "command": "sweep",
        "template": {"command": "theta-bound", "parameters": {"t_max": 5, "t_count": 5}},
        "axes": {"profile": ["constant:n=2,c=-1", "constant:n=2,c=1"]},
    }
    assert _run(tmp_path, "--config", _config(tmp_path, doc)) == EXIT_CONJUGATE
    rows = _rows(tmp_path / "sweep.csv")
    col = rows[0].index("status")
    assert [r[col] for r in rows[1:]] == ["pass", "fail"]


def test_sweep_rejects_flags(tmp_path):
    doc = {"command": "sweep", "template": {"command": "weyl", "parameters": {"torus": "L=1"}}, "axes": {"lambda_max": [5]}}
    assert main(["--out-dir", str(tmp_path), "--config", _config(tmp_path, doc)]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["--out-dir", str(tmp_path), "sweep", "--torus", "L=1"])


def test_sweep_parallel_matches_serial(tmp_path):
    doc = {
        "command": "sweep",
        "template": {"command": "weyl", "parameters": {"torus": "L=3.0,4.0"}},
        "axes": {"lambda_max": [5, 10, 20]},
    }
    cfg = _config(tmp_path, doc)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--out-dir", str(a), "--config", cfg]) == EXIT_OK
    assert main(["--out-dir", str(b), "--jobs", "2", "--config", cfg]) == EXIT_OK
    assert (a / "sweep.csv").read_text() == (b / "sweep.csv").read_text()


def test_csv_is_deterministic(tmp_path):
    args = ["jacobi", "--profile", "seeded:n=3,phi=0.3*sin(t)*tanh(t)^2;0", "--t-max", "3", "--step", "1e-3"]
    assert main(["--out-dir", str(tmp_path / "x"), *args]) == EXIT_OK
    assert main(["--out-dir", str(tmp_path / "y"), *args]) == EXIT_OK
    assert (tmp_path / "x" / "jacobi.csv").read_bytes() == (tmp_path / "y" / "jacobi.csv").read_bytes()


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, math.pi, -2.5e-300, 1e300):
        assert float(fmt(x)) == x
    assert fmt(float("nan")) == "" and fmt(True) == "true" and fmt(7) == "7" and fmt(None) == ""


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GEOLAB_OUT_DIR", str(tmp_path / "env"))
    assert main(["weyl", "--torus", "L=1", "--lambda-max", "3", "--lambda-count", "2"]) == EXIT_OK
    assert (tmp_path / "env" / "weyl-report.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "geolab", "--out-dir", str(tmp_path), "weyl", "--torus", "L=1", "--lambda-count", "3"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("exit 0")
