import io
import json
import subprocess
import sys

import numpy as np
import pytest

from robustce.cli import main
from robustce.io import fixture_names, fixture_path


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def explain(name, *extra):
    return run("explain", "--model", fixture_path(name), *extra)


def test_explain_linear():
    code, text = explain("linear_x2", "--factual", "1,0", "--rho", 0.5)
    doc = json.loads(text)
    assert code == 0
    assert np.allclose(doc["point"], [1, 1.5])
    assert doc["status"] == "converged"


def test_explain_rho_zero_one_iteration():
    code, text = explain("depth3", "--rho", 0)
    assert code == 0 and json.loads(text)["iterations"] == 1


def test_explain_heuristic_not_better():
    _, exact = explain("straddle", "--rho", 0.04)
    code, heur = explain("straddle", "--rho", 0.04, "--mode", "heuristic")
    assert code == 0
    assert json.loads(heur)["distance"] >= json.loads(exact)["distance"]


def test_explain_infeasible_exit_code():
    code, text = explain("thin_leaves", "--rho", 0.1)
    assert code == 3 and json.loads(text)["status"] == "infeasible"


def test_time_limit_env_override(monkeypatch):
    monkeypatch.setenv("RCE_TIME_LIMIT", "0.0001")
    code, text = explain("relu281", "--rho", 0.1, "--norm", "l2", "--time-limit", 1000)
    assert code == 2 and json.loads(text)["status"] == "time_limit"


def test_csv_output():
    code, text = explain("step_tree", "--rho", 1, "--output", "csv")
    rows = text.strip().splitlines()
    assert code == 0 and rows[0].startswith("status,distance")
    assert rows[1].split(",")[0] == "converged"


def test_pretty_output():
    code, text = explain("step_tree", "--rho", 1, "--pretty")
    assert code == 0 and "distance" in text and "2.5" in text


def test_trace_and_factual_file(tmp_path):
    fac = tmp_path / "factual.csv"
    fac.write_text("x0,x1\n0.45,0.5\n")
    trace = tmp_path / "t.jsonl"
    code, text = explain("depth3", "--factual", fac, "--rho", 0.1, "--trace", trace)
    assert code == 0
    assert len(trace.read_text().splitlines()) == json.loads(text)["iterations"]


def test_immutable_flag():
    code, text = explain("depth3", "--rho", 0.02, "--immutable", "1")
    assert code == 0 and json.loads(text)["point"][1] == 0.5


def test_bad_model_names_field(tmp_path, capsys):
    doc = json.loads(fixture_path("depth3").read_text())
    doc["params"]["leaves"][1]["constraints"][0]["b"] = "oops"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _ = run("explain", "--model", bad, "--rho", 0.1)
    assert code == 1
    assert "params.leaves[1].constraints[0].b" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["explain", "--rho", "1"])
    assert exc.value.code == 1
    code, _ = explain("depth3", "--factual", "1,2,3", "--rho", 0.1)
    assert code == 1
    code, _ = explain("step_tree", "--factual", "0,0", "--rho", 0.1)
    assert code == 1 and "negate" in capsys.readouterr().err


def test_verify_reports():
    code, text = run("verify", "--model", fixture_path("step_tree"), "--point", "0,-0.5", "--rho", 1)
    doc = json.loads(text)
    assert code == 0 and doc["robust"] and doc["valid"] and doc["audit"]["all_valid"]
    code, text = run("verify", "--model", fixture_path("step_tree"), "--point", "0,0.5", "--rho", 1)
    doc = json.loads(text)
    assert code == 0 and not doc["robust"] and doc["valid"]
    code, text = run("verify", "--model", fixture_path("step_tree"), "--point", "0,2", "--rho", 1)
    doc = json.loads(text)
    assert code == 0 and not doc["valid"]


@pytest.mark.parametrize("name", fixture_names())
@pytest.mark.parametrize("norm", ["linf", "l2"])
def test_explain_then_verify(name, norm):
    code, text = explain(name, "--rho", 0.05, "--norm", norm)
    doc = json.loads(text)
    if doc["status"] != "converged":
        return
    point = ",".join(repr(v) for v in doc["point"])
    code, text = run("verify", "--model", fixture_path(name), f"--point={point}", "--rho", 0.05,
                     "--norm", norm, "--seed", 42)
    rep = json.loads(text)
    assert rep["valid"] and rep["robust"] and rep["audit"]["all_valid"]


def test_calibrate_examples():
    code, text = run("calibrate", "--k", 1, "--norm", "linf", "--rho", 1.959964, "--sigma", 1)
    doc = json.loads(text)
    assert code == 0 and abs(doc["alpha"] - 0.95) < 1e-6 and "conservative" in doc["caveat"]
    code, text = run("calibrate", "--k", 2, "--norm", "l2", "--rho", 0, "--sigma", 1)
    assert json.loads(text)["alpha"] == 0.0
    code, text = run("calibrate", "--k", 2, "--norm", "l2", "--alpha", 0.95, "--sigma", 1)
    assert abs(json.loads(text)["rho"] - np.sqrt(2 * np.log(20))) < 1e-9
    code, _ = run("calibrate", "--k", 2, "--rho", 0.3)
    assert code == 1


def test_pareto_csv(tmp_path):
    dest = tmp_path / "p.csv"
    code, _ = run("pareto", "--model", fixture_path("jump_tree"), "--rho-grid", "0,0.04,0.06", "--csv", dest)
    lines = dest.read_text().splitlines()
    assert code == 0 and lines[0] == "rho,distance,wall_time_ms,status" and len(lines) == 4


def test_deterministic_output():
    a = json.loads(explain("ensemble2", "--rho", 0.05, "--norm", "l2")[1])
    b = json.loads(explain("ensemble2", "--rho", 0.05, "--norm", "l2")[1])
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "robustce", "calibrate", "--k", "1", "--norm", "linf",
                           "--alpha", "0.95", "--sigma", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert abs(json.loads(proc.stdout)["rho"] - 1.959963984540054) < 1e-9
