import io
import json

import pytest

from spexact.cli import main
from spexact.rect import Rect
from spexact.shooting import EigenRecord
from spexact.sweep import SweepResult, Trajectory


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_check_harmonic_passes():
    code, out, _ = run("check", "harmonic")
    assert code == 0
    assert json.loads(out)["passed"] is True


def test_unknown_experiment_is_config_error():
    code, out, err = run("eigs", "nope")
    assert code == 3 and out == ""
    payload = json.loads(err)
    assert payload["error"] == "ConfigError" and payload["exit_code"] == 3


def test_usage_error_exit_code():
    code, _, err = run("eigs", "ix3", "--backend", "magic")
    assert code == 3 and json.loads(err)["exit_code"] == 3


def test_bad_window():
    code, _, _ = run("eigs", "ix3", "--window", "1,2,3")
    assert code == 3


def test_eigs_csv_and_rerun_identical():
    args = ("eigs", "ix3", "--s", "6", "--window", "0,5,-1,1")
    code, out, _ = run(*args)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "re,im,multiplicity,residual" and len(lines) == 3
    assert lines[1].startswith("1.15626")
    assert run(*args)[1] == out


def test_eigs_matrix_backend():
    code, out, _ = run("eigs", "harmonic", "--backend", "matrix", "--n", "400", "--window", "0,4,-1,1")
    assert code == 0
    vals = [float(l.split(",")[0]) for l in out.splitlines()[1:]]
    assert vals == pytest.approx([1, 3], abs=5e-3)


def test_config_file_and_atomic_output(tmp_path):
    target = tmp_path / "out.json"
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"experiment": "harmonic", "window": [0, 4, -1, 1], "s": 6,
                               "outputs": [str(target)]}))
    code, out, _ = run("eigs", "--config", str(cfg))
    assert code == 0 and out == ""
    data = json.loads(target.read_text())
    assert [round(e["re"], 6) for e in data["eigenvalues"]] == [1.0, 3.0]
    assert [p.name for p in tmp_path.iterdir()] and not list(tmp_path.glob("*.tmp*"))


def test_config_from_environment(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"potential": "harmonic", "case": "I", "s": 6, "window": [0, 2, -1, 1]}))
    monkeypatch.setenv("SPEXACT_CONFIG", str(cfg))
    code, out, _ = run("eigs")
    assert code == 0 and len(out.splitlines()) == 2


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"experiment": "harmonic", "colour": "blue"}))
    assert run("eigs", "--config", str(cfg))[0] == 3


def test_unwritable_output_directory(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"experiment": "harmonic", "outputs": ["/nonexistent/dir/x.csv"]}))
    assert run("eigs", "--config", str(cfg))[0] == 3


def test_pseudo_and_daw(tmp_path):
    a = tmp_path / "a.json"
    args = ("pseudo", "harmonic", "--n", "200", "--grid", "11,9", "--eps", "0.1", "--window", "0,10,-3,3")
    assert run(*args, "--out", str(a))[0] == 0
    code, out, _ = run(*args)
    assert code == 0 and out.splitlines()[0] == "re,im,smin"
    code, out, _ = run("daw", str(a), str(a), "--radii", "5,10,20")
    assert code == 0
    assert json.loads(out)["per_rho"] == [0.0, 0.0, 0.0]


def test_daw_rejects_foreign_json(tmp_path):
    f = tmp_path / "x.json"
    f.write_text("{}")
    assert run("daw", str(f), str(f))[0] == 3


def test_rate_on_synthetic_sweep(tmp_path):
    import math

    sizes = [1 + 0.5 * k for k in range(10)]
    t = Trajectory(0, [EigenRecord(complex(3 + math.exp(-2 * s)), 1, 0.0, s) for s in sizes],
                   classification="converged", limit=3.0)
    path = tmp_path / "sweep.json"
    path.write_text(SweepResult(sizes, Rect(0, 5, -1, 1), [], [t]).to_json())
    code, out, _ = run("rate", str(path), "0", "--limit", "3")
    assert code == 0
    fit = json.loads(out)["fit"]
    assert fit["model"] == "exponential" and fit["slope"] == pytest.approx(-2, abs=1e-6)
    code, _, err = run("rate", str(path), "5")
    assert code == 1 and json.loads(err)["error"] == "UnknownTrajectory"


def test_sweep_command_csv():
    code, out, _ = run("sweep", "harmonic", "--sizes", "4,5,6", "--window", "0,2,-1,1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "s,re,im,multiplicity,trajectory_id,class"
    assert len(lines) == 4 and all(l.endswith("converged") for l in lines[1:])


def test_each_output_follows_its_extension(tmp_path):
    cfg = tmp_path / "exp.json"
    csv_path, json_path = tmp_path / "h.csv", tmp_path / "h.json"
    cfg.write_text(json.dumps({"experiment": "harmonic", "window": [0, 2, -1, 1], "s": 6,
                               "outputs": [str(csv_path), str(json_path)]}))
    assert run("eigs", "--config", str(cfg))[0] == 0
    assert csv_path.read_text().startswith("re,im,multiplicity,residual")
    assert len(json.loads(json_path.read_text())["eigenvalues"]) == 1
