import json
import subprocess
import sys

import numpy as np
import pytest

from singiga import __version__, cli
from singiga.errors import GramConditioningError
from singiga.geometry import RationalGeometry, identity_geometry


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_mesh_count_and_config(capsys):
    code, out, _ = run(capsys, "mesh", "-p", "2", "-n", "2")
    assert code == 0
    data = json.loads(out)
    assert data["count"] == 11 and len(data["elements"]) == 11
    assert data["config"]["degree"] == 2 and data["config"]["version"] == __version__


def test_mesh_classify(capsys):
    code, out, _ = run(capsys, "mesh", "-p", "1", "-n", "4", "--classify")
    assert code == 0
    kinds = {e["region"] for e in json.loads(out)["elements"]}
    assert kinds <= {"right_of_3_8", "scalable", "singular_core"} and "singular_core" in kinds


def test_basis_point_sums_to_one(capsys):
    code, out, _ = run(capsys, "basis", "-p", "2", "-n", "2", "--point", "0.1,0.05")
    assert code == 0
    data = json.loads(out)
    assert data["dimension"] == 22
    assert sum(r["value"] for r in data["values"]) == pytest.approx(1.0, abs=1e-12)
    code, out, _ = run(capsys, "basis", "-p", "2", "-n", "2", "--point", "0.1,0.05", "--deriv", "1,0")
    assert sum(r["value"] for r in json.loads(out)["values"]) == pytest.approx(0.0, abs=1e-10)


def test_project_constant(capsys):
    code, out, _ = run(capsys, "project", "-p", "2", "-n", "4", "-f", "one")
    assert code == 0
    coeffs = np.array(json.loads(out)["coefficients"])
    assert len(coeffs) == 206
    assert np.max(np.abs(coeffs - 1.0)) < 1e-10


def test_study_csv(capsys, tmp_path):
    path = tmp_path / "study.csv"
    code, out, _ = run(capsys, "study", "-p", "1", "--levels", "3:5", "-f", "trig", "--out", str(path))
    assert code == 0 and out == ""
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    rows = [ln for ln in lines if not ln.startswith("#")]
    assert rows[0] == "level,h,err_L2,err_H1,ratio_L2,ratio_H1" and len(rows) == 4
    assert "# degree: 1" in meta and f"# version: {__version__}" in meta
    slope = float(next(ln for ln in meta if ln.startswith("# slope_L2")).split(":")[1])
    assert 1.7 < slope < 2.3


def test_study_json_matches_csv(capsys):
    _, csv_out, _ = run(capsys, "study", "-p", "1", "--levels", "3:4", "-f", "expf")
    _, js, _ = run(capsys, "study", "-p", "1", "--levels", "3:4", "-f", "expf", "--format", "json")
    data = json.loads(js)
    last = csv_out.strip().splitlines()[-1].split(",")
    assert float(last[2]) == data["rows"][-1]["err_L2"]


def test_stability_small(capsys):
    code, out, _ = run(capsys, "stability", "-p", "1", "--levels", "3:3", "--samples", "2")
    assert code == 0
    data = json.loads(out)
    assert data["config"]["seed"] == 42 and data["levels"][0]["level"] == 3
    assert data["levels"][0]["control_max"] <= 1.0


def test_geometry_check(capsys, tmp_path):
    code, out, _ = run(capsys, "geometry-check", "--geometry", "curved")
    assert code == 0 and json.loads(out)["valid"]
    g = identity_geometry()
    bad = RationalGeometry(g.degree, g.coarse_level, g.coeffs[0], g.coeffs[1], -g.coeffs[2])
    path = tmp_path / "folded.json"
    bad.save(path)
    code, out, _ = run(capsys, "geometry-check", "--geometry", str(path))
    assert code == 1 and not json.loads(out)["valid"]


@pytest.mark.parametrize("argv", [
    ["study", "-p", "2", "--levels", "2:3", "-f", "trig"],       # below n0
    ["study", "-p", "1", "--levels", "3:4", "-f", "unknown"],
    ["mesh", "-p", "2", "-n", "2", "--bogus"],
    ["basis", "-p", "2", "-n", "2", "--point", "0.5,0.7"],         # outside the triangle
    ["mesh", "-p", "0", "-n", "2"],
    ["geometry-check", "--geometry", "/nonexistent/geom.json"],
])
def test_invalid_input_exit_code(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == ""
    assert err.startswith("singiga: ") and err.count("\n") == 1


def test_numerical_failure_exit_code(capsys, monkeypatch):
    def boom(args):
        raise GramConditioningError("Gram matrix condition number 1e16")

    monkeypatch.setitem(cli.COMMANDS, "mesh", boom)
    code, _, err = run(capsys, "mesh", "-p", "2", "-n", "2")
    assert code == 2 and "Gram" in err


@pytest.mark.parametrize("cmd,flags", [
    ("study", ["--degree", "--levels", "--function", "--geometry", "--format", "--quad-order",
               "--projector-order", "--quadrature-check", "--paper-literal-mk", "--out"]),
    ("stability", ["--degree", "--levels", "--samples", "--seed", "--format", "--quadrature-check"]),
    ("mesh", ["--degree", "--level", "--classify", "--out"]),
])
def test_help_lists_flags(cmd, flags):
    res = subprocess.run([sys.executable, "-m", "singiga", cmd, "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for f in flags:
        assert f in res.stdout
