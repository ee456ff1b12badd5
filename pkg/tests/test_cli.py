import csv
import io
import json
import subprocess
import sys

import pytest

from hamsym.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_catalog_list(capsys):
    code, out, _ = run(capsys, "catalog", "list")
    assert code == 0
    assert [line.split("\t")[0] for line in out.splitlines()][:2] == ["cubic", "coulomb"]


def test_catalog_export_then_verify_file(capsys, tmp_path):
    path = tmp_path / "cubic.cfg"
    code, _, _ = run(capsys, "catalog", "export", "cubic", "--out", str(path))
    assert code == 0
    code, out, _ = run(capsys, "verify", str(path), "--samples", "20")
    assert code == 0
    report = json.loads(out)
    assert report["all_expectations_hold"]
    assert {s["symmetry"]: s["verdict"] for s in report["symmetries"]}["X3"] == "divergence-invariant"


def test_verify_fails_on_wrong_expectation(capsys, tmp_path):
    path = tmp_path / "wrong.cfg"
    run(capsys, "catalog", "export", "cubic", "--out", str(path))
    path.write_text(path.read_text().replace('expect = "divergence_invariant"', 'expect = "invariant"'))
    code, out, _ = run(capsys, "verify", str(path), "--samples", "20")
    assert code == 1
    assert not json.loads(out)["all_expectations_hold"]


def test_identity(capsys):
    code, out, _ = run(capsys, "identity", "osc-midpoint", "--samples", "50", "--seed", "4")
    assert code == 0
    assert json.loads(out)["max_residual"] <= 1e-10


def test_integrate_csv(capsys):
    code, out, err = run(capsys, "integrate", "cubic", "--t-end", "0.5", "--dt", "0.1")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "q1", "p1", "I1", "I2", "I3", "rel:connect"]
    assert len(rows) == 7
    assert rows[-1][0] == "0.5"
    assert all(f"{float(x):.17g}" == x for row in rows[1:] for x in row)
    assert set(json.loads(err)["drift"]) == {"I1", "I2", "I3"}


def test_lattice_csv(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, out, _ = run(capsys, "lattice", "osc-midpoint", "--steps", "5", "--out", str(path))
    assert code == 0
    report = json.loads(out)
    assert report["max_residual_norm"] <= 1e-12
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 6
    assert rows[0]["h_minus"] == "" and rows[0]["I1"] == ""
    assert float(rows[1]["q1"]) == pytest.approx(0.980198019801980, abs=1e-15)
    assert "energy" in rows[0]


def test_lattice_partial_output_on_failure(capsys, tmp_path):
    path = tmp_path / "nl.csv"
    code, out, _ = run(capsys, "lattice", "nonlinear", "--steps", "60", "--out", str(path))
    assert code == 3
    report = json.loads(out)
    assert report["error"]["failed_index"] == report["points"]
    assert len(path.read_text().splitlines()) == report["points"] + 1


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "no-such-system"],
        ["integrate", "osc-exact", "--t-end", "1", "--dt", "0.1"],
        ["lattice", "cubic", "--steps", "3"],
        ["integrate", "cubic"],
        ["lattice", "osc-midpoint", "--steps", "3", "--h0", "-1"],
        ["integrate", "kepler3d", "--t-end", "1", "--dt", "0.1", "--q", "1,2"],
        ["catalog", "export"],
    ],
)
def test_input_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("error:")


def test_config_error_reports_line(capsys, tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text('[system]\nkind = "continuous"\nn = "1"\nH = "q1 +"\n')
    code, _, err = run(capsys, "verify", str(path))
    assert code == 2
    assert "line 4" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hamsym", "catalog", "list"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "kepler3d" in proc.stdout
