import csv
import subprocess
import sys

import numpy as np
import pytest

from formcy import fdf
from formcy.cli import main, read_report
from formcy.torus import TorusGeometry


@pytest.fixture
def built(tmp_path):
    out = tmp_path / "c"
    assert main(["construct", "--delta", "0.6", "--grid", "64", "--out", str(out)]) == 0
    return out


def test_construct_outputs(built):
    report = read_report(built / "report.txt")
    assert float(report["k"]) == pytest.approx(0.8, abs=1e-12)
    assert float(report["C0"]) == pytest.approx(0.6 ** -0.25, rel=1e-12)
    assert report["status"] == "pass"
    for name in ("u.fdf", "v.fdf", "omega.fdf", "psi.fdf"):
        assert fdf.read(built / name).geometry.grid_shape == (64,)
    with open(built / "profile.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "one_plus_lu", "one_plus_lv", "norm_omega"]
    assert len(rows) == 65
    lu = np.array([float(r[1]) for r in rows[1:]])
    lv = np.array([float(r[2]) for r in rows[1:]])
    np.testing.assert_allclose(lu * lv, 0.6, rtol=1e-12)


@pytest.mark.parametrize("argv", [
    ["construct"],
    ["construct", "--delta", "1.5"],
    ["construct", "--delta", "0.5", "--grid", "9"],
    ["construct", "--delta", "abc"],
    ["frobnicate"],
    [],
    ["solve", "--axes", "1 9"],
    ["solve", "--f", "x.fdf", "--manufactured", "0.1"],
    ["verify", "--set-tol", "oops"],
    ["ricci"],
])
def test_usage_errors_exit_3(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "o")] if argv and argv[0] != "frobnicate" else argv) == 3
    assert "usage error" in capsys.readouterr().err


def test_construct_numeric_failure_exit_2(tmp_path, capsys):
    out = tmp_path / "c"
    # compatibility of the right-hand side cannot be certified this tightly
    assert main(["construct", "--delta", "0.6", "--grid", "64", "--tol", "1e-30", "--out", str(out)]) == 2
    report = read_report(out / "report.txt")
    assert report["status"] == "FAIL" and "inconsistent" in report["diagnostic"]
    assert "status = FAIL" in capsys.readouterr().err
    # compatibility holds to ~1e-14 here while the determinant residual is ~5e-12
    assert main(["construct", "--delta", "0.1", "--grid", "64", "--tol", "1e-13", "--out", str(out)]) == 2
    report = read_report(out / "report.txt")
    assert report["status"] == "FAIL" and float(report["det_identity"]) > 1e-13


def test_solve_manufactured(tmp_path):
    out = tmp_path / "s"
    assert main(["solve", "--manufactured", "0.05", "--grid", "32", "--out", str(out)]) == 0
    report = read_report(out / "report.txt")
    assert float(report["manufactured_error"]) < 1e-9
    assert float(report["kernel_margin"]) > 0
    assert report["status"] == "pass"
    with open(out / "history.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "residual_sup"] and len(rows) >= 3


def test_solve_from_fdf_source(tmp_path):
    g = TorusGeometry(3, (1, 3), (16, 16))
    f = g.sample(lambda x: 0.05 * np.cos(x[1]) * np.sin(x[3]))
    fdf.write_scalar(tmp_path / "f.fdf", f.as_real())
    out = tmp_path / "s"
    assert main(["solve", "--f", str(tmp_path / "f.fdf"), "--out", str(out)]) == 0
    assert read_report(out / "report.txt")["grid"] == "16 16"


def test_solve_rejects_matrix_source(tmp_path, built):
    assert main(["solve", "--f", str(built / "omega.fdf"), "--out", str(tmp_path / "s")]) == 3


def test_solve_failure_exit_2_with_diagnostic(tmp_path):
    out = tmp_path / "s"
    code = main(["solve", "--amplitude", "40", "--grid", "16", "--max-iters", "4", "--out", str(out)])
    assert code == 2
    report = read_report(out / "report.txt")
    assert report["status"] == "FAIL"
    assert report["diagnostic"].startswith(("cone exit", "continuation stalled"))
    assert (out / "history.csv").exists()


def test_verify_subset_and_failures(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--checks", "power-root-roundtrip,ddbar-mean-zero", "--out", str(out)]) == 0
    text = (out / "suite_report.txt").read_text()
    assert "suite.status = pass" in text
    assert main(["verify", "--checks", "power-root-roundtrip", "--set-tol", "power-root-roundtrip=0",
                 "--out", str(out)]) == 2
    assert main(["verify", "--checks", "nonexistent", "--out", str(out)]) == 2


def test_ricci_on_constructed_metric(tmp_path, built):
    out = tmp_path / "r"
    assert main(["ricci", "--metric", str(built / "omega.fdf"), "--out", str(out)]) == 0
    assert float(read_report(out / "ricci_report.txt")["ricci_sup"]) < 1e-9
    assert fdf.read(out / "ricci.fdf").kind == "hermitian"


def test_ricci_error_paths(tmp_path, built):
    out = str(tmp_path / "r")
    assert main(["ricci", "--metric", str(tmp_path / "missing.fdf"), "--out", out]) == 4
    (tmp_path / "junk.fdf").write_bytes(b"not a dump")
    assert main(["ricci", "--metric", str(tmp_path / "junk.fdf"), "--out", out]) == 4
    assert main(["ricci", "--metric", str(built / "u.fdf"), "--out", out]) == 3
    g = TorusGeometry.line(3, 8)
    fdf.write(tmp_path / "neg.fdf", g, "metric", np.broadcast_to(-np.eye(3), (8, 3, 3)))
    assert main(["ricci", "--metric", str(tmp_path / "neg.fdf"), "--out", out]) == 2


def test_report_merges_runs(tmp_path, built):
    s = tmp_path / "runs" / "s1"
    assert main(["solve", "--manufactured", "0.05", "--grid", "16", "--out", str(s)]) == 0
    assert main(["construct", "--delta", "0.25", "--n", "4", "--grid", "64",
                 "--out", str(tmp_path / "runs" / "c2")]) == 0
    out = tmp_path / "rep"
    assert main(["report", str(built), str(tmp_path / "runs"), "--out", str(out)]) == 0
    with open(out / "construct_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["n"], r["delta"]) for r in rows] == [("3", "0.6"), ("4", "0.25")]
    with open(out / "newton_histories.csv") as fh:
        hist = list(csv.reader(fh))
    assert hist[0] == ["run", "iteration", "residual_sup"] and hist[1][0] == "s1"
    assert "reports = 3" in (out / "summary.txt").read_text()


def test_report_io_errors(tmp_path):
    assert main(["report", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 4
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 4


def test_config_file_defaults_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# construction settings\ndelta = 0.25\ngrid = 32\n")
    out = tmp_path / "c"
    assert main(["--config", str(cfg), "construct", "--out", str(out)]) == 0
    report = read_report(out / "report.txt")
    assert report["delta"] == "0.25" and report["grid"] == "32"
    assert main(["--config", str(cfg), "construct", "--delta", "0.5", "--out", str(out)]) == 0
    assert read_report(out / "report.txt")["delta"] == "0.5"


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["--config", str(bad), "construct", "--delta", "0.5"]) == 3
    bad.write_text("just words\n")
    assert main(["--config", str(bad), "construct", "--delta", "0.5"]) == 3
    assert main(["--config", str(tmp_path / "absent.cfg"), "construct", "--delta", "0.5"]) == 4


def test_console_entry_point(tmp_path):
    out = tmp_path / "c"
    proc = subprocess.run([sys.executable, "-m", "formcy.cli", "construct", "--delta", "0.9",
                           "--grid", "32", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "status = pass" in proc.stdout
