import json
import os

import pytest

from radcal.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_forward_csv(capsys):
    code, out, _ = _run(capsys, "forward", "--radii", "1,0.5,0", "--sigma", "1,3", "--m", "1")
    assert code == EXIT_OK
    header, row = out.splitlines()
    assert header == "j,lambda"
    assert float(row.split(",")[1]) == pytest.approx(7 / 9, rel=1e-15)


@pytest.mark.parametrize("method", ["analytic", "ad", "fd"])
def test_jacobian_methods(capsys, method):
    code, out, _ = _run(capsys, "jacobian", "--n", "2", "--sigma", "1 1", "--m", "2", "--method", method, "--format", "json")
    assert code == EXIT_OK
    rows = json.loads(out)
    assert rows[0]["d_sigma_1"] == pytest.approx(-0.75, rel=1e-8)


def test_solve_newton_json(capsys):
    code, out, _ = _run(capsys, "solve", "newton", "--n", "3", "--sigma-true", "0.7 1.2 0.9", "--seed", "4")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["status"] == "converged" and data["error_inf"] <= 1e-10


def test_solve_tikhonov_needs_truth(capsys):
    code, _, err = _run(capsys, "solve", "tikhonov", "--n", "2", "--y", "0.5 0.25")
    assert code == EXIT_USAGE and "sigma-true" in err


def test_solve_failure_exit_code(capsys):
    code, _, err = _run(capsys, "solve", "newton", "--n", "2", "--y", "10 10")
    assert code == EXIT_NUMERICAL and "max_restarts" in err


def test_convex_estimate_and_solve(capsys, tmp_path):
    code, out, _ = _run(capsys, "convex", "estimate-c", "--n", "2", "--out", str(tmp_path))
    assert code == EXIT_OK
    weight = json.loads((tmp_path / "weight.json").read_text())
    assert weight["m_used"] == 3
    c = " ".join(repr(v) for v in weight["c"])
    code, out, _ = _run(capsys, "convex", "solve", "--n", "2", "--m", "3", "--c", c, "--sigma-true", "0.8 1.1")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["error_inf"] <= 1e-5
    assert data["kkt"]["stationarity_residual_inf"] <= 1e-7


def test_landscape_scan_and_trace(capsys):
    code, out, _ = _run(capsys, "landscape", "scan", "--n", "2")
    assert code == EXIT_OK and json.loads(out)["sign_violations"] == 0
    code, out, _ = _run(capsys, "landscape", "trace-1d", "--lo", "0.2", "--hi", "5", "--num", "50")
    assert code == EXIT_OK and out.startswith("sigma,f,f1,f2\n")


def test_experiment_writes_outputs(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 3\ntrials = 4\nseed = 2\n")
    code, out, _ = _run(capsys, "--config", str(cfg), "experiment", "mean-error-vs-n", "--out", str(tmp_path / "o"), "--no-figures")
    assert code == EXIT_OK
    assert os.path.exists(tmp_path / "o" / "manifest.json")
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["trials"] == 4


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["experiment", "no-such-experiment"])
    assert info.value.code == EXIT_USAGE
    code, _, _ = _run(capsys, "forward", "--n", "2", "--sigma", "1 -1", "--m", "2")
    assert code == EXIT_USAGE
    code, _, _ = _run(capsys, "forward", "--sigma", "1", "--m", "2")
    assert code == EXIT_USAGE


def test_io_error_exit_code(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = _run(capsys, "experiment", "random-guess", "--trials", "3", "--out", str(blocker / "sub"))
    assert code == EXIT_IO and "file" in err
