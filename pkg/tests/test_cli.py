import json
import subprocess
import sys

import numpy as np
import pytest

from otkit.cli import main
from otkit.core import read_matrix, write_matrix


@pytest.fixture
def problem(tmp_path):
    write_matrix(tmp_path / "C", [[0.0, 1.0], [1.0, 0.0]])
    write_matrix(tmp_path / "r", [0.7, 0.3])
    write_matrix(tmp_path / "c", [0.4, 0.6])
    return tmp_path


def args(d, *names):
    return [str(d / n) for n in names]


def test_solve_prints_objective(problem, capsys):
    assert main(["solve", *args(problem, "C", "r", "c"), "--eps", "0.05"]) == 0
    out = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert 0.3 - 1e-12 <= float(out["objective"]) <= 0.35
    for key in ("iterations", "eta", "eps_prime", "row_residual", "col_residual"):
        assert key in out


def test_solve_json_trace_and_plan(problem, capsys):
    rc = main([
        "solve", *args(problem, "C", "r", "c"), "--eps", "0.05", "--projector", "greenkhorn",
        "--json", "--trace", str(problem / "t.csv"), "--out", str(problem / "P"),
    ])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["schema"] == 1
    assert payload["projector"] == "greenkhorn"
    assert (problem / "t.csv").read_text().startswith("iteration,dist,potential")
    P = read_matrix(problem / "P")
    np.testing.assert_allclose(P.sum(axis=1), [0.7, 0.3], atol=1e-10)


def test_solve_zero_cost(problem, capsys):
    write_matrix(problem / "Z", np.zeros((2, 2)))
    assert main(["solve", *args(problem, "Z", "r", "c")]) == 0
    assert "objective: 0.0" in capsys.readouterr().out


def test_eta_override(problem, capsys):
    assert main(["solve", *args(problem, "C", "r", "c"), "--eta-override", "3", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["eta"] == 3.0


def test_input_errors_exit_2(problem, capsys):
    assert main(["solve", str(problem / "missing"), *args(problem, "r", "c")]) == 2
    (problem / "bad").write_text("0 x\n1 0\n")
    assert main(["solve", *args(problem, "bad", "r", "c")]) == 2
    write_matrix(problem / "r3", [0.2, 0.3, 0.5])
    assert main(["solve", *args(problem, "C", "r3", "c")]) == 2
    assert main(["solve", *args(problem, "C", "r", "c"), "--eps", "-1"]) == 2
    assert "input error" in capsys.readouterr().err


def test_unknown_flag_rejected(problem):
    with pytest.raises(SystemExit) as exc:
        main(["solve", *args(problem, "C", "r", "c"), "--epsilon", "0.1"])
    assert exc.value.code == 2


def test_numeric_failure_exit_3(problem, monkeypatch, capsys):
    import otkit.sinkhorn as sk

    monkeypatch.setattr(sk, "sinkhorn_iteration_cap", lambda *_: 1)
    assert main(["solve", *args(problem, "C", "r", "c"), "--eps", "0.01"]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_project(problem, capsys):
    write_matrix(problem / "A", [[1.0, 0.5], [0.5, 1.0]])
    rc = main(["project", *args(problem, "A", "r", "c"), "--eps-prime", "1e-6", "--json",
               "--trace", str(problem / "pt.csv"), "--out", str(problem / "B")])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dist"] <= 1e-6
    assert payload["terminated"] == "converged"
    assert len((problem / "pt.csv").read_text().splitlines()) == payload["iterations"] + 2


def test_round(problem, capsys):
    write_matrix(problem / "F", [[0.5, 0.3], [0.1, 0.1]])
    write_matrix(problem / "h", [0.5, 0.5])
    assert main(["round", *args(problem, "F", "h", "h")]) == 0
    rows = [list(map(float, line.split())) for line in capsys.readouterr().out.splitlines()]
    np.testing.assert_allclose(rows, [[0.3125, 0.1875], [0.1875, 0.3125]], atol=1e-15)
    assert main(["round", *args(problem, "F", "h", "h"), "--coin", "1", "--out", str(problem / "G")]) == 0
    np.testing.assert_allclose(read_matrix(problem / "G").sum(axis=0), [0.5, 0.5], atol=1e-12)


def test_oracle(problem, capsys):
    assert main(["oracle", *args(problem, "C", "r", "c"), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["value"] == pytest.approx(0.3, abs=1e-12)
    assert payload["schema"] == 1


def test_bench_zero_pairs(tmp_path):
    assert main(["bench", "--pairs", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "records.csv").read_text() == "instance_id,projector,updates,dist,objective,wall_ms\n"


def test_bench_seed_reproducible(tmp_path, monkeypatch):
    common = ["bench", "--m", "4", "--pairs", "2", "--budget", "160", "--threads", "1"]
    assert main([*common, "--seed", "5", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("OTKIT_SEED", "5")
    assert main([*common, "--out", str(tmp_path / "b")]) == 0
    for name in ("records.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["schema"] == 1
    assert "median" in summary["final"]["competitive_ratio"]


def test_bench_bad_mnist_file(tmp_path):
    (tmp_path / "x").write_bytes(b"\x00\x00\x08\x01" + bytes(12))
    rc = main(["bench", "--mode", "mnist", "--mnist-file", str(tmp_path / "x"), "--mnist-pairs", "0:1",
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_help_lists_flags():
    out = subprocess.run([sys.executable, "-m", "otkit.cli", "bench", "--help"], capture_output=True, text=True).stdout
    for flag in ("--mode", "--m", "--fg", "--eta", "--eps", "--pairs", "--seed", "--budget", "--out", "--threads"):
        assert flag in out
