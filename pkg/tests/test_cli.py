import json

import numpy as np
import pytest

from crosscoord.cli import main


def test_simulate_writes_outputs(tmp_path, capsys):
    assert main(["simulate", "--scenario", "paper_32.json", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "trajectories.csv").exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["n_vehicles"] == 32 and metrics["violations"] == []
    assert "makespan=" in capsys.readouterr().out


def test_simulate_is_byte_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--scenario", "paper_32.json", "--out-dir", str(tmp_path / name)]) == 0
    for f in ("trajectories.csv", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_overrides_and_seed(tmp_path):
    args = ["simulate", "--scenario", "paper_32.json", "--out-dir", str(tmp_path)]
    assert main(args + ["--set", "v0_jitter=1.0", "--set", "a_max=3.0", "--seed", "4"]) == 0


def test_usage_errors(tmp_path, capsys):
    assert main(["simulate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json")]) == 1
    assert main(["simulate", "--scenario", "paper_32.json", "--set", "bogus=1", "--out-dir", str(tmp_path)]) == 1
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_incomplete_run_exit_code(tmp_path):
    args = ["simulate", "--scenario", "paper_32.json", "--out-dir", str(tmp_path), "--set", "max_time=5"]
    assert main(args) == 2


def test_solve_two_vehicle(tmp_path, capsys):
    assert main(["solve", "--instance", "two_vehicle.milp", "--out-dir", str(tmp_path)]) == 0
    sol = json.loads((tmp_path / "two_vehicle.solution.json").read_text())
    assert sol["status"] == "optimal"
    assert sol["objective"] == pytest.approx(37.4603, abs=1e-4)
    first = (tmp_path / "two_vehicle.solution.json").read_bytes()
    assert main(["solve", "--instance", "two_vehicle.milp", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "two_vehicle.solution.json").read_bytes() == first


def test_solve_infeasible(tmp_path):
    assert main(["solve", "--instance", "infeasible.milp", "--out-dir", str(tmp_path)]) == 2


def test_select_prints_flag_and_graph(capsys):
    assert main(["select", "--instance", "rule_fixtures.select"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "FLAG 1 1 0 0"
    assert out[1].startswith("digraph")


def test_report_matches_timings(tmp_path, capsys):
    assert main(["simulate", "--scenario", "paper_32.json", "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["report", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    times = json.loads((tmp_path / "timings.json").read_text())["solve_times_ms"]
    assert f"mean {np.mean(times):.3f} ms" in out
    assert "subset sizes:" in out


def test_report_missing_dir(tmp_path):
    assert main(["report", "--out-dir", str(tmp_path / "nothing")]) == 1
