import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rhg.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main
from rhg.scenarios import builtin, save_scenario


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_writes_csv_and_summary(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--scenario", "illustrative_stable", "--out", str(out), "--steps", "15"]) == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["t", "x_0", "x_1", "x_2", "x_3", "u_0", "u_1", "u_2", "u_3", "residual", "min_slack", "V"]
    assert len(rows) == 1 + 16
    np.testing.assert_allclose([float(v) for v in rows[1][1:5]], [5, -5, -5, 5])
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert summary["steps"] == 15 and summary["status"] == "ok"
    assert len(summary["x_s"]) == 4


def test_simulate_is_deterministic_for_a_seed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["simulate", "--scenario", "battery_charging", "--seed", "5", "--out", str(p),
                     "--steps", "6"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_certify_local_battery_succeeds(tmp_path):
    out = tmp_path / "cert.json"
    assert main(["certify", "--scenario", "battery_charging", "--mode", "local", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["certified"] and len(doc["agents"]) == 3
    assert np.asarray(doc["P"]).shape == (3, 3)


def test_certify_global_infeasible_exit_code(tmp_path):
    out = tmp_path / "cert.json"
    code = main(["certify", "--scenario", "illustrative_unstable", "--mode", "global", "--budget", "3000",
                 "--out", str(out)])
    assert code == EXIT_INFEASIBLE
    doc = json.loads(out.read_text())
    assert doc["feasible"] is False and "sufficient only" in doc["note"]


def test_certificate_feeds_the_V_column(tmp_path):
    cert, traj = tmp_path / "cert.json", tmp_path / "traj.csv"
    main(["certify", "--scenario", "battery_charging", "--mode", "local", "--out", str(cert)])
    assert main(["simulate", "--scenario", "battery_charging", "--steps", "4", "--certificate", str(cert),
                 "--out", str(traj)]) == EXIT_OK
    V = [float(r[-1]) for r in read_csv(traj)[1:]]
    assert len(V) == 5 and all(v >= 0 for v in V)


def test_scalar_mode_rejects_multidimensional_agents(tmp_path):
    code = main(["certify", "--scenario", "illustrative_stable", "--mode", "scalar", "--out",
                 str(tmp_path / "c.json")])
    assert code == EXIT_USAGE


def test_region_preset(tmp_path):
    out = tmp_path / "region.csv"
    assert main(["region", "--preset", "fig3b", "--resolution", "11", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["A", "W", "mu", "lambda1", "feasible"]
    assert len(rows) == 1 + 121
    flags = {r[4] for r in rows[1:]}
    assert flags == {"0", "1"}


@pytest.mark.parametrize("argv", [
    ["region", "--preset", "fig3b", "--resolution", "1", "--out", "x.csv"],
    ["region", "--out", "x.csv"],
    ["certify", "--scenario", "nope", "--out", "x.json"],
    ["certify", "--scenario", "battery_charging", "--budget", "0", "--out", "x.json"],
    ["simulate", "--scenario", "battery_charging"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == EXIT_USAGE


def test_steady_state_needs_stable_dynamics(tmp_path):
    sc = builtin("illustrative_stable")
    bad = sc.spec.agents[0].dynamics.A * 0 + np.array([[1.2, 0.0], [0.0, 0.5]])
    doc_path = tmp_path / "s.json"
    save_scenario(sc, doc_path)
    doc = json.loads(doc_path.read_text())
    doc["agents"][0]["A"] = bad.tolist()
    doc_path.write_text(json.dumps(doc))
    assert main(["steady-state", "--scenario", str(doc_path), "--out", str(tmp_path / "ss.json")]) == EXIT_USAGE


def test_solver_failure_exit_code_keeps_partial_csv(tmp_path):
    out = tmp_path / "t.csv"
    code = main(["simulate", "--scenario", "battery_charging", "--tol", "1e-300", "--steps", "3",
                 "--out", str(out)])
    assert code == EXIT_SOLVER
    assert read_csv(out)[0][0] == "t"


def test_console_entry_point(tmp_path):
    out = tmp_path / "ss.json"
    proc = subprocess.run([sys.executable, "-m", "rhg", "steady-state", "--scenario", "battery_charging",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(json.loads(out.read_text())["x_s"]) == 3
