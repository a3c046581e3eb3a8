import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from qsfm import cli, verify

SCEN = Path(__file__).resolve().parents[1] / "demos" / "scenarios"


def write(tmp_path, obj, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_sis_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(SCEN / "sis.json"), "--out", str(out)]) == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,p1,p2"
    assert np.allclose(data[:, 1], np.exp(-data[:, 0]), rtol=1e-13)
    assert np.all(data[:, 2] == 0)


def test_csv_is_deterministic_and_lf(tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        cli.main(["run", "--scenario", str(SCEN / "two_qubit.json"), "--out", str(out), "--seed", "7"])
        blobs.append((out / "trajectory.csv").read_bytes())
    assert blobs[0] == blobs[1]
    assert b"\r\n" not in blobs[0]
    first = blobs[0].splitlines()[1].split(b",")
    assert len(first) == 12


@pytest.mark.parametrize("name", sorted(p.name for p in SCEN.glob("*.json")))
def test_every_demo_scenario(tmp_path, name):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(SCEN / name), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, cli.SUMMARY_SCHEMA)
    assert set(summary) >= {"inputs", "derived_parameters", "max_residuals", "wall_time"}


def test_q2c_summary(tmp_path):
    out = tmp_path / "o"
    cli.main(["run", "--scenario", str(SCEN / "q2c.json"), "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_deviation"] <= 1e-6
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert len(rows) == 1002 and rows[0].startswith("t,fsm_pR1,fsm_pI1")


def test_json_format_and_steps_override(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(SCEN / "sis.json"), "--out", str(out),
                     "--format", "json", "--steps", "10"]) == 0
    rows = json.loads((out / "trajectory.json").read_text())
    assert len(rows) == 11 and set(rows[0]) == {"t", "p1", "p2"}


def test_unknown_kind_exit_2(tmp_path, capsys):
    p = write(tmp_path, {"kind": "teleport"})
    assert cli.main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "map-q2c" in err and "wannier-1d" in err


def test_invalid_payload_exit_2(tmp_path):
    p = write(tmp_path, {"kind": "fsm", "generator": [[0, 1], [1, 0]], "p0": [1, 0], "t1": 1})
    assert cli.main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    p = write(tmp_path, {"kind": "quantum", "hamiltonian": {"E_p": [0, 0, 0, 0],
                         "t_s": {"1A2A": 1, "1B2B": 1}, "d": [1, 0, 1, 1], "q": 1},
                         "psi0": [1, 0, 0, 0], "t1": 1, "steps": 2})
    assert cli.main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["run", "--scenario", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    # real amplitudes: every sin part is zero, so synthesis is singular at once
    p = write(tmp_path, {"kind": "map-q2c",
                         "hamiltonian": {"E_p": [0, 0, 0, 0], "t_s": {"1A2A": 0.3, "1B2B": 0.2}},
                         "psi0": [0.5, 0.5, 0.5, 0.5], "t1": 1, "dt": 0.01})
    assert cli.main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3
    assert "component" in capsys.readouterr().err


def test_verify_filter_and_unknown(tmp_path, capsys):
    assert cli.main(["verify", "--suite", "fsm", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report and {r["suite"] for r in report} == {"fsm"}
    assert set(report[0]) == {"suite", "invariant", "status", "residual", "tolerance"}
    assert cli.main(["verify", "--suite", "nope"]) == 2


def test_verify_broken_tolerance(monkeypatch):
    broken = [verify.Check(c.suite, c.invariant, c.fn, -1.0) for c in verify.CHECKS[:1]]
    monkeypatch.setattr(verify, "CHECKS", broken)
    assert cli.main(["verify"]) == 3


def test_verify_zero_tolerance_fails():
    report = verify.run_suites(suite="linalg", tolerance_scale=-1.0)
    assert not verify.all_passed(report)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qsfm", "run", "--scenario", str(SCEN / "bell.json"),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert abs(s["derived_parameters"]["S_A"] - np.log(2)) < 1e-12
