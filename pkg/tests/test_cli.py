import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from signalcraft import cli
from signalcraft.lp import SolverError

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def run_cli(*argv, env=None):
    return subprocess.run([sys.executable, "-m", "signalcraft", *map(str, argv)],
                          capture_output=True, text=True, env=env)


def test_design_r2(tmp_path):
    out = tmp_path / "r2.json"
    assert cli.run(["design", "--config", str(DEMOS / "r2.json"), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["regime"] == "R2"
    assert res["value"] == pytest.approx(0.6, abs=1e-6)


def test_design_lp_capacity(tmp_path):
    out, dump = tmp_path / "cap.json", tmp_path / "cap.lp"
    code = cli.run(["design-lp", "--config", str(DEMOS / "capacity.json"), "--out", str(out),
                    "--dump-lp", str(dump)])
    assert code == 0
    assert json.loads(out.read_text())["value"] == pytest.approx(0.425, abs=1e-6)
    assert dump.read_text().splitlines()[1].startswith("VARS 12 EQ 3 LE 7")


def test_byte_identical_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert cli.run(["design", "--config", str(DEMOS / "r2.json"), "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_floats_have_17_digits():
    text = cli.dumps({"x": 0.1, "y": 1.0, "z": float("inf")})
    assert '"x": 0.10000000000000001' in text
    assert '"y": 1.0' in text
    assert json.loads(text)["z"] == float("inf")


def test_round_trip_design_check_evaluate(tmp_path):
    mech = tmp_path / "mech.json"
    assert cli.run(["design", "--config", str(DEMOS / "r2.json"), "--out", str(mech)]) == 0
    prior = tmp_path / "prior.json"
    prior.write_text(json.dumps({"kind": "uniform", "a": 0, "b": 1}))
    report = tmp_path / "check.json"
    assert cli.run(["check", "--mechanism", str(mech), "--prior", str(prior),
                    "--out", str(report)]) == 0
    assert json.loads(report.read_text())["feasible"] is True
    ev = tmp_path / "eval.json"
    assert cli.run(["evaluate", "--config", str(DEMOS / "r2.json"), "--mechanism", str(mech),
                    "--out", str(ev)]) == 0
    assert json.loads(ev.read_text())["value"] == pytest.approx(0.6, abs=1e-6)


def test_check_reports_infeasible(tmp_path):
    mech = tmp_path / "bad.json"
    # posterior 0.1 on half the mass is below what any split of Uniform[0, 1] allows
    mech.write_text(json.dumps({"pairs": [[0.5, 0.1], [0.5, 0.9]]}))
    prior = tmp_path / "prior.json"
    prior.write_text(json.dumps({"kind": "uniform", "a": 0, "b": 1}))
    report = tmp_path / "check.json"
    assert cli.run(["check", "--mechanism", str(mech), "--prior", str(prior),
                    "--out", str(report)]) == 0
    assert json.loads(report.read_text())["feasible"] is False


def test_evaluate_discrete_conditionals(tmp_path):
    mech = tmp_path / "cap.json"
    assert cli.run(["design-lp", "--config", str(DEMOS / "capacity.json"), "--out", str(mech)]) == 0
    ev = tmp_path / "ev.json"
    assert cli.run(["evaluate", "--config", str(DEMOS / "capacity.json"), "--mechanism", str(mech),
                    "--out", str(ev)]) == 0
    out = json.loads(ev.read_text())
    assert out["value"] == pytest.approx(0.425, abs=1e-9)
    assert [r["j"] for r in out["conditional_rows"]] == [0, 1, 2]


def _mc_config(tmp_path, seed):
    cfg = json.loads((DEMOS / "r2.json").read_text())
    cfg.update({"seed": seed, "monte_carlo": {"samples": 2000},
                "mechanism": {"breakpoints": [0, 0.5, 1], "rows": [[1, 0], [0, 1]]}})
    path = tmp_path / f"mc{seed}.json"
    path.write_text(json.dumps(cfg))
    return path


def test_seed_env_overrides_config(tmp_path, monkeypatch):
    cfg = _mc_config(tmp_path, 1)
    out = tmp_path / "o.json"

    def mc_seed():
        assert cli.run(["evaluate", "--config", str(cfg), "--out", str(out)]) == 0
        return json.loads(out.read_text())["method"]["mc_seed"]

    assert mc_seed() == 1
    monkeypatch.setenv(cli.SEED_ENV, "99")
    assert mc_seed() == 99
    monkeypatch.setenv(cli.SEED_ENV, "not-a-number")
    assert cli.run(["evaluate", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_CONFIG


def test_sweep_csv_header(tmp_path):
    cfg = json.loads((DEMOS / "capacity_sweep.json").read_text())
    cfg["sweep"] = {"b": [0.0, 0.5, 1.0]}
    cfg.pop("output", None)
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    table = tmp_path / "sweep.csv"
    assert cli.run(["sweep", "--config", str(path), "--csv", str(table), "--out",
                    str(tmp_path / "s.json")]) == 0
    rows = list(csv.reader(table.open()))
    assert rows[0] == ["b", "V_opt", "V_ni", "V_fi"]
    assert len(rows) == 4 and float(rows[1][1]) == 1.0


def test_convergence_csv(tmp_path):
    cfg = json.loads((DEMOS / "rho_convergence.json").read_text())
    cfg["convergence"] = {"levels": [[5, 5], [10, 10]]}
    cfg.pop("output", None)
    path = tmp_path / "conv.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "conv_out.json"
    assert cli.run(["convergence", "--config", str(path), "--out", str(out), "--jobs", "1"]) == 0
    rows = list(csv.reader(out.with_suffix(".csv").open()))
    assert rows[0] == ["delta", "tau", "value", "gap"] and len(rows) == 3


@pytest.mark.parametrize("cfg", [
    {"equilibrium": {"kind": "identity"}, "preference": {"kind": "set", "omegas": [[0, 0.3]]}},
    {"prior": {"kind": "nope"}, "equilibrium": {"kind": "identity"},
     "preference": {"kind": "set", "omegas": [[0, 0.3]]}},
    {"prior": {"kind": "uniform", "a": 0, "b": 1}, "equilibrium": {"kind": "identity"},
     "preference": {"kind": "set", "omegas": [[0.5, 0.3]]}},
])
def test_config_errors_exit_2(tmp_path, cfg):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert cli.run(["design", "--config", str(path)]) == cli.EXIT_CONFIG


def test_unreadable_config_exit_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.run(["design", "--config", str(path)]) == cli.EXIT_CONFIG
    assert cli.run(["design", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_solver_error_exit_3(monkeypatch):
    def fail(*args, **kwargs):
        raise SolverError("design LP infeasible")

    monkeypatch.setattr(cli, "design_scaled_capacity", fail)
    assert cli.run(["design-lp", "--config", str(DEMOS / "capacity.json")]) == cli.EXIT_SOLVER


def test_usage_errors_through_entry_point():
    assert run_cli("design", "--config", DEMOS / "r2.json", "--bogus").returncode == 2
    assert run_cli("design").returncode == 2
    assert run_cli("frobnicate").returncode == 2


def test_stdout_default():
    proc = run_cli("design", "--config", DEMOS / "r2.json")
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["regime"] == "R2"
