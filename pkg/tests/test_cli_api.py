"""
Tests for the command-line interface and the HTTP API.

Tests cover:
  1. CLI exit codes for success, bad input and infeasibility
  2. Files written per command, including the run manifest
  3. Byte-identical run outputs for the same seed
  4. Settings from the environment and a .env file
  5. API endpoints: health, status, TCL discretization, MDP solve, power flow

Run:  python -m pytest tests/test_cli_api.py -v
"""
import sys
import os
import json

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from markovgrid.cli import main
from markovgrid.config import Settings
from markovgrid.errors import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK
from markovgrid.ingestion import load_manifest

DATA = os.path.join(os.path.dirname(__file__), "..", "markovgrid", "data")
PARAMS = os.path.join(DATA, "tcl_params.json")
FEEDER = os.path.join(DATA, "feeder_12.json")
MDP_TOY = os.path.join(DATA, "mdp_toy.json")

RUN_FILES = {"substation.csv", "voltages.csv", "tcl.csv", "solver.csv", "summary.json", "manifest.json"}


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


# ═══════════════════════════════════════════════════════════════════════════
#  CLI
# ═══════════════════════════════════════════════════════════════════════════


class TestDiscretizeCommand:
    def test_reference_grid_passes(self, capsys):
        assert main(["discretize", PARAMS, "--dx", "0.1", "--dt", "20"]) == EXIT_OK
        report = _stdout_json(capsys)
        assert report["N"] == 40
        assert report["cfl"] == "PASS"
        assert report["dt_max_seconds"] == pytest.approx(31.3, abs=0.05)

    def test_cfl_violation_is_infeasible(self, capsys):
        assert main(["discretize", PARAMS, "--dx", "0.1", "--dt", "60"]) == EXIT_INFEASIBLE
        assert _stdout_json(capsys)["cfl"] == "FAIL"

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "params.json"
        bad.write_text("{not json", encoding="utf-8")
        assert main(["discretize", str(bad)]) == EXIT_INPUT

    def test_missing_field(self, tmp_path):
        doc = json.loads(open(PARAMS, encoding="utf-8").read())
        del doc["eta"]
        path = tmp_path / "params.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["discretize", str(path)]) == EXIT_INPUT

    def test_missing_file(self, tmp_path):
        assert main(["discretize", str(tmp_path / "absent.json")]) == EXIT_INPUT

    def test_chain_dump(self, tmp_path):
        out = tmp_path / "chain.csv"
        assert main(["discretize", PARAMS, "--dx", "1.0", "--dump-chain", str(out)]) == EXIT_OK
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "row,col,value"
        assert len(lines) > 4


class TestSolveMdpCommand:
    def test_golden_toy(self, tmp_path, capsys):
        out = tmp_path / "toy"
        assert main(["solve-mdp", MDP_TOY, "--out", str(out)]) == EXIT_OK
        report = _stdout_json(capsys)
        assert report["status"] == "optimal"
        assert report["objective"] == pytest.approx(0.04, abs=1e-6)
        assert {p.name for p in out.iterdir()} == {"rho.csv", "policy_0.csv", "solution.json", "manifest.json"}
        manifest = load_manifest(out / "manifest.json")
        assert manifest.command == "solve-mdp"
        assert len(manifest.inputs) == 1

    def test_qp_dump(self, tmp_path):
        dump = tmp_path / "qp.txt"
        assert main(["--dump-qp", str(dump), "solve-mdp", MDP_TOY, "--out", str(tmp_path / "o")]) == EXIT_OK
        assert dump.stat().st_size > 0

    def test_zero_horizon_is_bad_input(self, tmp_path):
        doc = json.loads(open(MDP_TOY, encoding="utf-8").read())
        doc["T"] = 0
        doc["cost"] = {}
        doc["constraints"] = []
        path = tmp_path / "t0.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["solve-mdp", str(path), "--out", str(tmp_path / "o")]) == EXIT_INPUT

    def test_contradictory_columns_are_infeasible(self, tmp_path):
        doc = json.loads(open(MDP_TOY, encoding="utf-8").read())
        doc["constraints"] = [
            {"form": "linear_column", "t": 0, "j": 0, "alpha": [-1.0, 0.0], "beta": -0.8},
            {"form": "linear_column", "t": 0, "j": 0, "alpha": [1.0, 0.0], "beta": 0.2},
        ]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["solve-mdp", str(path), "--out", str(tmp_path / "o")]) == EXIT_INFEASIBLE


class TestRunMpcCommand:
    def test_writes_run_directory(self, coarse_scenario_path, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run-mpc", coarse_scenario_path, "--steps", "2", "--out", str(out)]) == EXIT_OK
        assert {p.name for p in out.iterdir()} == RUN_FILES
        report = _stdout_json(capsys)
        assert report["steps"] == 2
        manifest = load_manifest(out / "manifest.json")
        assert manifest.seed == 0
        assert manifest.status == "ok"
        assert manifest.config["with_tcl"] is True
        assert len(manifest.inputs) == 6

    def test_same_seed_identical_files(self, coarse_scenario_path, tmp_path):
        for name in ("a", "b"):
            args = ["run-mpc", coarse_scenario_path, "--steps", "2", "--seed", "3", "--out", str(tmp_path / name)]
            assert main(args) == EXIT_OK
        for csv in ("substation.csv", "voltages.csv", "tcl.csv", "solver.csv"):
            assert (tmp_path / "a" / csv).read_bytes() == (tmp_path / "b" / csv).read_bytes()

    def test_baseline_flag(self, coarse_scenario_path, tmp_path):
        out = tmp_path / "base"
        assert main(["run-mpc", coarse_scenario_path, "--steps", "1", "--no-tcl", "--out", str(out)]) == EXIT_OK
        assert load_manifest(out / "manifest.json").config["with_tcl"] is False

    def test_steps_beyond_data(self, coarse_scenario_path, tmp_path):
        code = main(["run-mpc", coarse_scenario_path, "--steps", "50", "--out", str(tmp_path / "x")])
        assert code == EXIT_INPUT
        manifest = load_manifest(tmp_path / "x" / "manifest.json")
        assert manifest.status == "failed"


class TestGridCommands:
    def test_powerflow(self, tmp_path, capsys):
        injections = tmp_path / "inj.csv"
        injections.write_text("node,p_kw,q_kvar\n5,-100,-30\n4,50,0\n", encoding="utf-8")
        out = tmp_path / "pf"
        assert main(["powerflow", FEEDER, str(injections), "--out", str(out)]) == EXIT_OK
        report = _stdout_json(capsys)
        assert report["balance_residual"] == pytest.approx(0.0, abs=1e-7)
        assert report["p0_kw"] > 0.0
        assert {p.name for p in out.iterdir()} == {"voltages.csv", "powerflow.json", "manifest.json"}

    def test_powerflow_unknown_node(self, tmp_path):
        injections = tmp_path / "inj.csv"
        injections.write_text("node,p_kw,q_kvar\n42,10,0\n", encoding="utf-8")
        assert main(["powerflow", FEEDER, str(injections), "--out", str(tmp_path / "pf")]) == EXIT_INPUT

    def test_linearize(self, tmp_path, capsys):
        base = tmp_path / "base.csv"
        base.write_text("node,p_kw,q_kvar\n5,-150,-45\n10,-150,-45\n4,100,0\n", encoding="utf-8")
        out = tmp_path / "lin"
        assert main(["linearize", FEEDER, str(base), "--out", str(out)]) == EXIT_OK
        report = _stdout_json(capsys)
        assert report["max_voltage_error_pu"] <= 1e-3
        assert {"K_p.csv", "K_q.csv", "k_p0.csv", "sweep.json", "manifest.json"} <= {p.name for p in out.iterdir()}


# ═══════════════════════════════════════════════════════════════════════════
#  SETTINGS
# ═══════════════════════════════════════════════════════════════════════════


class TestSettings:
    def test_environment_overrides_defaults(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("MPC_HORIZON", "7")
        assert Settings().MPC_HORIZON == 7

    def test_names_are_case_sensitive(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.delenv("MPC_HORIZON", raising=False)
        monkeypatch.setenv("mpc_horizon", "9")
        assert Settings().MPC_HORIZON == 20

    def test_dotenv_file_is_read(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.delenv("SOLVER_MAX_ITER", raising=False)
        (tmp_path / ".env").write_text("SOLVER_MAX_ITER=42\n")
        assert Settings().SOLVER_MAX_ITER == 42


# ═══════════════════════════════════════════════════════════════════════════
#  API
# ═══════════════════════════════════════════════════════════════════════════


@pytest.fixture(scope="module")
def client():
    from fastapi.testclient import TestClient

    from markovgrid.main import app

    with TestClient(app) as c:
        yield c


class TestApi:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "healthy"

    def test_status(self, client):
        body = client.get("/api/v1/status").json()
        assert body["mpc"]["horizon"] == 20
        assert set(body["routers"]) == {"tcl", "mdp", "grid"}

    def test_discretize(self, client):
        params = json.loads(open(PARAMS, encoding="utf-8").read())
        body = client.post("/api/v1/tcl/discretize", json={"params": params, "dx": 0.1, "dt_seconds": 20}).json()
        assert body["N"] == 40
        assert body["cfl_pass"] is True
        assert body["stationary_on_fraction"] == pytest.approx(0.232, abs=0.02)

    def test_discretize_reports_cfl_failure(self, client):
        params = json.loads(open(PARAMS, encoding="utf-8").read())
        body = client.post("/api/v1/tcl/discretize", json={"params": params, "dx": 0.1, "dt_seconds": 60}).json()
        assert body["cfl_pass"] is False
        assert body["stationary_on_fraction"] is None

    def test_discretize_bad_width(self, client):
        params = json.loads(open(PARAMS, encoding="utf-8").read())
        response = client.post("/api/v1/tcl/discretize", json={"params": params, "dx": 0.3})
        assert response.status_code == 422

    def test_mdp_solve(self, client):
        doc = json.loads(open(MDP_TOY, encoding="utf-8").read())
        response = client.post("/api/v1/mdp/solve", json=doc)
        assert response.status_code == 200
        body = response.json()
        assert body["objective"] == pytest.approx(0.04, abs=1e-6)
        assert body["kkt"]["passed"] is True

    def test_mdp_validate_lists_errors(self, client):
        doc = json.loads(open(MDP_TOY, encoding="utf-8").read())
        doc["T"] = 0
        body = client.post("/api/v1/mdp/validate", json=doc).json()
        assert body["valid"] is False
        assert body["errors"]

    def test_mdp_infeasible_is_conflict(self, client):
        doc = json.loads(open(MDP_TOY, encoding="utf-8").read())
        doc["constraints"] = [
            {"form": "linear_column", "t": 0, "j": 0, "alpha": [-1.0, 0.0], "beta": -0.8},
            {"form": "linear_column", "t": 0, "j": 0, "alpha": [1.0, 0.0], "beta": 0.2},
        ]
        assert client.post("/api/v1/mdp/solve", json=doc).status_code == 409

    def test_powerflow(self, client):
        feeder = json.loads(open(FEEDER, encoding="utf-8").read())
        payload = {"feeder": feeder, "injections": [{"node": 5, "p": -0.1, "q": -0.03}]}
        body = client.post("/api/v1/grid/powerflow", json=payload).json()
        assert body["converged"] is True
        assert len(body["v_mag"]) == 12
        assert body["p0"] == pytest.approx(0.1 + body["losses_p"], abs=1e-7)
