"""Command-line interface: exit codes, CSV shape, and determinism."""

import json

import pytest
from click.testing import CliRunner

from ambimax.cli import main


BINOMIAL = {
    "scenario": {"states": ["g", "b"], "payoffs": [[1.1, 0.9]], "prices": [1.0]},
    "agents": [
        {"utility": {"kind": "power", "gamma": 2.0}, "w0": 1.0,
         "prior": [0.75, 0.25], "c": 1.01, "alpha": 0.75},
        {"utility": {"kind": "power", "gamma": 2.0}, "w0": 1.0,
         "prior": [0.75, 0.25], "c": 1.01, "alpha": 0.25},
    ],
    "price_grid": {"lo": 0.96, "hi": 1.09, "n": 7},
    "theta_grid": {"lo": -1.0, "hi": 1.0, "n": 5},
}

EQUILIBRIUM = {
    "scenario": {"states": ["g", "b"], "payoffs": [[1.1, 0.9]], "prices": [1.0]},
    "agents": [
        {"utility": {"kind": "log"}, "w0": 1.0, "prior": [0.5, 0.5],
         "c": 1.01, "alpha": 0.25},
        {"utility": {"kind": "log"}, "w0": 1.0, "prior": [0.25, 0.75],
         "c": 1.01, "alpha": 0.75},
    ],
    "supply": 0.0,
    "sweep": {"param": "p0", "agent": 1, "lo": 0.2, "hi": 0.8, "n": 3},
}

RISKSHARE = {
    "scenario": {"states": ["g", "b"], "payoffs": [[1.1, 0.9]], "prices": [1.0]},
    "agents": [
        {"utility": {"kind": "exponential", "gamma": 2.0}, "w0": 1.0,
         "prior": [0.25, 0.75], "c": 1.0025, "alpha": 1.0},
        {"utility": {"kind": "exponential", "gamma": 1.0}, "w0": 1.0,
         "prior": [0.25, 0.75], "c": 1.0025, "alpha": 1.0},
    ],
    "riskshare": {"theta1": 1.0, "theta2": 0.0, "deltas": [0.0, 0.05, 0.1]},
}


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestCheck:
    def test_valid_config_exits_zero(self, runner, tmp_path):
        path = write_config(tmp_path, BINOMIAL)
        result = runner.invoke(main, ["check", "--config", path])
        assert result.exit_code == 0
        assert "eta_low" in result.output

    def test_divergence_violation_exits_one_and_names_the_state(self, runner, tmp_path):
        bad = json.loads(json.dumps(BINOMIAL))
        bad["agents"][0]["prior"] = [0.9, 0.1]
        bad["agents"][0]["c"] = 5.0
        path = write_config(tmp_path, bad)
        result = runner.invoke(main, ["check", "--config", path])
        assert result.exit_code == 1
        assert "'b'" in result.output  # the small-mass state sets the bound

    def test_schema_violation_exits_two(self, runner, tmp_path):
        path = write_config(tmp_path, {"scenario": {"states": ["a", "b"]}})
        result = runner.invoke(main, ["check", "--config", path])
        assert result.exit_code == 2

    def test_malformed_json_exits_two(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        result = runner.invoke(main, ["check", "--config", str(path)])
        assert result.exit_code == 2


class TestDemandCommand:
    def test_csv_columns_and_martingale(self, runner, tmp_path):
        path = write_config(tmp_path, BINOMIAL)
        out = tmp_path / "demand.csv"
        result = runner.invoke(main, ["demand", "--config", path, "--out", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "price,theta,side,global_side,value,foc_residual,q_1,q_2"
        assert len(lines) == 1 + 7

    def test_seeker_rows_carry_local_optima(self, runner, tmp_path):
        path = write_config(tmp_path, BINOMIAL)
        out = tmp_path / "seeker.csv"
        result = runner.invoke(main, ["demand", "--config", path, "--agent", "1",
                                      "--grid", "1.0:1.05:3", "--out", str(out)])
        assert result.exit_code == 0
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        sides = {(r[0], r[2]) for r in rows}
        # below the band only the long side exists; inside it both do
        assert ("1", "long") in sides and ("1", "short") not in sides
        assert ("1.05", "long") in sides and ("1.05", "short") in sides

    def test_deterministic_output(self, runner, tmp_path):
        path = write_config(tmp_path, BINOMIAL)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert runner.invoke(main, ["demand", "--config", path, "--out", str(out1)]).exit_code == 0
        assert runner.invoke(main, ["demand", "--config", path, "--out", str(out2)]).exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_grid_override_validation(self, runner, tmp_path):
        path = write_config(tmp_path, BINOMIAL)
        result = runner.invoke(main, ["demand", "--config", path, "--grid", "nonsense"])
        assert result.exit_code != 0


class TestEquilibriumCommand:
    def test_first_best_sweep(self, runner, tmp_path):
        path = write_config(tmp_path, EQUILIBRIUM)
        out = tmp_path / "eq.csv"
        result = runner.invoke(main, ["equilibrium", "--config", path, "--out", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "sweep_param,price,theta_1,theta_2,kind"
        assert len(lines) == 4
        kinds = [line.split(",")[-1] for line in lines[1:]]
        assert "first_best" in kinds

    def test_second_best_mode(self, runner, tmp_path):
        config = {
            "scenario": {"states": ["g", "b"], "payoffs": [[1.1, 0.9]], "prices": [1.0]},
            "agents": [
                {"utility": {"kind": "power", "gamma": 2.0}, "w0": 1.0,
                 "prior": [0.25, 0.75], "c": 1.01, "alpha": 0.75},
                {"utility": {"kind": "power", "gamma": 2.0}, "w0": 1.0,
                 "prior": [0.25, 0.75], "c": 1.01, "alpha": 0.4},
                {"utility": {"kind": "power", "gamma": 2.0}, "w0": 1.0,
                 "prior": [0.25, 0.75], "c": 1.01, "alpha": 0.5},
            ],
        }
        path = write_config(tmp_path, config)
        out = tmp_path / "sb.csv"
        result = runner.invoke(main, ["equilibrium", "--config", path, "--mode", "second",
                                      "--out", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3  # two clearing prices
        assert all(line.endswith("second_best") for line in lines[1:])


class TestPremiumCommand:
    def test_neutral_column_is_zero(self, runner, tmp_path):
        config = json.loads(json.dumps(BINOMIAL))
        config["agents"][0]["alpha"] = 0.5
        path = write_config(tmp_path, config)
        out = tmp_path / "prem.csv"
        result = runner.invoke(main, ["premium", "--config", path, "--out", str(out)])
        assert result.exit_code == 0
        for line in out.read_text().splitlines()[1:]:
            fields = line.split(",")
            assert fields[-1] == "ok"
            assert float(fields[3]) == pytest.approx(0.0, abs=1e-12)

    def test_error_rows_flagged_and_run_continues(self, runner, tmp_path):
        config = json.loads(json.dumps(BINOMIAL))
        config["theta_grid"] = {"lo": -15.0, "hi": 15.0, "n": 7}  # edges inadmissible
        path = write_config(tmp_path, config)
        out = tmp_path / "prem.csv"
        result = runner.invoke(main, ["premium", "--config", path, "--out", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().splitlines()[1:]
        statuses = [line.split(",")[-1] for line in lines]
        assert any(s.startswith("error") for s in statuses)
        assert any(s == "ok" for s in statuses)
        assert len(lines) == 7


class TestRiskshareCommand:
    def test_report_and_tilt_sweep(self, runner, tmp_path):
        path = write_config(tmp_path, RISKSHARE)
        result = runner.invoke(main, ["riskshare", "--config", path])
        assert result.exit_code == 0
        assert "exposure_1" in result.output
        assert "tilt_independence_spread 0" in result.output

    def test_mixed_utilities_rejected(self, runner, tmp_path):
        config = json.loads(json.dumps(RISKSHARE))
        config["agents"][0]["utility"] = {"kind": "log"}
        path = write_config(tmp_path, config)
        result = runner.invoke(main, ["riskshare", "--config", path])
        assert result.exit_code == 1
