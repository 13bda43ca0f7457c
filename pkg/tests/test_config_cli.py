import json
import os

import numpy as np
import pytest

from panellp import ValidationError, from_wide
from panellp.cli import main
from panellp.config import load_lp_spec, load_sim_config


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def write_panel_csv(tmp_path, n_units=6, n_periods=40, seed=60, name="panel.csv"):
    rng = np.random.default_rng(seed)
    lines = ["unit,time,y,x"]
    for i in range(n_units):
        x = np.zeros(n_periods)
        y = np.zeros(n_periods)
        mu = rng.normal()
        for t in range(1, n_periods):
            x[t] = 0.6 * x[t - 1] + rng.normal()
            y[t] = mu - 0.5 * x[t] + rng.normal()
        for t in range(n_periods):
            lines.append(f"c{i},{t + 1},{y[t]:.6f},{x[t]:.6f}")
    return write(tmp_path, name, "\n".join(lines) + "\n")


SPEC_TOML = """
response = "y"
shock = "x"
horizons = [0, 4]
estimators = ["FE", "SPJ"]
"""

SIM_TOML = """
dgp = "prototype"
beta0 = -0.6
rho = 0.8
n_units = 12
n_periods = 40
horizons = [0, 2]
replications = 4
seed = 11
estimators = ["FE", "SPJ"]
"""


class TestConfigLoading:
    def test_full_spec_roundtrip(self, tmp_path):
        text = """
response = "gdp"
shock = "distress"
horizons = [0, 10]
response_transform = "cumulative-difference"
response_scale = 100.0
shock_lags = 4
response_lags = [1, 2, 3, 4]
extra_controls = [ { variable = "credit", lags = [0, 1] } ]
fixed_effects = "unit+time"
cluster = "unit+time"
estimators = ["FE", "SPJ"]
irf_scale = 7.0
"""
        spec = load_lp_spec(write(tmp_path, "s.toml", text))
        assert spec.shock == "distress"
        assert spec.extra_controls == (("credit", (0, 1)),)
        assert spec.irf_scale == 7.0
        assert spec.horizons == (0, 10)

    def test_missing_key_named(self, tmp_path):
        text = 'response = "y"\nhorizons = [0, 2]\n'
        with pytest.raises(ValidationError) as exc:
            load_lp_spec(write(tmp_path, "s.toml", text))
        assert "'shock'" in str(exc.value)

    def test_unknown_key_rejected(self, tmp_path):
        text = SPEC_TOML + 'grandfather = true\n'
        with pytest.raises(ValidationError) as exc:
            load_lp_spec(write(tmp_path, "s.toml", text))
        assert "grandfather" in str(exc.value)

    def test_scalar_horizon_becomes_range(self, tmp_path):
        text = 'response = "y"\nshock = "x"\nhorizons = 6\n'
        spec = load_lp_spec(write(tmp_path, "s.toml", text))
        assert spec.horizons == (0, 6)

    def test_sim_config_roundtrip(self, tmp_path):
        cfg = load_sim_config(write(tmp_path, "c.toml", SIM_TOML))
        assert cfg.dgp == "prototype"
        assert cfg.replications == 4
        assert cfg.seed == 11

    def test_sim_invalid_value_rejected(self, tmp_path):
        bad = SIM_TOML.replace("rho = 0.8", "rho = 1.2")
        with pytest.raises(ValidationError):
            load_sim_config(write(tmp_path, "c.toml", bad))


class TestCliEstimate:
    def test_writes_canonical_outputs(self, tmp_path, capsys):
        data = write_panel_csv(tmp_path)
        spec = write(tmp_path, "spec.toml", SPEC_TOML)
        out = tmp_path / "out"
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(out)])
        assert code == 0
        header = (out / "irf.csv").read_text().splitlines()[0]
        assert header == "horizon,estimator,coefficient,se,ci_lo,ci_hi,n_units,n_rows"
        assert (out / "comparison.csv").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "estimate"
        assert set(man["inputs"]) == {"data", "spec"}
        for role in ("data", "spec"):
            assert len(man["inputs"][role]["sha256"]) == 64

    def test_json_mirror(self, tmp_path):
        data = write_panel_csv(tmp_path)
        spec = write(tmp_path, "spec.toml", SPEC_TOML)
        out = tmp_path / "out"
        code = main(["estimate", "--data", data, "--spec", spec,
                     "--out", str(out), "--format", "json"])
        assert code == 0
        rows = json.loads((out / "irf.json").read_text())
        csv_lines = (out / "irf.csv").read_text().splitlines()[1:]
        assert len(rows) == len(csv_lines)
        assert rows[0]["estimator"] == "FE"

    def test_missing_spec_key_exit_1(self, tmp_path, capsys):
        data = write_panel_csv(tmp_path)
        spec = write(tmp_path, "spec.toml", 'response = "y"\nhorizons = [0, 2]\n')
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(tmp_path / "o")])
        assert code == 1
        assert "'shock'" in capsys.readouterr().err

    def test_unknown_variable_exit_1(self, tmp_path, capsys):
        data = write_panel_csv(tmp_path)
        spec = write(tmp_path, "spec.toml", SPEC_TOML.replace('"x"', '"nope"'))
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(tmp_path / "o")])
        assert code == 1
        assert "nope" in capsys.readouterr().err

    def test_partial_failure_keeps_exit_0_with_gap_rows(self, tmp_path, capsys):
        # horizons run past the data: long horizons become warned gap rows
        data = write_panel_csv(tmp_path, n_periods=14)
        spec = write(tmp_path, "spec.toml", SPEC_TOML.replace("[0, 4]", "[0, 12]"))
        out = tmp_path / "out"
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(out)])
        assert code == 0
        err = capsys.readouterr().err
        assert "gap row" in err
        lines = (out / "irf.csv").read_text().splitlines()
        assert any(line.endswith(",,,,,,") or ",,," in line for line in lines[1:])

    def test_total_failure_exit_2(self, tmp_path, capsys):
        data = write_panel_csv(tmp_path, n_periods=14)
        # every horizon needs more rows than exist once lags are included
        text = SPEC_TOML.replace("[0, 4]", "[12, 12]")
        spec = write(tmp_path, "spec.toml", text)
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(tmp_path / "o")])
        assert code == 2

    def test_writes_only_inside_out(self, tmp_path, monkeypatch):
        data = write_panel_csv(tmp_path)
        spec = write(tmp_path, "spec.toml", SPEC_TOML)
        out = tmp_path / "sandbox"
        cwd = tmp_path / "cwd"
        cwd.mkdir()
        monkeypatch.chdir(cwd)
        code = main(["estimate", "--data", data, "--spec", spec, "--out", str(out)])
        assert code == 0
        assert list(cwd.iterdir()) == []


class TestCliSimulate:
    def test_writes_report_and_manifest(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out = tmp_path / "out"
        code = main(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0].startswith("dgp,rho,N,T,h,estimator,truth,mean,bias,rmse,coverage")
        assert len(lines) == 1 + 3 * 2
        assert (out / "report.json").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["seed"] == 11
        assert man["config"]["replications"] == 4

    def test_thread_flag_is_value_neutral(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["simulate", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(out2), "--threads", "2"]) == 0
        for name in ("report.csv", "report.json", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_keep_raw_writes_estimates(self, tmp_path):
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out = tmp_path / "out"
        code = main(["simulate", "--config", cfg, "--out", str(out), "--keep-raw"])
        assert code == 0
        raw = (out / "raw_estimates.csv").read_text().splitlines()
        assert raw[0] == "replication,h,estimator,estimate,covered"
        assert len(raw) == 1 + 4 * 3 * 2

    def test_zero_replications_exit_1(self, tmp_path, capsys):
        bad = SIM_TOML.replace("replications = 4", "replications = 0")
        cfg = write(tmp_path, "sim.toml", bad)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 1
        assert "replications" in capsys.readouterr().err

    def test_unstable_var1_exit_1_with_radius(self, tmp_path, capsys):
        text = SIM_TOML.replace('dgp = "prototype"', 'dgp = "var1"').replace(
            "rho = 0.8", "rho = 0.9")
        cfg = write(tmp_path, "sim.toml", text)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 1
        assert "spectral radius" in capsys.readouterr().err

    def test_env_var_default_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PANELLP_THREADS", "2")
        cfg = write(tmp_path, "sim.toml", SIM_TOML)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "report.csv").exists()
