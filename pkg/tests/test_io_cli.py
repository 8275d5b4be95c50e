import json
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import make_scenario
from secure_dfrc import BeampatternSpec, SecurityThresholds, SystemConfig, io
from secure_dfrc.cli import main
from secure_dfrc.errors import ConfigError
from secure_dfrc.scenario import steering_vector

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


# ---------------------------------------------------------------- round trips

def test_complex_encoding_round_trip():
    z = np.array([[1 + 2j, -0.5j], [3.25, 1e-300 - 7j]])
    back = io.decode_complex(json.loads(json.dumps(io.encode_complex(z))))
    assert np.array_equal(back, z)
    assert io.decode_complex([0.5, -1.0]) == 0.5 - 1j
    assert io.decode_complex(2) == 2 + 0j
    with pytest.raises(ConfigError):
        io.decode_complex([1.0, 2.0, 3.0])


def test_scenario_round_trip_exact():
    cfg = SystemConfig(num_antennas=6, total_power=2.0, grid_resolution=0.5)
    sc = make_scenario(cfg, 3, 8, angles=(-12.5, 40.0), path_loss=0.3 - 0.1j, angle_uncertainty_deg=2.0)
    d = json.loads(json.dumps(io.scenario_to_dict(sc)))
    back = io.scenario_from_dict(d)
    assert np.array_equal(back.channel, sc.channel)
    assert back.targets == sc.targets
    assert back.config.total_power == 2.0 and back.config.grid_resolution == 0.5


def test_spec_and_threshold_round_trip():
    spec = BeampatternSpec((-30.0, 10.0), 12.0, 0.5)
    assert io.spec_from_dict(io.spec_to_dict(spec)) == spec
    th = SecurityThresholds(10.0, math.inf)
    d = io.thresholds_to_dict(th)
    assert d["gamma_e"] is None
    assert io.thresholds_from_dict(json.loads(json.dumps(d))) == th


def test_db_keys():
    th = io.thresholds_from_dict({"gamma_c_db": 10.0, "gamma_e_db": 0.0})
    assert th.gamma_c == pytest.approx(10.0) and th.gamma_e == pytest.approx(1.0)
    cfg = io.config_from_dict({"total_power_db": 10.0, "noise_var_lu_db": -20.0})
    assert cfg.total_power == pytest.approx(10.0) and cfg.noise_var_lu == pytest.approx(0.01)
    with pytest.raises(ConfigError, match="not both"):
        io.thresholds_from_dict({"gamma_c": 10.0, "gamma_c_db": 10.0})


@pytest.mark.parametrize("d, where", [
    ({"config": {"num_antenas": 4}, "channel_seed": 1}, "scenario.config"),
    ({"channel_seed": 1, "targets": [{"angle_deg": 0, "pathloss": 1}]}, "scenario.targets[0]"),
    ({"channel_seed": 1, "users": 2}, "scenario"),
])
def test_unknown_keys_rejected_with_path(d, where):
    with pytest.raises(ConfigError) as info:
        io.scenario_from_dict(d)
    assert str(info.value).startswith(where + ":")
    assert "unknown key" in str(info.value)


def test_scenario_channel_sources():
    with pytest.raises(ConfigError):
        io.scenario_from_dict({})
    with pytest.raises(ConfigError):
        io.scenario_from_dict({"channel": [[[1, 0]]], "channel_seed": 1})
    with pytest.raises(ConfigError):
        io.scenario_from_dict({"channel_seed": 1, "targets": [{"angle_deg": 120}]})


def test_json_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "scenario": {\n    "channel_seed": 1,\n  }\n}\n')
    with pytest.raises(ConfigError) as info:
        io.load_json(p)
    assert f"{p}:4:" in str(info.value)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        io.load_json(p)


def test_beampattern_csv_round_trip(tmp_path):
    cfg = SystemConfig(grid_resolution=1.0)
    R = np.eye(10) / 10
    io.write_beampattern_csv(tmp_path / "bp.csv", R, cfg)
    assert (tmp_path / "bp.csv").read_text().splitlines()[0] == io.BEAMPATTERN_CSV
    t = io.read_beampattern_csv(tmp_path / "bp.csv")
    assert np.array_equal(t["angle_deg"], cfg.angle_grid_deg)
    assert np.allclose(t["power_linear"], 0.1)
    assert np.allclose(t["power_db"], -10.0)


def test_csv_version_checked(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("# secure-dfrc beampattern v0\nangle_deg,power_linear,power_db\n0,1,0\n")
    with pytest.raises(ConfigError, match="expected header"):
        io.read_beampattern_csv(p)
    with pytest.raises(ConfigError):
        io.read_sweep_csv(p)


# ---------------------------------------------------------------- command line

def write_run(path, run):
    path.write_text(json.dumps(run, indent=2))
    return path


@pytest.fixture
def fast_run(tmp_path):
    run = json.loads((CONFIGS / "single_target.json").read_text())
    run["scenario"]["config"]["grid_resolution"] = 1.0
    run["validate"]["num_symbols"] = 4096
    return write_run(tmp_path / "run.json", run)


@pytest.mark.parametrize("cmd", ["design-sdr", "design-zf", "design-robust"])
def test_design_commands_write_outputs(tmp_path, fast_run, cmd, capsys):
    out = tmp_path / cmd
    assert main([cmd, str(fast_run), "-o", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"beampattern.csv", "result.json", "metrics.json"}
    res = json.loads((out / "result.json").read_text())
    assert res["designer"] == cmd.split("-")[1]
    m = json.loads((out / "metrics.json").read_text())
    assert min(m["user_sinr_db"]) >= 10 - 1e-4
    assert len(io.read_beampattern_csv(out / "beampattern.csv")["angle_deg"]) == 181
    assert "objective" in capsys.readouterr().out


def test_outputs_byte_identical(tmp_path, fast_run):
    for name in ("a", "b"):
        assert main(["design-sdr", str(fast_run), "-o", str(tmp_path / name)]) == 0
    for f in ("beampattern.csv", "result.json", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_overrides_and_radar_only(tmp_path, fast_run):
    out = tmp_path / "o"
    assert main(["design-sdr", str(fast_run), "-o", str(out), "--gamma-c-db", "14", "--beam-width", "12"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["thresholds"]["gamma_c"] == pytest.approx(10 ** 1.4)
    assert res["beampattern"]["beam_width_deg"] == 12.0
    assert main(["radar-only", str(fast_run), "-o", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r" / "result.json").read_text())["designer"] == "radar-only"


def test_env_output_dir(tmp_path, fast_run, monkeypatch):
    monkeypatch.setenv("SECURE_DFRC_OUT", str(tmp_path / "env"))
    assert main(["design-zf", str(fast_run)]) == 0
    assert (tmp_path / "env" / "result.json").exists()


def test_validate_command(tmp_path, fast_run):
    out = tmp_path / "v"
    assert main(["validate", str(fast_run), "-o", str(out), "--symbols", "65536"]) == 0
    rep = json.loads((out / "validation.json").read_text())
    assert rep["num_symbols"] == 65536
    assert max(rep["sinr_error_db"]) <= 0.5


def test_infeasible_exit_code_and_record(tmp_path):
    cfg = SystemConfig(grid_resolution=1.0)
    a = steering_vector(cfg, 0.0)
    H = np.vstack([a.conj(), make_scenario(cfg, 1, 1).channel])
    run = {"scenario": {"config": {"grid_resolution": 1.0}, "channel": io.encode_complex(H),
                        "targets": [{"angle_deg": 0.0}]},
           "thresholds": {"gamma_c_db": 10.0, "gamma_e_db": 0.0}}
    p = write_run(tmp_path / "aligned.json", run)
    out = tmp_path / "inf"
    assert main(["design-sdr", str(p), "-o", str(out)]) == 2
    rec = json.loads((out / "infeasible.json").read_text())
    assert rec == {"status": "infeasible", "command": "design-sdr", "designer": "sdr",
                   "solver_status": "Infeasible", "message": rec["message"]}


def test_config_errors_exit_1(tmp_path, capsys):
    p = write_run(tmp_path / "bad.json", {"scenario": {"channel_seed": 1}, "extra": 1})
    assert main(["design-sdr", str(p), "-o", str(tmp_path)]) == 1
    assert "unknown key(s) extra" in capsys.readouterr().err
    assert main(["design-sdr", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        main(["design-mmse", "x.json"])
    assert info.value.code == 1


def test_sweep_single_row(tmp_path):
    run = {"template": {"config": {"grid_resolution": 2.0}, "num_users": 2},
           "sweep": {"axis": "gamma_c_db", "values": [10.0], "designers": ["sdr", "zf"]}}
    p = write_run(tmp_path / "sweep.json", run)
    out = tmp_path / "s"
    assert main(["sweep", str(p), "-o", str(out), "--trials", "1", "--seed", "3"]) == 0
    t = io.read_sweep_csv(out / "sweep.csv")
    assert t["gamma_c_db"].tolist() == [10.0]
    assert set(t) >= {"sdr_mse_mean", "sdr_mse_se", "zf_secrecy_rate_mean", "sdr_trials_used"}
    s = json.loads((out / "sweep.json").read_text())
    assert s["trials"] == 1 and s["seed"] == 3
    first = (out / "sweep.csv").read_bytes()
    assert main(["sweep", str(p), "-o", str(out), "--trials", "1", "--seed", "3"]) == 0
    assert (out / "sweep.csv").read_bytes() == first


def test_sweep_config_errors(tmp_path):
    p = write_run(tmp_path / "s.json", {"sweep": {"axis": "snr", "values": [1]}})
    assert main(["sweep", str(p), "-o", str(tmp_path)]) == 1
    p = write_run(tmp_path / "s.json", {"sweep": {"axis": "gamma_c_db"}})
    assert main(["sweep", str(p), "-o", str(tmp_path)]) == 1


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.json"):
        run = io.load_json(path)
        if "scenario" in run:
            io.scenario_from_dict(run["scenario"])
