import json
import os

import numpy as np
import pytest

from ristrack.cli import load_config, main, run_campaign
from ristrack.persist import format_value, trace_header
from ristrack.scenario import ConfigError, builtin_config, scenario_from_config
from ristrack.scheduler import Policy


def _tiny_overrides():
    return {
        "timescale.duration_s": 0.6,
        "timescale.steps_per_ris_update": 10,
        "optimizer.n_bcd": 4,
        "optimizer.n_samples": 80,
    }


def test_load_config_defaults_from_table():
    cfg = builtin_config("desk_default")
    sc = scenario_from_config(cfg)
    assert sc.rf.carrier_hz == pytest.approx(28e9)
    assert sc.rf.bandwidth_hz == pytest.approx(120e3)
    assert sc.rf.noise_figure_db == 7.0
    assert sc.alpha == 0.5
    assert sc.rf.rice_factor_ris_ue == 5.0


def test_missing_required_key_named():
    cfg = builtin_config("desk_default")
    del cfg["workspace"]["x_range_m"]
    with pytest.raises(ConfigError, match="x_range_m"):
        scenario_from_config(cfg)


def test_errors_collected_exhaustively():
    cfg = builtin_config("desk_default")
    cfg["rf"]["pilot_power_mw"] = -1.0
    cfg["ue"]["n_cols"] = 0
    with pytest.raises(ConfigError) as err:
        scenario_from_config(cfg)
    message = str(err.value)
    assert "rf" in message and "ue" in message


def test_override_reflected():
    sc = scenario_from_config(builtin_config("desk_default"),
                              {"timescale.dt_s": 0.01})
    assert sc.timescale.dt_s == 0.01
    assert sc.motion.dt == 0.01


def test_campaign_outputs_and_determinism(tmp_path):
    cfg = builtin_config("desk_default")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        n = run_campaign(cfg, [Policy.FOCUS, Policy.BETA_OPT_AO], runs=2,
                         master_seed=77, out_dir=str(out),
                         overrides=_tiny_overrides())
        assert n == 4
    for rel in ("focus/cdf.csv", "focus/rates.csv", "focus/peb.csv",
                "focus/stats.json", "focus/trace_run000.csv",
                "beta-opt-ao/cdf.csv", "manifest.json"):
        assert (out_a / rel).exists(), rel
    for rel in ("focus/cdf.csv", "focus/rates.csv", "focus/peb.csv",
                "focus/trace_run000.csv", "beta-opt-ao/cdf.csv"):
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel
    manifest = json.loads((out_a / "manifest.json").read_text())
    assert manifest["master_seed"] == 77
    assert manifest["config_sha256"]
    header = (out_a / "focus/trace_run000.csv").read_text().splitlines()[0]
    assert header == ",".join(trace_header(3))


def test_cli_run_and_map(tmp_path):
    out = tmp_path / "run"
    code = main(["run", "--config", "desk_default", "--seed", "5", "--runs", "1",
                 "--policies", "focus", "--out", str(out),
                 "--override", "timescale.duration_s=0.6",
                 "--override", "timescale.steps_per_ris_update=10",
                 "--override", "optimizer.n_bcd=3",
                 "--override", "optimizer.n_samples=60"])
    assert code == 0
    assert (out / "focus/stats.json").exists()

    out_map = tmp_path / "map"
    code = main(["map", "--config", "desk_default", "--seed", "5", "--grid", "8",
                 "--policies", "focus,opt-ao", "--out", str(out_map),
                 "--override", "optimizer.n_bcd=3",
                 "--override", "optimizer.n_samples=60"])
    assert code == 0
    body = (out_map / "powermap_focus.csv").read_text().splitlines()
    assert body[0] == "x_m,y_m,power_w"
    assert len(body) == 8 * 8 + 1


def test_cli_peb(tmp_path):
    out = tmp_path / "peb"
    code = main(["peb", "--config", "desk_default", "--seed", "3", "--runs", "1",
                 "--policy", "beta-opt-ao", "--out", str(out),
                 "--override", "timescale.duration_s=0.6",
                 "--override", "timescale.steps_per_ris_update=10",
                 "--override", "optimizer.n_bcd=3",
                 "--override", "optimizer.n_samples=60"])
    assert code == 0
    lines = (out / "peb.csv").read_text().splitlines()
    assert lines[0] == "step,rmse_m,peb_m"
    assert len(lines) == 21


def test_cli_sweep(tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", "desk_default", "--seed", "4", "--runs", "1",
                 "--policies", "focus", "--param", "rf.rice_factor_ris_ue",
                 "--values", "5,100", "--out", str(out),
                 "--override", "timescale.duration_s=0.3",
                 "--override", "timescale.steps_per_ris_update=5",
                 "--override", "optimizer.n_bcd=2",
                 "--override", "optimizer.n_samples=40"])
    assert code == 0
    rows = (out / "bars.csv").read_text().splitlines()
    assert rows[0] == "param,value,policy,mean_error_m,mean_rate_bps_hz"
    assert len(rows) == 3


def test_format_value_round_trip():
    assert format_value(0.1) == "0.1"
    assert float(format_value(np.float64(1) / 3)) == 1 / 3
    assert format_value(7) == "7"


def test_load_config_rejects_bad_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="line"):
        load_config(str(bad))


def test_fig3_preset_emits_trajectory_and_map(tmp_path):
    # single-RIS preset: short run plus a coarse power map
    out = tmp_path / "fig3"
    code = main(["run", "--config", "fig3_single_ris", "--seed", "2", "--runs", "1",
                 "--policies", "focus", "--out", str(out / "run"),
                 "--override", "timescale.duration_s=0.3",
                 "--override", "timescale.steps_per_ris_update=5",
                 "--override", "optimizer.n_bcd=2",
                 "--override", "optimizer.n_samples=40"])
    assert code == 0
    assert (out / "run/focus/trace_run000.csv").exists()
    code = main(["map", "--config", "fig3_single_ris", "--seed", "2", "--grid", "6",
                 "--policies", "focus", "--out", str(out / "map"),
                 "--override", "optimizer.n_bcd=2",
                 "--override", "optimizer.n_samples=40"])
    assert code == 0
    assert (out / "map/powermap_focus.csv").exists()
