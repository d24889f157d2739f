import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from xhaul.cli import main, rows_to_csv, run_config
from xhaul.config import ScenarioError, expand_range, parse_scenario, replicate_seed
from xhaul.orchestrator import flows, proportional_grants

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


def test_minimal_smgw_config_gets_defaults():
    cfg = parse_scenario("schema_version: 1\nexperiment: smgw\nseed: 4\n")
    assert cfg.params["mode"] == "excess"
    assert cfg.params["heavy_load"] == 140e6
    assert cfg.replications == 1 and cfg.points() == [cfg.params]


def test_missing_seed_named():
    with pytest.raises(ScenarioError) as e:
        parse_scenario("schema_version: 1\nexperiment: smgw\n")
    assert any("seed" in m for m in e.value.errors)


def test_all_errors_reported_together():
    text = """
schema_version: 1
experiment: smgw
seed: 1
colour: blue
params:
  mode: fastest
  cycle: -1
  rate_ratio: 0.5
sweep:
  - name: nonexistent
    values: [1, 2]
"""
    with pytest.raises(ScenarioError) as e:
        parse_scenario(text)
    msgs = " | ".join(e.value.errors)
    for word in ("colour", "mode", "cycle", "nonexistent", "rate_ratio"):
        assert word in msgs
    assert len(e.value.errors) >= 5


def test_schema_version_checked():
    with pytest.raises(ScenarioError):
        parse_scenario("schema_version: 2\nexperiment: smgw\nseed: 1\n")


def test_beta_grid_has_19_points():
    assert len(expand_range(0.1, 1.0, 0.05)) == 19
    cfg = parse_scenario((SCEN / "interleave_beta.yaml").read_text())
    assert [p["beta"] for p in cfg.points()] == pytest.approx(list(np.arange(19) * 0.05 + 0.1))


def test_shipped_scenarios_validate(capsys):
    for path in sorted(SCEN.glob("*.yaml")):
        assert main(["check", str(path)]) == 0
    assert capsys.readouterr().out.count("ok:") == len(list(SCEN.glob("*.yaml")))


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nexperiment: nope\n")
    assert main(["check", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_replicate_seeds_distinct_and_stable():
    seeds = [replicate_seed(7, i) for i in range(5)]
    assert len(set(seeds)) == 5
    assert seeds == [replicate_seed(7, i) for i in range(5)]


SMALL_SMGW = """
schema_version: 1
experiment: smgw
seed: 11
horizon: 0.5
params:
  num_light: 2
  num_heavy: 2
  light_load: 20.0e6
  heavy_load: 60.0e6
  uplink_rate: 100.0e6
"""


def test_replications_rows_and_seeds(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(SMALL_SMGW)
    assert main(["run", str(cfg), "--replications", "5", "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "results.csv")
    assert len(rows) == 5
    assert len({r["seed"] for r in rows}) == 5
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["replicate_seeds"] == [int(r["seed"]) for r in rows]
    assert man["seed"] == 11 and man["version"] and man["config_hash"]


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(SMALL_SMGW)
    assert main(["run", str(cfg), "--replications", "2", "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    for name in ("results.csv", "results.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_opti1_csv_matches_closed_form(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", str(SCEN / "opti1.yaml"), "--out", str(out)]) == 0
    rows = read_csv(out / "results.csv")
    prop = [r for r in rows if r["mode"] == "proportional"]
    assert len(prop) == 13 * 4
    for r in prop:
        R = float(r["R_mbps"]) * 1e6
        Rm = np.array([[2 * R, 50e6], [R, 50e6]])
        X = flows(Rm, proportional_grants(Rm, [100e6, 100e6]))
        s, o = int(r["gateway"]) - 1, int(r["operator"]) - 1
        assert float(r["flow_mbps"]) == pytest.approx(X[s, o] / 1e6, abs=1e-9)


def test_sweep_without_axes_rejected(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(SMALL_SMGW)
    assert main(["sweep", str(cfg)]) == 2


def test_worker_pool_keeps_row_order():
    cfg = parse_scenario((SCEN / "interleave_beta.yaml").read_text())
    cfg.horizon = 0.005
    serial = run_config(cfg, workers=1)
    pooled = run_config(cfg, workers=3)
    assert rows_to_csv("interleave", serial) == rows_to_csv("interleave", pooled)


def test_interleave_rows_flag_overlong_jobs(tmp_path, capsys):
    text = (SCEN / "interleave_beta.yaml").read_text().replace("T_D: 80.0e-6", "T_D: 40.0e-6")
    cfg = parse_scenario(text)
    cfg.horizon = 0.005
    rows = run_config(cfg)
    assert len(rows) == 19
    long = [r for r in rows if r["tau_D_us"] >= r["T_D_us"]]
    assert long and all(r["stable"] is False for r in long)


def test_budget_prints_table(capsys):
    assert main(["budget"]) == 0
    out = capsys.readouterr().out
    assert "80.00 Gb/s" in out and "1.852" in out
    for ch in ("RS", "PBCH", "SCH", "SIB", "DOCSIS"):
        assert ch in out
