import csv
import io
import json
from pathlib import Path

import pytest

from churnsim import cli
from churnsim.cli import compare_runs, main, run_experiment
from churnsim.config import PRESETS, ConfigError, ScenarioConfig, preset

TINY = dict(
    name="tiny",
    seed=3,
    n_nodes=6,
    out_degree_range=[2, 3],
    tx_rate_per_s=2.0,
    block_interval_s=3.0,
    blocks_to_run=36,
    max_block_txs=50,
    min_tx_age_ms=300.0,
    relay_mode="compact",
    churn={"1": {"period_s": 6.0, "up_fraction": 0.8, "phase_s": 0.0}},
    stable_node=2,
    study_node=1,
)

ARTIFACTS = ["outcomes.csv", "rates.csv", "bandwidth.csv", "summary.csv",
             "run.log", "run.detail.log", "config.json"]


def write_tiny(tmp_path, **overrides):
    cfg = {**TINY, **overrides}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# config validation

def test_config_rejects_zero_tx_rate(tmp_path):
    with pytest.raises(ConfigError, match="tx_rate_per_s"):
        ScenarioConfig.from_dict({**TINY, "tx_rate_per_s": 0})


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError, match="unknown"):
        ScenarioConfig.from_dict({**TINY, "tx_rats": 1})


def test_config_rejects_bad_relay_mode():
    with pytest.raises(ConfigError, match="relay_mode"):
        ScenarioConfig.from_dict({**TINY, "relay_mode": "carrier-pigeon"})


def test_config_rejects_small_window():
    with pytest.raises(ConfigError, match="blocks_to_run"):
        ScenarioConfig.from_dict({**TINY, "blocks_to_run": 35})


def test_config_rejects_bad_node_refs():
    with pytest.raises(ConfigError, match="study_node"):
        ScenarioConfig.from_dict({**TINY, "study_node": 99})
    with pytest.raises(ConfigError, match="churn"):
        ScenarioConfig.from_dict(
            {**TINY, "churn": {"7": {"period_s": 6, "up_fraction": 0.8}}})


def test_miner_must_stay_online(tmp_path):
    cfg = ScenarioConfig.from_dict(
        {**TINY, "churn": {"0": {"period_s": 6.0, "up_fraction": 0.8}}})
    with pytest.raises(ConfigError, match="miner"):
        run_experiment(cfg, tmp_path / "out")


def test_all_presets_validate():
    for name in ("fresh-join", "churn-nosync", "churn-sync", "graphene-sim"):
        assert preset(name).name == name
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


# ---------------------------------------------------------------------------
# run command

def test_invalid_config_exits_2_without_artifacts(tmp_path, capsys):
    path = write_tiny(tmp_path, tx_rate_per_s=0)
    out_dir = tmp_path / "out"
    rc = main(["run", "--config", str(path), "--out-dir", str(out_dir)])
    assert rc == 2
    assert "tx_rate_per_s" in capsys.readouterr().err
    assert not out_dir.exists()


def test_run_produces_artifacts(tmp_path, capsys):
    path = write_tiny(tmp_path)
    out_dir = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out-dir", str(out_dir)]) == 0
    for name in ARTIFACTS:
        assert (out_dir / name).exists(), name
    with open(out_dir / "summary.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["scenario", "node", "blocks", "successes", "avg_rate"]
    assert rows[-1][1] == "gap_pp"


def test_resolved_config_reproduces_run(tmp_path):
    cfg = ScenarioConfig.from_dict({**TINY, "sync_nodes": "all"})
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(cfg, a)
    resolved = ScenarioConfig.load(a / "config.json")
    assert resolved.trigger_limit is not None  # calibration was persisted
    run_experiment(resolved, b)
    for name in ("outcomes.csv", "rates.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_overrides_apply(tmp_path):
    path = write_tiny(tmp_path)
    out_dir = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out-dir", str(out_dir),
                 "--seed", "9", "--blocks", "40", "--sync", "on",
                 "--protocol", "legacy"]) == 0
    resolved = json.loads((out_dir / "config.json").read_text())
    assert resolved["seed"] == 9
    assert resolved["blocks_to_run"] == 40
    assert resolved["sync_nodes"] == "all"
    assert resolved["relay_mode"] == "legacy"


def test_presets_command_lists_builtins(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


# ---------------------------------------------------------------------------
# compare command

def _summary(tmp_path, name, scenario, stable_rate, study_rate):
    d = tmp_path / name
    d.mkdir()
    gap = abs(stable_rate - study_rate)
    with open(d / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "node", "blocks", "successes", "avg_rate"])
        w.writerow([scenario, 2, 740, 0, f"{stable_rate:.2f}"])
        w.writerow([scenario, 1, 750, 0, f"{study_rate:.2f}"])
        w.writerow([scenario, "gap_pp", "", "", f"{gap:.2f}"])
    return d


def test_compare_run_with_itself_all_zero(tmp_path):
    d = _summary(tmp_path, "a", "x", 90.0, 70.0)
    buf = io.StringIO()
    compare_runs(d, d, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    for row in rows[1:-1]:
        assert float(row[3]) == 0.0


def test_compare_reference_gap_change(tmp_path):
    a = _summary(tmp_path, "a", "nosync", 89.32, 72.53)
    b = _summary(tmp_path, "b", "sync", 84.73, 72.27)
    buf = io.StringIO()
    compare_runs(a, b, buf)
    rows = {r[0]: r for r in csv.reader(io.StringIO(buf.getvalue()))}
    assert float(rows["gap_pp"][3]) == pytest.approx(4.33, abs=0.005)
    assert float(rows["gap_relative_reduction_pct"][3]) == pytest.approx(25.79, abs=0.05)


def test_compare_schema_mismatch_exits_2(tmp_path, capsys):
    a = _summary(tmp_path, "a", "x", 90.0, 70.0)
    b = tmp_path / "b"
    b.mkdir()
    with open(b / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "node", "blocks", "successes", "avg_rate"])
        w.writerow(["y", 5, 10, 0, "50.00"])
        w.writerow(["y", "gap_pp", "", "", "0.00"])
    assert main(["compare", str(a), str(b)]) == 2
    assert "not comparable" in capsys.readouterr().err


def test_compare_missing_dir_exits_2(tmp_path, capsys):
    a = _summary(tmp_path, "a", "x", 90.0, 70.0)
    assert main(["compare", str(a), str(tmp_path / "nope")]) == 2


def test_compare_writes_file(tmp_path):
    a = _summary(tmp_path, "a", "x", 90.0, 70.0)
    out = tmp_path / "cmp.csv"
    assert main(["compare", str(a), str(a), "--out", str(out)]) == 0
    assert out.read_text().startswith("metric,")
