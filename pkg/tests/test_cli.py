import csv
import json
import shutil
from pathlib import Path

import pytest

from adstrain.cli import main
from adstrain.scenario import parse
from adstrain.errors import ScenarioError

SC = Path(__file__).resolve().parent.parent / "scenarios"


def run_cli(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--format", "json"])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


def test_all_shipped_scenarios_validate():
    for p in sorted(SC.glob("*.json")):
        parse(p.read_text(), str(p))


def test_parse_error_has_line_and_column():
    with pytest.raises(ScenarioError) as exc:
        parse('{\n  "version": "adstrain-scenario/1",\n  "seed": ,\n}', "x.json")
    assert "x.json:3:" in str(exc.value)


def test_schema_error_names_field():
    with pytest.raises(ScenarioError) as exc:
        parse('{"version": "adstrain-scenario/1", "seed": 1, "partition": {"nodes": 0}}')
    assert "partition/nodes" in str(exc.value)


def test_bad_scenario_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": "nope"}')
    code, _ = run_cli(tmp_path, "partition", "--scenario", str(bad))
    assert code == 1
    assert "version" in capsys.readouterr().err


def test_partition_two_table_example(tmp_path):
    code, out = run_cli(tmp_path, "partition", "--scenario", str(SC / "two_table_example.json"), "--oracle")
    assert code == 0
    r = report(out)
    assert r["plan"]["imbalance"] == pytest.approx(1.0, abs=1e-12)
    assert r["row_cyclic"]["imbalance"] == pytest.approx(2.0, abs=1e-12)
    assert r["oracle"]["equal"]
    assert set(json.loads((out / "plan.json").read_text())) >= {"shards", "node_count", "distribution"}


def test_partition_infeasible(tmp_path, capsys):
    code, out = run_cli(tmp_path, "partition", "--scenario", str(SC / "infeasible.json"))
    assert code == 2
    assert report(out)["status"] == "infeasible" and report(out)["deficits"]
    assert "over capacity" in capsys.readouterr().err


def test_partition_ladder_ordering(tmp_path):
    code, out = run_cli(tmp_path, "partition", "--scenario", str(SC / "ladder.json"))
    assert code == 0
    steps = [row["step_us"] for row in report(out)["ladder"]]
    assert steps[0] > steps[1] > steps[2] > steps[3]
    with open(out / "series" / "ladder.csv") as f:
        assert [r["mode"] for r in csv.DictReader(f)] == ["baseline", "pipelining", "hybrid", "fdp"]
    ps = report(out)["ps"]
    assert ps["coalesced"]["step_time_us"] < ps["uncoalesced"]["step_time_us"]


def test_simulate_fault_free(tmp_path, capsys):
    code, out = run_cli(tmp_path, "simulate", "--scenario", str(SC / "sim_fault_free.json"))
    assert code == 0
    assert "exactly-once: PASS" in capsys.readouterr().err
    assert report(out)["audit"]["passed"]
    for name in ("buffer_fullness", "reader_count", "advancing_rate", "chip_demand"):
        assert (out / "series" / f"{name}.csv").exists()


def test_simulate_permanent_hold(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "simulate", "--scenario", str(SC / "sim_permanent.json"))
    assert code == 0
    assert json.loads(capsys.readouterr().out)["final_state"] == "HOLD(permanent)"


def test_simulate_sweep(tmp_path, capsys):
    code, out = run_cli(tmp_path, "simulate", "--scenario", str(SC / "chaos_sweep.json"), "--seeds", "40")
    assert code == 0
    assert "exactly-once: 40/40 PASS" in capsys.readouterr().out
    with open(out / "series" / "sweep.csv") as f:
        assert len(list(csv.DictReader(f))) == 40


def test_simulate_fleet_ratios(tmp_path, capsys):
    code, out = run_cli(tmp_path, "simulate", "--scenario", str(SC / "fleet_chip_demand.json"))
    assert code == 0
    ratios = report(out)["chip_demand"]["ratios"]
    assert ratios == pytest.approx([1.0, 1.03, 2.49], abs=0.005)


def test_outputs_byte_identical(tmp_path):
    for cmd, sc in (("partition", "ladder.json"), ("simulate", "sim_mixed_faults.json"), ("cost", "cost_calibration.json")):
        _, a = run_cli(tmp_path, cmd, "--scenario", str(SC / sc), name=f"{cmd}_a")
        _, b = run_cli(tmp_path, cmd, "--scenario", str(SC / sc), name=f"{cmd}_b")
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_sig_replay_evict_cycle(tmp_path, capsys):
    scen = str(SC / "sig_k22.json")
    code, out = run_cli(tmp_path, "sig", "replay", "--scenario", scen)
    assert code == 0
    r = report(out)
    assert r["hit_rate"] == pytest.approx(r["recount_hit_rate"])
    assert set(r["evaluations_this_replay"].values()) == {1}
    code, _ = run_cli(tmp_path, "sig", "evict", "--scenario", scen, "--raw-field", "query_text")
    evicted = report(out)["count"]
    assert code == 0 and evicted > 0
    code, _ = run_cli(tmp_path, "sig", "replay", "--scenario", scen)
    again = report(out)["evaluations_this_replay"]
    assert len(again) == evicted and set(again.values()) == {1}


def test_sig_unknown_field_exit_1(tmp_path):
    code, _ = run_cli(tmp_path, "sig", "evict", "--scenario", str(SC / "sig_k22.json"), "--raw-field", "nope")
    assert code == 1


def test_sig_metrics_empty(tmp_path):
    code, out = run_cli(tmp_path, "sig", "metrics", "--scenario", str(SC / "sig_shared_pool.json"))
    assert code == 0
    r = report(out)
    assert r["hit_rate"] == 0 and r["entries"] == 0 and r["evaluations"] == 0


def test_cost_calibration(tmp_path):
    code, out = run_cli(tmp_path, "cost", "--scenario", str(SC / "cost_calibration.json"))
    assert code == 0
    assert abs(report(out)["geomean_reduction"] - 0.18) <= 0.01
    with open(out / "series" / "cost.csv") as f:
        assert len(list(csv.DictReader(f))) == 5


def test_cost_single_model(tmp_path):
    doc = json.loads((SC / "cost_calibration.json").read_text())
    doc["tco"]["models"] = doc["tco"]["models"][:1]
    p = tmp_path / "one.json"
    p.write_text(json.dumps(doc))
    code, out = run_cli(tmp_path, "cost", "--scenario", str(p))
    r = report(out)
    assert code == 0 and r["geomean_reduction"] == pytest.approx(r["models"][0]["reduction"], rel=1e-12)


def test_seed_override(tmp_path):
    _, a = run_cli(tmp_path, "simulate", "--scenario", str(SC / "sim_mixed_faults.json"), "--seed", "9", name="a")
    assert report(a)["seed"] == 9


def test_console_script_available():
    assert shutil.which("adstrain") is not None
