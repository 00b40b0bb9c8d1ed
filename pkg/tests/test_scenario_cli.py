"""Scenario schema, CSV logs, and the command-line entry points.

CLI tests drive multitrack.cli.main in process and assert on exit codes
and produced files rather than stdout wording.
"""

import json
import os

import numpy as np
import pytest

from multitrack.cli import main
from multitrack.errors import ParseError, SchemaError, ValidationError
from multitrack.scenario import (SCENARIO_B_SEED, builtin_scenarios,
                                 dump_scenario, load_scenario, save_scenario)
from multitrack.trajectory import TrajectoryLog

DYNAMICS_COLUMNS = ("t", "j", "i", "x", "F", "F_bar", "C")
ADMISSION_COLUMNS = ("T", "j", "x", "F_star", "C_star", "net_utility")
SWARM_B_COLUMNS = (
    "t", "mode", "arr_T1", "arr_T2", "arr_T3",
    "y_T1_T1", "y_T2_T1", "y_T2_T2", "y_T3_T1", "y_T3_T3",
    "Dhat_T1", "Dhat_T2", "Dhat_T3", "chat_T1", "chat_T2", "chat_T3",
    "slot_cost", "cum_cost",
)


def _tiny_scenario(**overrides):
    raw = {
        "name": "tiny",
        "trackers": [
            {"id": "S", "capacity": 30.0, "weight": 10.0, "arrival_rate": 10.0},
        ],
        "dynamics": {"horizon": 160.0},
        "admission": {"steps": 50},
        "swarm": {"enabled": True, "seed": 1},
    }
    raw.update(overrides)
    return raw


# ---------------------------------------------------------------- scenarios

def test_builtin_scenarios_exist():
    builtins = builtin_scenarios()
    assert set(builtins) == {"scenario-A", "scenario-B"}
    a = load_scenario("scenario-A")
    assert a.topology.ids == ("T1", "T2", "T3")
    assert a.arrivals.tolist() == [10.0, 20.0, 20.0]
    b = load_scenario("scenario-B")
    assert b.topology.capacities.tolist() == [16.0, 1.5, 2.0]
    assert b.swarm_enabled
    assert b.swarm.seed == SCENARIO_B_SEED
    # one time budget per scenario: the swarm runs on the dynamics horizon
    assert b.swarm.horizon == b.dynamics.horizon == 2000.0


def test_unknown_source_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError, match="scenario-A"):
        load_scenario("scenario-C")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_scenario(str(bad))
    toplevel = tmp_path / "list.json"
    toplevel.write_text("[1, 2]")
    with pytest.raises(ParseError, match="object"):
        load_scenario(str(toplevel))


def test_builtins_round_trip_through_dump():
    for name, sc in builtin_scenarios().items():
        dumped = dump_scenario(sc)
        assert dump_scenario(load_scenario(dumped)) == dumped


def test_save_then_load_preserves_everything(tmp_path):
    sc = load_scenario(_tiny_scenario(capacity_schedule=[
        {"time": 40.0, "tracker": "S", "new_capacity": 12.0},
    ]))
    path = tmp_path / "tiny.json"
    save_scenario(sc, str(path))
    again = load_scenario(str(path))
    assert dump_scenario(again) == dump_scenario(sc)
    assert again.capacity_schedule == ((40.0, "S", 12.0),)


def test_validation_collects_every_problem():
    raw = {
        "name": "broken",
        "trackers": [
            {"id": "A", "capacity": -3.0},
            {"id": "A", "capacity": 10.0, "role": "chaotic"},
        ],
        "edges": [{"from": "A", "to": "nowhere", "price": -1.0}],
        "swarm": {"mode": "clairvoyant"},
    }
    with pytest.raises(ValidationError) as exc:
        load_scenario(raw)
    problems = exc.value.violations
    assert len(problems) >= 5
    text = "\n".join(problems)
    assert "trackers[0].capacity" in text
    assert "duplicate id" in text
    assert "trackers[1].role" in text
    assert "edges[0].price" in text
    assert "edges[0].to" in text
    assert "swarm.mode" in text


def test_cross_edges_must_target_steady_trackers():
    raw = {
        "trackers": [
            {"id": "A", "capacity": 10.0},
            {"id": "B", "capacity": 10.0, "role": "transient"},
        ],
        "edges": [{"from": "A", "to": "B", "price": 1.0}],
    }
    with pytest.raises(ValidationError, match="steady"):
        load_scenario(raw)


def test_schedule_times_must_increase():
    raw = _tiny_scenario(capacity_schedule=[
        {"time": 50.0, "tracker": "S", "new_capacity": 20.0},
        {"time": 50.0, "tracker": "S", "new_capacity": 25.0},
    ])
    with pytest.raises(ValidationError, match="strictly increasing"):
        load_scenario(raw)


# ------------------------------------------------------------- trajectories

def test_trajectory_round_trips_through_csv(tmp_path):
    log = TrajectoryLog(("t", "name", "v"), meta={"seed": 3})
    log.append((0.0, "a", 1.0 / 3.0))
    log.append((0.5, "b", np.float64(2.0) / 3.0))
    path = tmp_path / "log.csv"
    log.to_csv(str(path))
    back = TrajectoryLog.from_csv(str(path))
    assert back.columns == ("t", "name", "v")
    assert back.meta == {"seed": "3"}  # meta values come back as strings
    assert back.column("v").tolist() == [1.0 / 3.0, 2.0 / 3.0]  # bit exact
    assert back.column("name").tolist() == ["a", "b"]
    back.validate()


def test_trajectory_schema_errors(tmp_path):
    log = TrajectoryLog(("t", "v"))
    with pytest.raises(ValueError, match="fields"):
        log.append((1.0,))
    log.append((1.0, 2.0))
    with pytest.raises(SchemaError, match="no column"):
        log.column("w")
    log.append((0.5, 3.0))
    with pytest.raises(ValueError, match="monotone"):
        log.validate()
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError, match="no header"):
        TrajectoryLog.from_csv(str(empty))


# -------------------------------------------------------------------- CLI

def test_simulate_writes_dynamics_csv(tmp_path):
    out = tmp_path / "runs"
    rc = main(["simulate", "--scenario", "scenario-A", "--out", str(out)])
    assert rc == 0
    path = out / "scenario-A" / "dynamics.csv"
    assert path.exists()
    log = TrajectoryLog.from_csv(str(path))
    assert log.columns == DYNAMICS_COLUMNS
    assert log.meta["scenario"] == "scenario-A"
    assert len(log.rows) > 0
    log.validate()


def test_simulate_all_stages_on_a_scenario_file(tmp_path):
    src = tmp_path / "tiny.json"
    src.write_text(json.dumps(_tiny_scenario()))
    out = tmp_path / "runs"
    rc = main(["simulate", "--scenario", str(src), "--admission", "--swarm",
               "--out", str(out)])
    assert rc == 0
    base = out / "tiny"
    dyn = TrajectoryLog.from_csv(str(base / "dynamics.csv"))
    assert dyn.columns == DYNAMICS_COLUMNS
    adm = TrajectoryLog.from_csv(str(base / "admission.csv"))
    assert adm.columns == ADMISSION_COLUMNS
    swm = TrajectoryLog.from_csv(str(base / "swarm.csv"))
    assert swm.columns == ("t", "mode", "arr_S", "y_S_S", "Dhat_S",
                           "chat_S", "slot_cost", "cum_cost")
    assert len(swm.rows) == 20  # horizon 160 / slot 8


def test_simulate_swarm_golden_columns(tmp_path):
    out = tmp_path / "runs"
    rc = main(["simulate", "--scenario", "scenario-B", "--swarm",
               "--horizon", "160", "--out", str(out)])
    assert rc == 0
    log = TrajectoryLog.from_csv(str(out / "scenario-B" / "swarm.csv"))
    assert log.columns == SWARM_B_COLUMNS
    assert log.meta["seed"] == str(SCENARIO_B_SEED)


def test_simulate_override_flags_reach_the_swarm(tmp_path):
    out = tmp_path / "runs"
    rc = main(["simulate", "--scenario", "scenario-B", "--swarm",
               "--horizon", "160", "--mode", "price-blind", "--seed", "5",
               "--out", str(out)])
    assert rc == 0
    log = TrajectoryLog.from_csv(str(out / "scenario-B" / "swarm.csv"))
    assert log.meta["mode"] == "price-blind"
    assert log.meta["seed"] == "5"
    assert set(log.column("mode").tolist()) == {"price-blind"}


def test_out_env_var_overrides_flag(tmp_path, monkeypatch):
    env_dir = tmp_path / "from-env"
    monkeypatch.setenv("MULTITRACK_OUT", str(env_dir))
    rc = main(["simulate", "--scenario", "scenario-A",
               "--out", str(tmp_path / "ignored")])
    assert rc == 0
    assert (env_dir / "scenario-A" / "dynamics.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_multiple_scenarios_require_sweep(tmp_path, capsys):
    rc = main(["simulate", "--scenario", "scenario-A",
               "--scenario", "scenario-B", "--out", str(tmp_path)])
    assert rc == 2
    assert "--sweep" in capsys.readouterr().err


def test_sweep_isolates_each_scenario(tmp_path):
    out = tmp_path / "sweep"
    rc = main(["simulate", "--sweep", "--scenario", "scenario-A",
               "--scenario", "scenario-B", "--horizon", "100",
               "--out", str(out)])
    assert rc == 0
    for name in ("scenario-A", "scenario-B"):
        log = TrajectoryLog.from_csv(str(out / name / "dynamics.csv"))
        assert log.meta["scenario"] == name
        log.validate()


def test_simulate_unknown_scenario_is_usage_error(tmp_path, capsys):
    rc = main(["simulate", "--scenario", "scenario-C", "--out", str(tmp_path)])
    assert rc == 2
    assert "scenario-C" in capsys.readouterr().err


def test_simulate_invalid_scenario_reports_all_problems(tmp_path, capsys):
    src = tmp_path / "broken.json"
    src.write_text(json.dumps({
        "trackers": [{"id": "A", "capacity": -1.0},
                     {"id": "B", "capacity": 5.0, "role": "alien"}],
    }))
    rc = main(["simulate", "--scenario", str(src), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "capacity" in err and "role" in err


def test_simulate_infeasible_load_is_a_gate_error(tmp_path, capsys):
    src = tmp_path / "overload.json"
    src.write_text(json.dumps({
        "trackers": [{"id": "S", "capacity": 10.0, "arrival_rate": 20.0}],
    }))
    rc = main(["simulate", "--scenario", str(src), "--out", str(tmp_path)])
    assert rc == 1
    assert "Infeasible" in capsys.readouterr().err


def test_verify_scenario_a_passes(capsys):
    rc = main(["verify", "--scenario", "scenario-A"])
    assert rc == 0
    assert "verify: PASS" in capsys.readouterr().out


def test_verify_truncated_run_fails_the_gate(capsys):
    rc = main(["verify", "--scenario", "scenario-A", "--horizon", "0.05"])
    assert rc == 1
    assert "verify: FAIL" in capsys.readouterr().out


def test_verify_zero_split_needs_remaining_mass(tmp_path, capsys):
    src = tmp_path / "tiny.json"
    src.write_text(json.dumps(_tiny_scenario()))
    rc = main(["verify", "--scenario", str(src), "--zero-split", "S", "S"])
    assert rc == 2
    assert "no other mass" in capsys.readouterr().err


def test_plot_cost_chart(tmp_path):
    out = tmp_path / "runs"
    assert main(["simulate", "--scenario", "scenario-A",
                 "--out", str(out)]) == 0
    csv_path = out / "scenario-A" / "dynamics.csv"
    svg = tmp_path / "cost.svg"
    rc = main(["plot", "--csv", str(csv_path), "--kind", "cost",
               "--out", str(svg)])
    assert rc == 0
    assert svg.read_text().lstrip().startswith("<?xml")


def test_plot_missing_file_is_usage_error(tmp_path):
    rc = main(["plot", "--csv", str(tmp_path / "nope.csv"), "--kind", "cost"])
    assert rc == 2


def test_plot_wrong_schema_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    rc = main(["plot", "--csv", str(bad), "--kind", "cost",
               "--out", str(tmp_path / "x.svg")])
    assert rc == 2
    assert "missing column" in capsys.readouterr().err


def test_cli_usage_errors_from_argparse():
    assert main(["simulate"]) == 2          # --scenario is required
    assert main(["plot", "--csv", "x", "--kind", "nonsense"]) == 2
    assert main([]) == 2                    # a command is required
    assert main(["--version"]) == 0
