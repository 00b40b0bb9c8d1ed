"""Scenario files: JSON schema, validation, built-ins, round-tripping.

A scenario bundles a topology with per-module configuration:

    {
      "trackers": [{"id", "capacity", "role", "weight", "arrival_rate"}],
      "edges": [{"from", "to", "price"}],
      "dynamics": {"kind", "dt", "horizon", "eq_tolerance", "used_threshold"},
      "admission": {"enabled", "dt_medium", "steps", "x_min", "tolerance"},
      "swarm": {"enabled", "slot", "admission_interval", "ema_weight",
                 "seed", "mode", "eta", "prob_floor", "eps_z"},
      "capacity_schedule": [{"time", "tracker", "new_capacity"}]
    }

Every block except trackers is optional and defaulted. Validation
collects every violation before failing. The swarm horizon is the
dynamics horizon (one time budget per scenario). Two scenarios are
compiled in: scenario-A (closed-form regime) and scenario-B (stochastic
estimation regime); dumps of either round-trip through load_scenario.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .admission import AdmissionConfig
from .dynamics import DynamicsConfig
from .errors import ParseError, ValidationError
from .swarm import SwarmConfig
from .topology import Topology, TrackerSpec

__all__ = [
    "Scenario",
    "load_scenario",
    "dump_scenario",
    "save_scenario",
    "builtin_scenarios",
]

ROLES = ("steady", "transient")
KINDS = ("replicator", "bnn")
MODES = ("multitrack", "price-blind", "no-split")

# Seed pinned for the shipped stochastic comparison; see tests/test_acceptance.py.
SCENARIO_B_SEED = 2


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology = field(repr=False)
    arrivals: np.ndarray = field(repr=False)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    admission_enabled: bool = False
    admission: AdmissionConfig = field(default_factory=AdmissionConfig)
    swarm_enabled: bool = False
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    capacity_schedule: tuple = ()

    def override(self, **kwargs) -> "Scenario":
        """Copy with replaced fields (nested configs passed whole)."""
        return replace(self, **kwargs)


def builtin_scenarios():
    """The two compiled-in scenarios, rebuilt fresh on each call."""
    a = Scenario(
        name="scenario-A",
        topology=Topology(
            [TrackerSpec("T1", 30.0, "steady", 10.0),
             TrackerSpec("T2", 20.0, "transient", 10.0),
             TrackerSpec("T3", 20.0, "transient", 10.0)],
            [("T2", "T1", 2.0), ("T3", "T1", 1.0)],
        ),
        arrivals=np.array([10.0, 20.0, 20.0]),
        dynamics=DynamicsConfig(),
        admission=AdmissionConfig(),
    )
    b = Scenario(
        name="scenario-B",
        topology=Topology(
            [TrackerSpec("T1", 16.0, "steady", 10.0),
             TrackerSpec("T2", 1.5, "transient", 10.0),
             TrackerSpec("T3", 2.0, "transient", 10.0)],
            [("T2", "T1", 20.0), ("T3", "T1", 10.0)],
        ),
        arrivals=np.array([3.0, 5.0, 7.0]),
        dynamics=DynamicsConfig(horizon=2000.0),
        admission=AdmissionConfig(),
        swarm_enabled=True,
        swarm=SwarmConfig(slot=8.0, admission_interval=40.0, ema_weight=0.75,
                          seed=SCENARIO_B_SEED, horizon=2000.0,
                          mode="multitrack", eta=0.01),
    )
    return {"scenario-A": a, "scenario-B": b}


def load_scenario(source) -> Scenario:
    """Load a built-in scenario by name, a JSON file by path, or a dict."""
    if isinstance(source, dict):
        return _from_dict(source, source.get("name", "inline"))
    builtins = builtin_scenarios()
    if source in builtins:
        return builtins[source]
    if not os.path.exists(source):
        raise ParseError(
            f"{source!r} is neither a built-in scenario "
            f"({', '.join(sorted(builtins))}) nor an existing file"
        )
    try:
        with open(source) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be an object")
    name = raw.get("name", os.path.splitext(os.path.basename(source))[0])
    return _from_dict(raw, name)


def _from_dict(raw, name) -> Scenario:
    problems = []
    trackers = raw.get("trackers")
    if not isinstance(trackers, list) or not trackers:
        raise ValidationError(["trackers: need a nonempty list"])

    ids = []
    specs = []
    arrivals = []
    for k, tr in enumerate(trackers):
        where = f"trackers[{k}]"
        if not isinstance(tr, dict):
            problems.append(f"{where}: must be an object")
            continue
        tid = tr.get("id")
        if not isinstance(tid, str) or not tid:
            problems.append(f"{where}: id must be a nonempty string")
            tid = f"?{k}"
        if tid in ids:
            problems.append(f"{where}: duplicate id {tid!r}")
        ids.append(tid)
        cap = _num(tr.get("capacity"), f"{where}.capacity", problems, positive=True)
        role = tr.get("role", "steady")
        if role not in ROLES:
            problems.append(f"{where}.role: {role!r} not in {ROLES}")
            role = "steady"
        weight = _num(tr.get("weight", 1.0), f"{where}.weight", problems,
                      positive=True)
        arr = _num(tr.get("arrival_rate", 0.0), f"{where}.arrival_rate", problems,
                   nonnegative=True)
        specs.append((tid, cap, role, weight))
        arrivals.append(arr)

    edges = []
    for k, e in enumerate(raw.get("edges", [])):
        where = f"edges[{k}]"
        if not isinstance(e, dict):
            problems.append(f"{where}: must be an object")
            continue
        src, dst = e.get("from"), e.get("to")
        price = _num(e.get("price", 0.0), f"{where}.price", problems,
                     nonnegative=True)
        for end, label in ((src, "from"), (dst, "to")):
            if end not in ids:
                problems.append(f"{where}.{label}: unknown tracker {end!r}")
        if src in ids and dst in ids:
            if src != dst:
                target_role = next(s[2] for s in specs if s[0] == dst)
                if target_role != "steady":
                    problems.append(
                        f"{where}: target {dst!r} must have steady role"
                    )
            elif price not in (0, 0.0):
                problems.append(f"{where}: self-loop price must be 0")
            edges.append((src, dst, price))

    dyn = _section(raw, "dynamics", problems)
    kind = dyn.get("kind", "replicator")
    if kind not in KINDS:
        problems.append(f"dynamics.kind: {kind!r} not in {KINDS}")
        kind = "replicator"
    dt = _num(dyn.get("dt", 0.01), "dynamics.dt", problems, positive=True)
    horizon = _num(dyn.get("horizon", 1e4), "dynamics.horizon", problems,
                   positive=True)
    eq_tol = _num(dyn.get("eq_tolerance", 1e-6), "dynamics.eq_tolerance",
                  problems, positive=True)
    used = _num(dyn.get("used_threshold", 1e-9), "dynamics.used_threshold",
                problems, positive=True)

    adm = _section(raw, "admission", problems)
    adm_enabled = bool(adm.get("enabled", False))
    dt_medium = _num(adm.get("dt_medium", 0.1), "admission.dt_medium",
                     problems, positive=True)
    steps = adm.get("steps", 2000)
    if not isinstance(steps, int) or steps <= 0:
        problems.append("admission.steps: must be a positive integer")
        steps = 2000
    x_min = _num(adm.get("x_min", 1e-6), "admission.x_min", problems,
                 positive=True)
    adm_tol = _num(adm.get("tolerance", 1e-4), "admission.tolerance",
                   problems, positive=True)

    sw = _section(raw, "swarm", problems)
    sw_enabled = bool(sw.get("enabled", False))
    slot = _num(sw.get("slot", 8.0), "swarm.slot", problems, positive=True)
    interval = _num(sw.get("admission_interval", 40.0),
                    "swarm.admission_interval", problems, positive=True)
    ema = _num(sw.get("ema_weight", 0.75), "swarm.ema_weight", problems,
               positive=True)
    seed = sw.get("seed", 0)
    if not isinstance(seed, int):
        problems.append("swarm.seed: must be an integer")
        seed = 0
    mode = sw.get("mode", "multitrack")
    if mode not in MODES:
        problems.append(f"swarm.mode: {mode!r} not in {MODES}")
        mode = "multitrack"
    eta = _num(sw.get("eta", 0.02), "swarm.eta", problems, positive=True)
    floor = _num(sw.get("prob_floor", 1e-4), "swarm.prob_floor", problems,
                 nonnegative=True)
    eps_z = _num(sw.get("eps_z", 1e-6), "swarm.eps_z", problems,
                 nonnegative=True)

    schedule = []
    last_time = -np.inf
    for k, ev in enumerate(raw.get("capacity_schedule", [])):
        where = f"capacity_schedule[{k}]"
        if not isinstance(ev, dict):
            problems.append(f"{where}: must be an object")
            continue
        tm = _num(ev.get("time"), f"{where}.time", problems, nonnegative=True)
        tr = ev.get("tracker")
        if tr not in ids:
            problems.append(f"{where}.tracker: unknown tracker {tr!r}")
        new_cap = _num(ev.get("new_capacity"), f"{where}.new_capacity",
                       problems, positive=True)
        if tm is not None:
            if tm <= last_time:
                problems.append(f"{where}.time: times must be strictly increasing")
            last_time = tm
        schedule.append((tm, tr, new_cap))

    if problems:
        raise ValidationError(problems)

    topology = Topology([TrackerSpec(*s) for s in specs],
                        [e for e in edges if e[0] != e[1]])
    return Scenario(
        name=name,
        topology=topology,
        arrivals=np.array(arrivals, dtype=float),
        dynamics=DynamicsConfig(kind=kind, dt=dt, horizon=horizon,
                                eq_tolerance=eq_tol, used_threshold=used),
        admission_enabled=adm_enabled,
        admission=AdmissionConfig(dt_medium=dt_medium, steps=steps,
                                  inner=DynamicsConfig(kind=kind, dt=dt),
                                  x_min=x_min, tolerance=adm_tol),
        swarm_enabled=sw_enabled,
        swarm=SwarmConfig(slot=slot, admission_interval=interval,
                          ema_weight=ema, seed=seed, horizon=horizon,
                          mode=mode, admission_enabled=adm_enabled,
                          eta=eta, prob_floor=floor, eps_z=eps_z),
        capacity_schedule=tuple(schedule),
    )


def _section(raw, key, problems):
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        problems.append(f"{key}: must be an object")
        return {}
    return sec


def _num(value, where, problems, positive=False, nonnegative=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        problems.append(f"{where}: must be a number, got {value!r}")
        return 1.0 if positive else 0.0
    value = float(value)
    if positive and value <= 0:
        problems.append(f"{where}: must be > 0")
        return 1.0
    if nonnegative and value < 0:
        problems.append(f"{where}: must be >= 0")
        return 0.0
    return value


def dump_scenario(scenario: Scenario) -> dict:
    """Canonical dict form; load_scenario(dump_scenario(s)) reproduces s."""
    top = scenario.topology
    trackers = []
    for k, tr in enumerate(top.trackers):
        trackers.append({
            "id": tr.id,
            "capacity": tr.capacity,
            "role": tr.role,
            "weight": tr.weight,
            "arrival_rate": float(scenario.arrivals[k]),
        })
    edges = []
    for j in range(top.size):
        for i in range(top.size):
            if j != i and top.mask[j, i]:
                edges.append({"from": top.ids[j], "to": top.ids[i],
                              "price": float(top.prices[j, i])})
    return {
        "name": scenario.name,
        "trackers": trackers,
        "edges": edges,
        "dynamics": {
            "kind": scenario.dynamics.kind,
            "dt": scenario.dynamics.dt,
            "horizon": scenario.dynamics.horizon,
            "eq_tolerance": scenario.dynamics.eq_tolerance,
            "used_threshold": scenario.dynamics.used_threshold,
        },
        "admission": {
            "enabled": scenario.admission_enabled,
            "dt_medium": scenario.admission.dt_medium,
            "steps": scenario.admission.steps,
            "x_min": scenario.admission.x_min,
            "tolerance": scenario.admission.tolerance,
        },
        "swarm": {
            "enabled": scenario.swarm_enabled,
            "slot": scenario.swarm.slot,
            "admission_interval": scenario.swarm.admission_interval,
            "ema_weight": scenario.swarm.ema_weight,
            "seed": scenario.swarm.seed,
            "mode": scenario.swarm.mode,
            "eta": scenario.swarm.eta,
            "prob_floor": scenario.swarm.prob_floor,
            "eps_z": scenario.swarm.eps_z,
        },
        "capacity_schedule": [
            {"time": tm, "tracker": tr, "new_capacity": cap}
            for (tm, tr, cap) in scenario.capacity_schedule
        ],
    }


def save_scenario(scenario: Scenario, path: str):
    with open(path, "w") as fh:
        json.dump(dump_scenario(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
