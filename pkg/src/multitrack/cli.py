"""Command-line entry points: simulate, verify, plot.

Exit codes: 0 on success, 1 when a numeric gate fails (verify gap/KKT,
infeasible or collapsed runs), 2 on usage or IO problems (unknown
scenario, malformed file, bad CSV schema). The MULTITRACK_OUT
environment variable overrides --out.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .admission import admission_init, admission_step, run_admission
from .dynamics import run_to_equilibrium
from .errors import (CapacityViolation, Infeasible, InnerNotConverged,
                     MaxIterations, ParseError, SchemaError, StepCollapse,
                     ValidationError)
from .oracle import min_cost_split, verify_wardrop
from .payoffs import system_cost
from .plotting import KINDS as PLOT_KINDS
from .plotting import plot_csv
from .scenario import load_scenario
from .swarm import MODES, run_swarm
from .topology import SplitState, initial_split
from .trajectory import TrajectoryLog

USAGE_ERROR = 2
GATE_ERROR = 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="multitrack",
        description="Multi-timescale traffic management simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run dynamics/admission/swarm")
    sim.add_argument("--scenario", action="append", required=True,
                     help="built-in name or JSON path (repeatable with --sweep)")
    sim.add_argument("--dynamics", choices=["replicator", "bnn"])
    sim.add_argument("--dt", type=float)
    sim.add_argument("--horizon", type=float)
    sim.add_argument("--tol", type=float)
    sim.add_argument("--admission", action="store_true")
    sim.add_argument("--swarm", action="store_true")
    sim.add_argument("--mode", choices=list(MODES))
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", default="multitrack-out")
    sim.add_argument("--sweep", action="store_true",
                     help="run multiple --scenario values concurrently")

    ver = sub.add_parser("verify", help="dynamics equilibrium vs oracle")
    ver.add_argument("--scenario", required=True)
    ver.add_argument("--dynamics", choices=["replicator", "bnn"])
    ver.add_argument("--dt", type=float)
    ver.add_argument("--horizon", type=float)
    ver.add_argument("--tol", type=float)
    ver.add_argument("--zero-split", nargs=2, metavar=("FROM", "TO"),
                     help="zero this entry of the uniform initial split")

    plo = sub.add_parser("plot", help="render an SVG chart from CSV logs")
    plo.add_argument("--csv", action="append", required=True)
    plo.add_argument("--kind", choices=list(PLOT_KINDS), required=True)
    plo.add_argument("--out", default="chart.svg")
    return parser


def _apply_overrides(sc, args):
    dyn = sc.dynamics
    if args.dynamics:
        dyn = replace(dyn, kind=args.dynamics)
    if args.dt:
        dyn = replace(dyn, dt=args.dt)
    if args.horizon:
        dyn = replace(dyn, horizon=args.horizon)
    if getattr(args, "tol", None):
        dyn = replace(dyn, eq_tolerance=args.tol)
    sc = sc.override(dynamics=dyn)
    sw = sc.swarm
    if args.horizon:
        sw = replace(sw, horizon=args.horizon)
    if getattr(args, "mode", None):
        sw = replace(sw, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        sw = replace(sw, seed=args.seed)
    if getattr(args, "admission", False):
        sw = replace(sw, admission_enabled=True)
    return sc.override(swarm=sw)


def _run_dynamics(sc):
    """Equilibrate, honoring capacity schedule events between steps."""
    topology = sc.topology
    state = initial_split(topology, sc.arrivals)
    events = sorted(sc.capacity_schedule, key=lambda e: e[0])
    if not events:
        return run_to_equilibrium(topology, state, sc.dynamics), topology

    log = None
    offset = 0.0
    remaining = sc.dynamics.horizon
    report = None
    bounds = [e[0] for e in events] + [sc.dynamics.horizon]
    for k, bound in enumerate(bounds):
        span = bound - offset
        if span > 0 and remaining > 0:
            cfg = replace(sc.dynamics, horizon=min(span, remaining))
            report, seg = run_to_equilibrium(topology, state, cfg)
            state = report.state
            if log is None:
                log = seg
            else:
                for row in seg.rows:
                    log.append((row[0] + offset,) + row[1:])
            remaining -= report.elapsed
        offset = bound
        if k < len(events):
            _, tid, cap = events[k]
            topology = topology.with_capacity(tid, cap)
            state = SplitState.for_topology(topology, state.rates)
    return (report, log), topology


def _simulate_one(sc, args, outdir):
    os.makedirs(outdir, exist_ok=True)
    wrote = []

    (report, dlog), final_topology = _run_dynamics(sc)
    dlog.meta.update(scenario=sc.name, mode=sc.dynamics.kind,
                     seed="-", version=__version__)
    path = os.path.join(outdir, "dynamics.csv")
    dlog.to_csv(path)
    wrote.append(path)
    print(f"[{sc.name}] dynamics: converged={report.converged} "
          f"steps={report.steps} elapsed={report.elapsed:.4g} "
          f"max_spread={report.spreads.max():.3g} "
          f"max_violation={report.violations.max():.3g}")

    if args.admission:
        final, alog = _run_admission_scheduled(sc)
        alog.meta.update(scenario=sc.name, mode="admission", seed="-",
                         version=__version__)
        path = os.path.join(outdir, "admission.csv")
        alog.to_csv(path)
        wrote.append(path)
        print(f"[{sc.name}] admission: arrivals="
              f"{np.array2string(final.arrivals, precision=5)} "
              f"net_utility={final.net_utility:.6g}")

    if args.swarm:
        slog = run_swarm(sc.topology, sc.swarm, sc.arrivals,
                         admission=sc.admission,
                         schedule=sc.capacity_schedule)
        slog.meta["scenario"] = sc.name
        slog.meta["version"] = __version__
        path = os.path.join(outdir, "swarm.csv")
        slog.to_csv(path)
        wrote.append(path)
        cost = slog.column("slot_cost")
        tail = cost[len(cost) // 2:]
        print(f"[{sc.name}] swarm[{sc.swarm.mode}]: slots={len(cost)} "
              f"final-half mean cost={tail.mean():.4f}")
    return wrote


def _run_admission_scheduled(sc):
    """Admission run, applying capacity events between outer steps."""
    if not sc.capacity_schedule:
        return run_admission(sc.topology, sc.arrivals, sc.admission)
    topology = sc.topology
    cfg = sc.admission
    events = sorted(sc.capacity_schedule, key=lambda e: e[0])
    next_event = 0
    state = admission_init(topology, sc.arrivals, cfg)
    log = TrajectoryLog(("T", "j", "x", "F_star", "C_star", "net_utility"))
    w = topology.weights

    def emit(T, st):
        cost = float(np.sum(w * np.log(st.arrivals))) - st.net_utility
        for j in range(topology.size):
            log.append((T, topology.ids[j], st.arrivals[j], st.fstar[j],
                        cost, st.net_utility))

    T = 0.0
    emit(T, state)
    for _ in range(cfg.steps):
        while next_event < len(events) and events[next_event][0] <= T:
            _, tid, cap = events[next_event]
            topology = topology.with_capacity(tid, cap)
            state = admission_init(topology, state.arrivals, cfg)
            next_event += 1
        residual = np.max(np.abs(w - state.arrivals * state.fstar) / w)
        if residual < cfg.tolerance and next_event >= len(events):
            break
        state = admission_step(topology, state, cfg)
        T += cfg.dt_medium
        emit(T, state)
    return state, log


def cmd_simulate(args) -> int:
    outroot = os.environ.get("MULTITRACK_OUT") or args.out
    names = args.scenario
    if len(names) > 1 and not args.sweep:
        print("multitrack: multiple --scenario values need --sweep",
              file=sys.stderr)
        return USAGE_ERROR
    scenarios = [_apply_overrides(load_scenario(n), args) for n in names]
    if args.sweep and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(scenarios))) as pool:
            futures = [
                pool.submit(_simulate_one, sc, args,
                            os.path.join(outroot, sc.name))
                for sc in scenarios
            ]
            for fut in futures:
                fut.result()
    else:
        for sc in scenarios:
            _simulate_one(sc, args, os.path.join(outroot, sc.name))
    return 0


def cmd_verify(args) -> int:
    sc = _apply_overrides(load_scenario(args.scenario), args)
    topology = sc.topology
    state = initial_split(topology, sc.arrivals)
    if args.zero_split:
        src, dst = args.zero_split
        j, i = topology.index(src), topology.index(dst)
        rates = state.rates.copy()
        rest = rates[j].sum() - rates[j, i]
        if rest <= 0:
            print(f"multitrack: cannot zero {src}->{dst}: row has no other mass",
                  file=sys.stderr)
            return USAGE_ERROR
        rates[j] *= state.rates[j].sum() / rest
        rates[j, i] = 0.0
        state = SplitState.for_topology(topology, rates)

    report, _ = run_to_equilibrium(topology, state, sc.dynamics, record=False)
    cost_dyn = system_cost(topology, report.state)
    _, cost_opt = min_cost_split(topology, sc.arrivals)
    gap = abs(cost_dyn - cost_opt) / abs(cost_opt)
    kkt = verify_wardrop(topology, report.state, tolerance=1e-4)
    print(f"dynamics cost   : {cost_dyn:.10g} (converged={report.converged})")
    print(f"oracle cost     : {cost_opt:.10g}")
    print(f"relative gap    : {gap:.3e} (gate 1e-4)")
    print(f"KKT stationarity: {kkt.stationarity:.3e} pass={kkt.passed}")
    ok = gap < 1e-4 and kkt.passed
    print("verify: PASS" if ok else "verify: FAIL")
    return 0 if ok else GATE_ERROR


def cmd_plot(args) -> int:
    for p in args.csv:
        if not os.path.exists(p):
            print(f"multitrack: no such file {p}", file=sys.stderr)
            return USAGE_ERROR
    out = os.environ.get("MULTITRACK_OUT")
    out_path = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        out_path = os.path.join(out, os.path.basename(args.out))
    plot_csv(args.csv, args.kind, out_path)
    print(f"wrote {out_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_plot(args)
    except (ParseError, ValidationError, SchemaError) as exc:
        print(f"multitrack: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (Infeasible, StepCollapse, CapacityViolation, InnerNotConverged,
            MaxIterations) as exc:
        print(f"multitrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return GATE_ERROR
    except OSError as exc:
        print(f"multitrack: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
