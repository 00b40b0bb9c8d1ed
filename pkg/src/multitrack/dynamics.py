"""Small-time-scale splitting dynamics: replicator and BNN integration.

Both dynamics move each population's forwarding rates down the payoff
landscape with explicit Euler steps. The replicator update is
multiplicative (mass on an option grows when its payoff beats the
population average), so extinct options stay extinct. The BNN update
adds mass to any option whose payoff is below average, whether or not
it currently carries traffic, so it can resurrect options the
replicator has lost; its rest points therefore coincide with Wardrop
states. Orientation note: payoffs are costs, so the excess used here is
max(average - payoff, 0) and mass flows toward cheaper options (the
total system cost is the Lyapunov function that descends).

The hot loops live in multitrack._kernels (native or reference backend,
bit-identical); this module wraps them in the domain types, detects
rest points, and records trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .payoffs import payoff_view, system_cost
from .topology import GUARD_MARGIN, SplitState, Topology, initial_split
from .trajectory import TrajectoryLog

__all__ = [
    "DynamicsConfig",
    "EquilibriumReport",
    "replicator_step",
    "bnn_step",
    "run_to_equilibrium",
    "initial_split",
]

KINDS = ("replicator", "bnn")
_KIND_CODE = {"replicator": 0, "bnn": 1}

DYNAMICS_COLUMNS = ("t", "j", "i", "x", "F", "F_bar", "C")


@dataclass(frozen=True)
class DynamicsConfig:
    """Integration parameters for the splitting dynamics.

    eq_tolerance is the relative payoff spread below which a population
    counts as equalized; used_threshold is the fraction of x_j under
    which an option counts as unused for the rest-point test.
    """

    kind: str = "replicator"
    dt: float = 0.01
    horizon: float = 1e4
    eq_tolerance: float = 1e-6
    used_threshold: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if not 0 < self.eq_tolerance < 1:
            raise ValueError("eq_tolerance must be in (0, 1)")
        if not 0 < self.used_threshold < 1e-3:
            raise ValueError("used_threshold must be in (0, 1e-3)")


@dataclass(frozen=True)
class EquilibriumReport:
    """Rest-point certificate for a finished run.

    spreads[j] is the relative payoff spread over used options of
    population j; violations[j] is the worst unused-option advantage
    (average payoff minus the unused option's payoff, clipped at zero),
    which is positive when the state is a replicator rest point that is
    not Wardrop.
    """

    converged: bool
    spreads: np.ndarray = field(repr=False)
    violations: np.ndarray = field(repr=False)
    state: SplitState = field(repr=False)
    steps: int = 0
    elapsed: float = 0.0


def _kernel_args(topology: Topology):
    return (topology.capacities, topology.prices,
            topology.mask.astype(np.uint8), topology.cost_weight)


def replicator_step(topology: Topology, state: SplitState, dt: float) -> SplitState:
    """One accepted replicator Euler step (dt halves until feasible)."""
    caps, prices, mask, th = _kernel_args(topology)
    rates, _ = _kernels.impl.replicator_step(caps, prices, mask, state.rates,
                                             th, dt, GUARD_MARGIN)
    return SplitState(rates)


def bnn_step(topology: Topology, state: SplitState, dt: float) -> SplitState:
    """One accepted BNN Euler step (dt halves until feasible)."""
    caps, prices, mask, th = _kernel_args(topology)
    rates, _ = _kernels.impl.bnn_step(caps, prices, mask, state.rates,
                                      th, dt, GUARD_MARGIN)
    return SplitState(rates)


def _rest_metrics(topology: Topology, state: SplitState, delta: float):
    """Per-population spread and unused-option violation at a state."""
    view = payoff_view(topology, state)
    q = topology.size
    x = state.row_sums
    spreads = np.zeros(q)
    violations = np.zeros(q)
    for j in range(q):
        if x[j] <= 0:
            continue
        opts = topology.options(j)
        used = [i for i in opts if state.rates[j, i] > delta * x[j]]
        unused = [i for i in opts if state.rates[j, i] <= delta * x[j]]
        fj = view.payoffs[j]
        if used:
            spreads[j] = (max(fj[i] for i in used) - min(fj[i] for i in used)) \
                / view.averages[j]
        if unused:
            violations[j] = max(
                max(view.averages[j] - fj[i] for i in unused), 0.0
            )
    return spreads, violations


def run_to_equilibrium(topology: Topology, state: SplitState,
                       config: DynamicsConfig, record: bool = True):
    """Iterate the configured dynamics to a rest point.

    Returns (EquilibriumReport, TrajectoryLog). With record=False the log
    is None and the fused kernel loop runs instead of the logging loop;
    both paths produce bit-identical final states. Not converging within
    the horizon is a result (converged=False), not an exception.
    """
    kind = _KIND_CODE[config.kind]
    caps, prices, mask, th = _kernel_args(topology)

    if not record:
        rates, steps, conv, elapsed, _ = _kernels.impl.equilibrate(
            kind, caps, prices, mask, state.rates, th, config.dt,
            GUARD_MARGIN, config.eq_tolerance, config.used_threshold,
            config.horizon)
        final = SplitState(rates)
        spreads, violations = _rest_metrics(topology, final,
                                            config.used_threshold)
        return EquilibriumReport(bool(conv), spreads, violations, final,
                                 int(steps), float(elapsed)), None

    log = TrajectoryLog(DYNAMICS_COLUMNS)
    budget = int(math.ceil(config.horizon / config.dt)) + 1
    X = state
    t = 0.0
    steps = 0
    conv = False
    while True:
        view = payoff_view(topology, X)
        cost = system_cost(topology, X)
        for j in range(topology.size):
            for i in topology.options(j):
                log.append((t, topology.ids[j], topology.ids[i],
                            X.rates[j, i], view.payoffs[j, i],
                            view.averages[j], cost))
        if _kernels.impl.converged_now(kind, caps, prices, mask, X.rates, th,
                                       config.eq_tolerance,
                                       config.used_threshold):
            conv = True
            break
        if t >= config.horizon - 1e-12 or steps >= budget:
            break
        if config.kind == "replicator":
            rates, used = _kernels.impl.replicator_step(
                caps, prices, mask, X.rates, th, config.dt, GUARD_MARGIN)
        else:
            rates, used = _kernels.impl.bnn_step(
                caps, prices, mask, X.rates, th, config.dt, GUARD_MARGIN)
        X = SplitState(rates)
        t += used
        steps += 1
    spreads, violations = _rest_metrics(topology, X, config.used_threshold)
    report = EquilibriumReport(conv, spreads, violations, X, steps, t)
    return report, log
