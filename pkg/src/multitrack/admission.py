"""Medium-time-scale admission control.

Each tracker shapes its admitted arrival rate by the controller

    dx_j/dt = w_j - x_j * F_j*

where F_j* is the common equilibrium payoff of population j's used
options. Under time-scale separation the splitting dynamics are re-run
to equilibrium after every controller step, so F_j* always refers to an
inner rest point; the controller then climbs the net utility
V(x) = sum w_j log x_j - C*(x), whose gradient in x_j is exactly
w_j/x_j - F_j* (envelope identity). Its fixed points w_j = x_j F_j* are
the KKT points of the relaxed admission problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .dynamics import DynamicsConfig, run_to_equilibrium
from .errors import InnerNotConverged
from .payoffs import payoff_view, system_cost
from .topology import SplitState, Topology, initial_split
from .trajectory import TrajectoryLog

__all__ = [
    "AdmissionConfig",
    "AdmissionState",
    "net_utility",
    "admission_init",
    "admission_step",
    "run_admission",
]

ADMISSION_COLUMNS = ("T", "j", "x", "F_star", "C_star", "net_utility")


@dataclass(frozen=True)
class AdmissionConfig:
    """Controller parameters.

    The inner dynamics tolerance should be well below the outer
    tolerance so the time-scale separation is numerically honored; the
    defaults keep a factor of 100. kappa is accepted for documentation
    of the hard-constrained variant but is not acted on.
    """

    dt_medium: float = 0.1
    steps: int = 2000
    inner: DynamicsConfig = field(default_factory=DynamicsConfig)
    x_min: float = 1e-6
    tolerance: float = 1e-4
    kappa: float = None

    def __post_init__(self):
        if self.dt_medium <= 0:
            raise ValueError("dt_medium must be > 0")
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if self.x_min <= 0:
            raise ValueError("x_min must be > 0")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must be in (0, 1)")


@dataclass(frozen=True)
class AdmissionState:
    """Arrival rates plus the inner equilibrium they induce."""

    arrivals: np.ndarray = field(repr=False)
    split: SplitState = field(repr=False)
    fstar: np.ndarray = field(repr=False)
    net_utility: float = 0.0


def net_utility(topology: Topology, arrivals) -> float:
    """V(x) = sum w_j log x_j - C*(x), with C* from the oracle."""
    value, _, _ = oracle.net_value(topology, arrivals)
    return value


def _equilibrate(topology, arrivals, config, warm=None):
    """Inner dynamics to rest for the given arrivals; returns state parts."""
    start = None
    if warm is not None:
        rates = oracle._rescale_rows(topology, warm.rates, np.asarray(arrivals, float))
        if rates is not None:
            start = SplitState.for_topology(topology, rates)
    if start is None:
        start = initial_split(topology, arrivals)
    report, _ = run_to_equilibrium(topology, start, config.inner, record=False)
    if not report.converged:
        raise InnerNotConverged(
            f"inner dynamics not converged for arrivals {np.asarray(arrivals)}"
        )
    view = payoff_view(topology, report.state)
    cost = system_cost(topology, report.state)
    return report.state, view.averages, cost


def admission_init(topology: Topology, arrivals,
                   config: AdmissionConfig = None) -> AdmissionState:
    """Equilibrate the splitting dynamics at fixed arrivals."""
    config = config or AdmissionConfig()
    arrivals = np.asarray(arrivals, dtype=float)
    split, fstar, cost = _equilibrate(topology, arrivals, config)
    value = float(np.sum(topology.weights * np.log(arrivals))) - cost
    return AdmissionState(arrivals.copy(), split, fstar, value)


def admission_step(topology: Topology, state: AdmissionState,
                   config: AdmissionConfig = None) -> AdmissionState:
    """One controller Euler step followed by inner re-equilibration.

    The inner run is warm-started from the previous equilibrium split,
    rescaled to the new arrivals.
    """
    config = config or AdmissionConfig()
    w = topology.weights
    x = np.maximum(config.x_min,
                   state.arrivals + config.dt_medium * (w - state.arrivals * state.fstar))
    split, fstar, cost = _equilibrate(topology, x, config, warm=state.split)
    value = float(np.sum(w * np.log(x))) - cost
    return AdmissionState(x, split, fstar, value)


def run_admission(topology: Topology, arrivals, config: AdmissionConfig = None):
    """Iterate admission steps until the fixed-point residual is small.

    Returns (final AdmissionState, TrajectoryLog). The log has one row
    per (outer step, population) with the admitted rate, equilibrium
    payoff, minimum system cost, and net utility. The run stops early
    when max_j |w_j - x_j F_j*| / w_j < config.tolerance.
    """
    config = config or AdmissionConfig()
    w = topology.weights
    state = admission_init(topology, arrivals, config)
    log = TrajectoryLog(ADMISSION_COLUMNS)

    def _cost_of(st):
        return float(np.sum(w * np.log(st.arrivals))) - st.net_utility

    T = 0.0
    for j in range(topology.size):
        log.append((T, topology.ids[j], state.arrivals[j], state.fstar[j],
                    _cost_of(state), state.net_utility))
    for _ in range(config.steps):
        residual = np.max(np.abs(w - state.arrivals * state.fstar) / w)
        if residual < config.tolerance:
            break
        state = admission_step(topology, state, config)
        T += config.dt_medium
        for j in range(topology.size):
            log.append((T, topology.ids[j], state.arrivals[j], state.fstar[j],
                        _cost_of(state), state.net_utility))
    return state, log
