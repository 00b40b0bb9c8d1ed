"""Slot-based stochastic swarm simulation with measured payoffs.

Instead of evaluating closed-form delays, this module runs each cloud as
a first-come-first-served queue with exponential service at rate C_i,
feeds it Poisson arrivals routed by the current split probabilities, and
drives the same replicator update from *estimated* payoffs:

    Fhat[j, i] = Dhat_i + p[j, i] + chat_i

where Dhat is an exponential moving average of per-slot mean sojourn
delay and chat is a finite-difference congestion price
(dDhat/dz) * z built from consecutive measured slots.

Modes: "multitrack" uses the full estimated payoff; "price-blind" drops
the transit price from the payoff (but still pays it in the logged
cost); "no-split" pins every population to its own cloud.

Reproducibility contract: one numpy Generator per run, consumed in a
fixed order (per slot: poisson count, then arrival times, then
destination choices, tracker by tracker; then service times per
destination in arrival order). Identical config and seed give a
byte-identical log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admission import AdmissionConfig
from .topology import Topology, initial_split
from .trajectory import TrajectoryLog

__all__ = [
    "SwarmConfig",
    "EstimatorState",
    "SlotMeasurement",
    "simulate_slot",
    "update_estimators",
    "run_swarm",
]

MODES = ("multitrack", "price-blind", "no-split")

# 10x the analytic congestion price, evaluated at the measured rate held
# just inside the capacity pole, bounds finite-difference spikes.
CHAT_CAP_FACTOR = 10.0
POLE_MARGIN = 1e-9


@dataclass(frozen=True)
class SwarmConfig:
    """Slot timing, estimator weights, and mode for one stochastic run.

    admission_interval must be an integer multiple of slot. When
    admission is enabled, the controller ticks once per interval and
    each tick applies one Euler step whose gain is the admission
    config's dt_medium (the interval sets the cadence, not the gain).
    eta is the relative replicator step on split probabilities,
    prob_floor keeps noisy options from going permanently extinct, and
    eps_z is the minimum rate change for a finite-difference update.
    """

    slot: float = 8.0
    admission_interval: float = 40.0
    ema_weight: float = 0.75
    seed: int = 0
    horizon: float = 2000.0
    mode: str = "multitrack"
    admission_enabled: bool = False
    eta: float = 0.02
    prob_floor: float = 1e-4
    eps_z: float = 1e-6

    def __post_init__(self):
        if self.slot <= 0:
            raise ValueError("slot must be > 0")
        ratio = self.admission_interval / self.slot
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("admission_interval must be an integer multiple of slot")
        if not 0 < self.ema_weight < 1:
            raise ValueError("ema_weight must be in (0, 1)")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if not 0 <= self.prob_floor < 0.5:
            raise ValueError("prob_floor must be in [0, 0.5)")
        if self.eps_z < 0:
            raise ValueError("eps_z must be >= 0")


@dataclass(frozen=True)
class EstimatorState:
    """EMA delay, finite-difference congestion price, and FD memory."""

    dhat: np.ndarray = field(repr=False)
    chat: np.ndarray = field(repr=False)
    prev_dhat: np.ndarray = field(repr=False)
    prev_z: np.ndarray = field(repr=False)

    @classmethod
    def fresh(cls, q):
        return cls(np.full(q, np.nan), np.zeros(q),
                   np.full(q, np.nan), np.full(q, np.nan))


@dataclass(frozen=True)
class SlotMeasurement:
    """What one slot produced: per-tracker and per-edge counts."""

    delays: np.ndarray = field(repr=False)         # mean sojourn, NaN if idle
    arrival_rates: np.ndarray = field(repr=False)  # routed-in per time
    completions: np.ndarray = field(repr=False)
    sojourn_total: np.ndarray = field(repr=False)
    routed: np.ndarray = field(repr=False)         # (Q, Q) counts
    drawn: np.ndarray = field(repr=False)          # Poisson counts per source


class QueueState:
    """Mutable FCFS queues: last scheduled finish and in-flight jobs."""

    def __init__(self, q):
        self.last_finish = np.zeros(q)
        self.pending = [[] for _ in range(q)]  # lists of (arrival, finish)


def simulate_slot(topology: Topology, probs: np.ndarray, arrivals: np.ndarray,
                  config: SwarmConfig, rng: np.random.Generator,
                  queues: QueueState, t0: float,
                  capacities: np.ndarray = None) -> SlotMeasurement:
    """Advance every queue by one slot.

    Draws Poisson arrivals per tracker, routes each by the split
    probabilities, serves each destination in arrival order at its
    service rate, and reports jobs whose service completes inside the
    slot. Queues are allowed to grow across slots; backlog is signal,
    not an error.
    """
    q = topology.size
    caps = topology.capacities if capacities is None else capacities
    t1 = t0 + config.slot
    drawn = np.zeros(q, dtype=np.int64)
    incoming = [[] for _ in range(q)]
    for j in range(q):
        n = int(rng.poisson(arrivals[j] * config.slot))
        drawn[j] = n
        times = rng.uniform(t0, t1, n)
        dests = rng.choice(q, size=n, p=probs[j])
        for k in range(n):
            incoming[int(dests[k])].append((times[k], j))

    routed = np.zeros((q, q), dtype=np.int64)
    for i in range(q):
        incoming[i].sort()
        scale = 1.0 / caps[i]
        for (a, j) in incoming[i]:
            start = a if a > queues.last_finish[i] else queues.last_finish[i]
            finish = start + rng.exponential(scale)
            queues.last_finish[i] = finish
            queues.pending[i].append((a, finish))
            routed[j, i] += 1

    completions = np.zeros(q, dtype=np.int64)
    sojourn_total = np.zeros(q)
    for i in range(q):
        still = []
        for (a, f) in queues.pending[i]:
            if f <= t1:
                completions[i] += 1
                sojourn_total[i] += f - a
            else:
                still.append((a, f))
        queues.pending[i] = still

    with np.errstate(invalid="ignore", divide="ignore"):
        delays = np.where(completions > 0, sojourn_total / completions, np.nan)
    return SlotMeasurement(
        delays=delays,
        arrival_rates=routed.sum(axis=0) / config.slot,
        completions=completions,
        sojourn_total=sojourn_total,
        routed=routed,
        drawn=drawn,
    )


def update_estimators(est: EstimatorState, meas: SlotMeasurement,
                      config: SwarmConfig,
                      capacities: np.ndarray) -> EstimatorState:
    """Fold one slot's measurements into the EMA delay and FD price.

    A tracker with no completions this slot carries everything forward.
    The finite difference pairs the EMA delay change with the arrival
    rate change between consecutive *measured* slots; rate changes
    smaller than eps_z hold the previous price. The price is clamped to
    [0, 10x analytic-at-measured-rate].
    """
    alpha = config.ema_weight
    dhat = est.dhat.copy()
    chat = est.chat.copy()
    prev_dhat = est.prev_dhat.copy()
    prev_z = est.prev_z.copy()
    for i in range(len(dhat)):
        if meas.completions[i] <= 0:
            continue
        d = meas.sojourn_total[i] / meas.completions[i]
        dhat[i] = d if np.isnan(dhat[i]) else alpha * d + (1.0 - alpha) * dhat[i]
        z = meas.arrival_rates[i]
        if not np.isnan(prev_dhat[i]) and abs(z - prev_z[i]) >= config.eps_z:
            ztilde = min(z, (1.0 - POLE_MARGIN) * capacities[i])
            gap = capacities[i] - ztilde
            cap = CHAT_CAP_FACTOR * ztilde / (gap * gap)
            raw = (dhat[i] - prev_dhat[i]) / (z - prev_z[i]) * z
            chat[i] = min(max(raw, 0.0), cap)
        prev_dhat[i] = dhat[i]
        prev_z[i] = z
    return EstimatorState(dhat, chat, prev_dhat, prev_z)


def _estimated_payoffs(topology, est, mode):
    """Fhat rows on the edge set; NaN rows where an option is unmeasured."""
    fhat = np.where(topology.mask, est.dhat[None, :] + est.chat[None, :], np.nan)
    if mode == "multitrack":
        fhat = fhat + np.where(topology.mask, topology.prices, 0.0)
    return fhat


def _initial_probabilities(topology, arrivals, config):
    if config.mode == "no-split":
        return np.eye(topology.size)
    probs = initial_split(topology, arrivals).probabilities()
    for j in range(topology.size):
        opts = topology.options(j)
        if probs[j].sum() <= 0:
            probs[j, opts] = 1.0 / len(opts)
    return probs


def swarm_columns(topology: Topology):
    cols = ["t", "mode"]
    cols += [f"arr_{tid}" for tid in topology.ids]
    for j in range(topology.size):
        for i in topology.options(j):
            cols.append(f"y_{topology.ids[j]}_{topology.ids[i]}")
    cols += [f"Dhat_{tid}" for tid in topology.ids]
    cols += [f"chat_{tid}" for tid in topology.ids]
    cols += ["slot_cost", "cum_cost"]
    return tuple(cols)


def run_swarm(topology: Topology, config: SwarmConfig, arrivals,
              admission: AdmissionConfig = None,
              schedule=()) -> TrajectoryLog:
    """Run the slot loop for the configured horizon and mode.

    Every slot: simulate, measure, update estimators, log the measured
    cost (sum of completed sojourns plus transit charges, per unit
    time), and apply one replicator update to the split probabilities
    (unless no-split). Every admission_interval, if enabled, apply one
    admission step driven by the estimated average payoffs. schedule is
    an iterable of (time, tracker_id, new_capacity) applied at slot
    boundaries.
    """
    q = topology.size
    arrivals = np.asarray(arrivals, dtype=float).copy()
    admission = admission or AdmissionConfig()
    rng = np.random.default_rng(config.seed)
    caps = topology.capacities.copy()
    events = sorted(schedule, key=lambda e: e[0])
    next_event = 0

    probs = _initial_probabilities(topology, arrivals, config)
    est = EstimatorState.fresh(q)
    queues = QueueState(q)
    log = TrajectoryLog(swarm_columns(topology),
                        meta={"mode": config.mode, "seed": config.seed})

    slots_per_tick = int(round(config.admission_interval / config.slot))
    n_slots = int(config.horizon / config.slot)
    cum_cost = 0.0
    transit_total = 0.0
    completions_total = 0

    for s in range(n_slots):
        t0 = s * config.slot
        while next_event < len(events) and events[next_event][0] <= t0:
            _, tid, new_cap = events[next_event]
            caps[topology.index(tid)] = float(new_cap)
            next_event += 1

        meas = simulate_slot(topology, probs, arrivals, config, rng,
                             queues, t0, capacities=caps)
        transit = float(np.sum(topology.prices * meas.routed)) / config.slot
        slot_cost = float(meas.sojourn_total.sum()) / config.slot + transit
        cum_cost += slot_cost
        transit_total += transit
        completions_total += int(meas.completions.sum())
        est = update_estimators(est, meas, config, caps)

        if config.mode != "no-split":
            fhat = _estimated_payoffs(topology, est, config.mode)
            probs = _replicator_probability_step(topology, probs, fhat, config)

        if config.admission_enabled and (s + 1) % slots_per_tick == 0:
            fhat = _estimated_payoffs(topology, est, config.mode)
            arrivals = _admission_tick(topology, probs, fhat, arrivals,
                                       admission)

        row = [t0 + config.slot, config.mode]
        row += [arrivals[i] for i in range(q)]
        for j in range(q):
            for i in topology.options(j):
                row.append(probs[j, i])
        row += [est.dhat[i] for i in range(q)]
        row += [est.chat[i] for i in range(q)]
        row += [slot_cost, cum_cost]
        log.append(row)

    log.meta["transit_cost_total"] = repr(transit_total)
    log.meta["completions_total"] = completions_total
    return log


def _replicator_probability_step(topology, probs, fhat, config):
    """One relative replicator step on each population's probabilities.

    Populations with a single option, or with any option still
    unmeasured, are left alone. The probability floor is applied after
    the step and the row renormalized.
    """
    probs = probs.copy()
    for j in range(topology.size):
        opts = topology.options(j)
        if len(opts) < 2:
            continue
        f = fhat[j, opts]
        if np.isnan(f).any():
            continue
        y = probs[j, opts]
        fbar = float(y @ f)
        if fbar <= 0:
            continue
        y = y + config.eta * y * (fbar - f) / fbar
        y = np.maximum(y, config.prob_floor)
        probs[j, opts] = y / y.sum()
    return probs


def _admission_tick(topology, probs, fhat, arrivals, admission):
    """One controller Euler step from estimated average payoffs."""
    q = topology.size
    fstar = np.empty(q)
    for j in range(q):
        opts = topology.options(j)
        f = fhat[j, opts]
        if np.isnan(f).any():
            return arrivals
        fstar[j] = float(probs[j, opts] @ f)
    w = topology.weights
    return np.maximum(admission.x_min,
                      arrivals + admission.dt_medium * (w - arrivals * fstar))
