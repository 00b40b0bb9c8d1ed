"""Domain types: the tracker overlay and the traffic split state.

A Topology is a set of trackers (each one controlling a peer cloud with
service capacity C_i) plus a directed edge set carrying transit prices.
The self-loop of every tracker is always present at price zero. An edge
j -> i with j != i is only legal when tracker i is in the steady role:
transient clouds offload demand, they do not accept it.

A SplitState is the matrix X with entry x[j, i] = rate of requests
arriving at tracker j that are forwarded to tracker i. Off-edge entries
are structurally zero and stay zero: every constructor masks them.
Both types are immutable; evolution produces new states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NoSuchEdge

ROLES = ("steady", "transient")

# Loads at or above (1 - GUARD_MARGIN) * C count as capacity violations so
# delays and congestion prices stay finite and well-scaled near the pole.
GUARD_MARGIN = 1e-9


@dataclass(frozen=True)
class TrackerSpec:
    """One tracker: id, cloud capacity (users/time), role, utility weight."""

    id: str
    capacity: float
    role: str = "steady"
    weight: float = 1.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"tracker {self.id}: capacity must be > 0")
        if self.role not in ROLES:
            raise ValueError(f"tracker {self.id}: role must be one of {ROLES}")
        if self.weight <= 0:
            raise ValueError(f"tracker {self.id}: weight must be > 0")


class Topology:
    """Immutable tracker overlay.

    Parameters
    ----------
    trackers : iterable of TrackerSpec
    edges : iterable of (from_id, to_id, price) for cross-domain edges.
        Self-loops are implicit (price 0) and need not be listed; listing
        one with a nonzero price is an error.
    cost_weight : convex-combination weight theta in (0, 1] between the
        delay-derived terms and the transit term of the payoff. The
        default 0.5 weighs them equally, giving the plain sum
        delay + price + congestion.
    """

    def __init__(self, trackers, edges=(), cost_weight=0.5):
        trackers = tuple(trackers)
        if not trackers:
            raise ValueError("topology needs at least one tracker")
        ids = [t.id for t in trackers]
        if len(set(ids)) != len(ids):
            raise ValueError("tracker ids must be unique")
        if not 0 < cost_weight <= 1:
            raise ValueError("cost_weight must be in (0, 1]")

        self.trackers = trackers
        self.ids = tuple(ids)
        self.cost_weight = float(cost_weight)
        self._index = {tid: k for k, tid in enumerate(ids)}
        q = len(trackers)

        prices = np.zeros((q, q))
        mask = np.eye(q, dtype=bool)  # self-loops always present
        for (src, dst, price) in edges:
            j, i = self.index(src), self.index(dst)
            if price < 0:
                raise ValueError(f"edge {src}->{dst}: price must be >= 0")
            if j == i:
                if price != 0:
                    raise ValueError(f"edge {src}->{dst}: self-loop price must be 0")
                continue
            if trackers[i].role != "steady":
                raise ValueError(
                    f"edge {src}->{dst}: target must have steady role, "
                    f"got {trackers[i].role}"
                )
            mask[j, i] = True
            prices[j, i] = float(price)

        prices.setflags(write=False)
        mask.setflags(write=False)
        self.prices = prices
        self.mask = mask
        caps = np.array([t.capacity for t in trackers], dtype=float)
        caps.setflags(write=False)
        self.capacities = caps
        w = np.array([t.weight for t in trackers], dtype=float)
        w.setflags(write=False)
        self.weights = w

    @property
    def size(self) -> int:
        return len(self.trackers)

    def index(self, tracker_id: str) -> int:
        try:
            return self._index[tracker_id]
        except KeyError:
            raise NoSuchEdge(f"unknown tracker id {tracker_id!r}") from None

    def options(self, j: int):
        """Indices a population at row j may forward to (self included)."""
        return np.flatnonzero(self.mask[j])

    def guard_caps(self) -> np.ndarray:
        """Capacity guard levels: loads must stay strictly below these."""
        return (1.0 - GUARD_MARGIN) * self.capacities

    def with_capacity(self, tracker_id: str, new_capacity: float) -> "Topology":
        """Copy of this topology with one tracker's capacity replaced."""
        specs = [
            TrackerSpec(t.id, new_capacity if t.id == tracker_id else t.capacity,
                        t.role, t.weight)
            for t in self.trackers
        ]
        edges = [
            (self.ids[j], self.ids[i], self.prices[j, i])
            for j in range(self.size)
            for i in range(self.size)
            if self.mask[j, i] and j != i
        ]
        return Topology(specs, edges, cost_weight=self.cost_weight)


@dataclass(frozen=True)
class SplitState:
    """Forwarding-rate matrix X, immutable, off-edge entries exactly zero."""

    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError("rates must be a square matrix")
        if (rates < 0).any():
            raise ValueError("rates must be nonnegative")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def for_topology(cls, topology: Topology, rates: np.ndarray) -> "SplitState":
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (topology.size, topology.size):
            raise ValueError("rates shape does not match topology")
        if (rates[~topology.mask] != 0).any():
            raise ValueError("nonzero rate on a non-edge")
        return cls(rates)

    @property
    def row_sums(self) -> np.ndarray:
        """Arrival rate x_j handled by each population."""
        return self.rates.sum(axis=1)

    def loads(self) -> np.ndarray:
        """Aggregate load arriving at each tracker (column sums)."""
        return self.rates.sum(axis=0)

    def probabilities(self) -> np.ndarray:
        """Split probabilities y[j, i] = x[j, i] / x_j (zero rows give zeros)."""
        x = self.row_sums
        with np.errstate(invalid="ignore", divide="ignore"):
            y = np.where(x[:, None] > 0, self.rates / np.where(x == 0, 1, x)[:, None], 0.0)
        return y


def initial_split(topology: Topology, arrivals) -> SplitState:
    """Uniform split of each arrival rate over its options, repaired to fit.

    Each population spreads x_j uniformly over its allowed destinations.
    If some destination's aggregate load breaches its capacity guard, the
    excess is shifted proportionally toward options with slack. The repair
    first targets comfortable headroom (99% of capacity) and escalates
    toward the raw guard before giving up, so Infeasible is raised only
    when no assignment keeps every load inside the guard.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.shape != (topology.size,):
        raise ValueError("arrivals shape does not match topology")
    if (arrivals < 0).any():
        raise ValueError("arrivals must be nonnegative")

    mask = topology.mask
    counts = mask.sum(axis=1)
    rates = np.where(mask, arrivals[:, None] / counts[:, None], 0.0)

    guard = topology.guard_caps()
    if _loads_ok(rates, guard):
        return SplitState.for_topology(topology, rates)

    for target in (0.99 * topology.capacities,
                   (1.0 - 1e-4) * topology.capacities,
                   (1.0 - 1e-6) * guard):
        repaired = _shift_to_slack(rates, mask, target)
        if repaired is not None and _loads_ok(repaired, guard):
            return SplitState.for_topology(topology, repaired)
    raise Infeasible(
        "no split assignment keeps every aggregate load below capacity"
    )


def _loads_ok(rates, guard):
    return bool((rates.sum(axis=0) < guard).all())


def _shift_to_slack(rates, mask, target, rounds=200):
    """Move overload off hot destinations, proportionally to receiver slack.

    Returns the repaired matrix, or None if a round makes no progress.
    """
    rates = rates.copy()
    for _ in range(rounds):
        loads = rates.sum(axis=0)
        over = loads - target
        hot = np.flatnonzero(over > 0)
        if hot.size == 0:
            return rates
        moved_any = False
        for i in hot:
            excess = loads[i] - target[i]
            senders = np.flatnonzero(rates[:, i] > 0)
            for j in senders:
                share = excess * rates[j, i] / loads[i]
                others = np.flatnonzero(mask[j] & (np.arange(mask.shape[1]) != i))
                if others.size == 0 or share <= 0:
                    continue
                slack = np.maximum(target[others] - rates.sum(axis=0)[others], 0.0)
                total_slack = slack.sum()
                if total_slack <= 0:
                    continue
                move = min(share, rates[j, i])
                rates[j, i] -= move
                rates[j, others] += move * slack / total_slack
                moved_any = True
        if not moved_any:
            return None
    return None
