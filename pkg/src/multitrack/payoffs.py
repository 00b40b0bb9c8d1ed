"""Closed-form delay, congestion price, payoff, and system cost.

The cloud behind tracker i is a single server of capacity C_i, so with
aggregate load L_i < C_i the stationary delay is 1/(C_i - L_i). The
congestion price is the elasticity-derived charge L_i/(C_i - L_i)^2,
the marginal delay harm one extra unit of load inflicts on everyone at
the cloud. The payoff of forwarding from j to i adds the transit price:

    F[j, i] = delay(i) + p[j, i] + congestion_price(i)

and the total system cost is

    C(X) = sum_i [ L_i/(C_i - L_i) + sum_r p[r, i] * x[r, i] ]

whose partial derivative in x[j, i] is exactly F[j, i]; the dynamics and
oracle modules both lean on that identity.

All functions are pure and raise CapacityViolation when a load touches
the guard band (1 - 1e-9) * C.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityViolation, NoSuchEdge
from .topology import SplitState, Topology


@dataclass(frozen=True)
class PayoffView:
    """Batch payoff evaluation: full matrix plus per-population averages.

    payoffs[j, i] is NaN off the edge set; averages[j] is the x-weighted
    mean payoff of population j (NaN when x_j = 0).
    """

    payoffs: np.ndarray = field(repr=False)
    averages: np.ndarray = field(repr=False)


def _checked_loads(topology: Topology, state: SplitState, where=None) -> np.ndarray:
    loads = state.rates.sum(axis=0)
    guard = topology.guard_caps()
    idx = range(topology.size) if where is None else where
    for i in idx:
        if loads[i] >= guard[i]:
            raise CapacityViolation(
                f"load {loads[i]:.9g} at tracker {topology.ids[i]} reaches "
                f"capacity {topology.capacities[i]:.9g}"
            )
    return loads


def delay(topology: Topology, state: SplitState, i: int) -> float:
    """Stationary delay 1/(C_i - L_i) at tracker i."""
    loads = _checked_loads(topology, state, (i,))
    return 1.0 / (topology.capacities[i] - loads[i])


def congestion_price(topology: Topology, state: SplitState, i: int) -> float:
    """Marginal congestion charge L_i/(C_i - L_i)^2 at tracker i."""
    loads = _checked_loads(topology, state, (i,))
    gap = topology.capacities[i] - loads[i]
    return loads[i] / (gap * gap)


def payoff(topology: Topology, state: SplitState, j: int, i: int) -> float:
    """Per-unit-rate cost F[j, i] of forwarding from j to i."""
    if not topology.mask[j, i]:
        raise NoSuchEdge(f"no edge {topology.ids[j]} -> {topology.ids[i]}")
    loads = _checked_loads(topology, state, (i,))
    gap = topology.capacities[i] - loads[i]
    th = topology.cost_weight
    return (2.0 * th) * (1.0 / gap + loads[i] / (gap * gap)) \
        + (2.0 * (1.0 - th)) * topology.prices[j, i]


def system_cost(topology: Topology, state: SplitState) -> float:
    """Total cost C(X) = sum of cloud delay costs plus transit spend."""
    loads = _checked_loads(topology, state)
    gaps = topology.capacities - loads
    th = topology.cost_weight
    delay_part = float(np.sum(loads / gaps))
    transit_part = float(np.sum(topology.prices * state.rates))
    return (2.0 * th) * delay_part + (2.0 * (1.0 - th)) * transit_part


def payoff_view(topology: Topology, state: SplitState) -> PayoffView:
    """Evaluate every edge payoff and each population's average payoff."""
    loads = _checked_loads(topology, state)
    gaps = topology.capacities - loads
    th = topology.cost_weight
    per_dest = (2.0 * th) * (1.0 / gaps + loads / (gaps * gaps))
    payoffs = np.where(topology.mask,
                       per_dest[None, :] + (2.0 * (1.0 - th)) * topology.prices,
                       np.nan)
    x = state.row_sums
    weighted = np.where(topology.mask, state.rates * payoffs, 0.0).sum(axis=1)
    averages = np.where(x > 0, weighted / np.where(x == 0, 1.0, x), np.nan)
    payoffs.setflags(write=False)
    averages.setflags(write=False)
    return PayoffView(payoffs=payoffs, averages=averages)
