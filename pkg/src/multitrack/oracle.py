"""Independent ground-truth solvers.

Three entry points, deliberately dependency-free so they stand apart
from the dynamics they certify:

* min_cost_split: projected-gradient minimization of the system cost
  over the product of per-population simplices. The gradient of C(X) in
  x[j, i] is exactly the payoff F[j, i], so the payoff evaluator doubles
  as the gradient and the minimizer doubles as the Wardrop state.
* verify_wardrop: KKT check of a state (used options tie at the row
  multiplier, unused options are no cheaper).
* max_net_utility: gradient ascent on V(x) = sum w_j log x_j - C*(x)
  using the envelope gradient w_j/x_j - F_j*, each evaluation solving
  the inner min-cost problem.

brute_force_min_cost is the oracle's own oracle: exhaustive grid search
on instances small enough to enumerate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityViolation, Infeasible, MaxIterations, TooLarge
from .payoffs import payoff_view, system_cost
from .topology import SplitState, Topology, initial_split

__all__ = [
    "KKTReport",
    "project_simplex",
    "min_cost_split",
    "verify_wardrop",
    "max_net_utility",
    "brute_force_min_cost",
]

USED_FRACTION = 1e-9


@dataclass(frozen=True)
class KKTReport:
    """Wardrop/KKT certificate for a split state.

    multipliers[j] is the minimum used-option payoff of population j;
    slackness[j, i] holds F[j, i] - multipliers[j] for unused options
    (NaN elsewhere); stationarity is the worst relative residual over
    used-option ties and unused-option undercuts; passed means it is
    within the tolerance the report was built with.
    """

    multipliers: np.ndarray = field(repr=False)
    slackness: np.ndarray = field(repr=False)
    stationarity: float = 0.0
    passed: bool = False
    tolerance: float = 0.0


def project_simplex(v, total):
    """Euclidean projection of v onto {x >= 0, sum(x) = total}.

    Exact sort-based algorithm; total must be positive.
    """
    v = np.asarray(v, dtype=float)
    if total <= 0:
        raise ValueError("total must be > 0")
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    ks = np.arange(1, len(v) + 1)
    candidates = u - (cumsum - total) / ks
    rho = np.nonzero(candidates > 0)[0][-1]
    tau = (cumsum[rho] - total) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _row_project(topology, X, arrivals):
    """Project each population row onto its scaled simplex (edges only)."""
    Y = np.zeros_like(X)
    for j in range(topology.size):
        opts = topology.options(j)
        if arrivals[j] <= 0:
            continue
        if len(opts) == 1:
            Y[j, opts[0]] = arrivals[j]
        else:
            Y[j, opts] = project_simplex(X[j, opts], arrivals[j])
    return Y


def min_cost_split(topology: Topology, arrivals, tolerance: float = 1e-8,
                   max_iter: int = 200000, initial: SplitState = None):
    """Minimize C(X) subject to row sums = arrivals and structural zeros.

    Projected gradient with backtracking line search; terminates when the
    unit-step projected-gradient norm drops below tolerance. Returns
    (SplitState, C*). Pass `initial` to warm-start (rows are rescaled to
    the requested arrivals).
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if initial is not None:
        X = _rescale_rows(topology, initial.rates, arrivals)
        if X is None:
            X = initial_split(topology, arrivals).rates.copy()
    else:
        X = initial_split(topology, arrivals).rates.copy()

    state = SplitState.for_topology(topology, X)
    cost = system_cost(topology, state)
    t = 1.0
    for _ in range(max_iter):
        G = np.where(topology.mask, payoff_view(topology, state).payoffs, 0.0)
        pg = _row_project(topology, state.rates - G, arrivals) - state.rates
        if np.linalg.norm(pg) < tolerance:
            return state, cost
        accepted = False
        for _ in range(60):
            Y = _row_project(topology, state.rates - t * G, arrivals)
            step = Y - state.rates
            ss = float(np.sum(step * step))
            if ss == 0.0:
                # Step underflowed; a shorter one cannot move either.
                t *= 0.5
                continue
            try:
                cand = SplitState.for_topology(topology, Y)
                cand_cost = system_cost(topology, cand)
            except CapacityViolation:
                t *= 0.5
                continue
            if cand_cost <= cost - 1e-4 / max(t, 1e-300) * ss:
                state, cost = cand, cand_cost
                t *= 1.25
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # step size underflowed: numerically at the minimizer
            return state, cost
    raise MaxIterations("min_cost_split did not reach tolerance")


def _rescale_rows(topology, rates, arrivals):
    """Scale each row to new sums; None if a needed row has no mass."""
    X = np.zeros_like(rates)
    for j in range(topology.size):
        s = rates[j].sum()
        if arrivals[j] <= 0:
            continue
        if s <= 0:
            return None
        X[j] = rates[j] * (arrivals[j] / s)
    guard = topology.guard_caps()
    if (X.sum(axis=0) >= guard).any():
        return None
    return X


def verify_wardrop(topology: Topology, state: SplitState,
                   tolerance: float = 1e-6) -> KKTReport:
    """KKT/Wardrop check: used options tie, unused options are no cheaper.

    Residuals are relative to each population's multiplier.
    """
    view = payoff_view(topology, state)
    q = topology.size
    x = state.row_sums
    multipliers = np.full(q, np.nan)
    slackness = np.full((q, q), np.nan)
    worst = 0.0
    for j in range(q):
        if x[j] <= 0:
            continue
        opts = topology.options(j)
        used = [i for i in opts if state.rates[j, i] > USED_FRACTION * x[j]]
        unused = [i for i in opts if state.rates[j, i] <= USED_FRACTION * x[j]]
        lam = min(view.payoffs[j, i] for i in used)
        multipliers[j] = lam
        spread = max(view.payoffs[j, i] for i in used) - lam
        worst = max(worst, spread / lam)
        for i in unused:
            h = view.payoffs[j, i] - lam
            slackness[j, i] = h
            if h < 0:
                worst = max(worst, -h / lam)
    return KKTReport(multipliers=multipliers, slackness=slackness,
                     stationarity=worst, passed=bool(worst <= tolerance),
                     tolerance=tolerance)


def net_value(topology: Topology, arrivals, warm: SplitState = None,
              tolerance: float = 1e-8):
    """V(x) = sum w_j log x_j - C*(x); also returns the inner minimizer.

    Returns (value, state, fstar) where fstar[j] is the common payoff of
    population j's used options at the minimizer.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if (arrivals <= 0).any():
        raise Infeasible("net utility needs strictly positive arrivals")
    state, cost = min_cost_split(topology, arrivals, tolerance, initial=warm)
    value = float(np.sum(topology.weights * np.log(arrivals))) - cost
    fstar = payoff_view(topology, state).averages
    return value, state, fstar


def max_net_utility(topology: Topology, tolerance: float = 1e-6,
                    max_iter: int = 2000, inner_tolerance: float = 1e-8):
    """Maximize V(x) by envelope-gradient ascent; returns (arrivals, value).

    Terminates when the relative fixed-point residual
    max_j |w_j - x_j F_j*| / w_j falls below tolerance. The objective is
    concave (log utility minus a convex min-cost), so the stationary
    point is the global maximizer.
    """
    w = topology.weights
    x = 0.1 * topology.capacities.copy()
    for _ in range(60):
        try:
            value, state, fstar = net_value(topology, x, None, inner_tolerance)
            break
        except (Infeasible, CapacityViolation):
            x *= 0.5
    else:
        raise Infeasible("could not find a feasible starting load")

    t = 1.0
    for _ in range(max_iter):
        grad = w / x - fstar
        residual = np.max(np.abs(w - x * fstar) / w)
        if residual < tolerance:
            return x, value
        accepted = False
        for _ in range(60):
            y = x + t * grad
            if (y <= 0).any():
                t *= 0.5
                continue
            try:
                cand_value, cand_state, cand_fstar = net_value(
                    topology, y, state, inner_tolerance)
            except (Infeasible, CapacityViolation):
                t *= 0.5
                continue
            if cand_value >= value + 1e-4 * t * float(np.sum(grad * grad)):
                x, value, state, fstar = y, cand_value, cand_state, cand_fstar
                t *= 1.25
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return x, value
    raise MaxIterations("max_net_utility did not reach tolerance")


def brute_force_min_cost(topology: Topology, arrivals, resolution: float = 1e-3):
    """Exhaustive grid search over forwarding fractions; the second opinion.

    Only instances with at most two options per population, at most two
    populations with a real choice, and at most three trackers are
    accepted (everything else raises TooLarge). Returns the best grid
    point as (SplitState, cost).
    """
    arrivals = np.asarray(arrivals, dtype=float)
    q = topology.size
    if q > 3:
        raise TooLarge("brute force limited to at most 3 trackers")
    free_rows = []
    fixed = np.zeros((q, q))
    for j in range(q):
        opts = topology.options(j)
        if len(opts) > 2:
            raise TooLarge("brute force limited to 2 options per population")
        if arrivals[j] <= 0:
            continue
        if len(opts) == 1:
            fixed[j, opts[0]] = arrivals[j]
        else:
            free_rows.append(j)
    if len(free_rows) > 2:
        raise TooLarge("brute force limited to 2 free populations")

    c1 = 2.0 * topology.cost_weight
    c2 = 2.0 * (1.0 - topology.cost_weight)
    caps = topology.capacities
    guard = topology.guard_caps()
    base_loads = fixed.sum(axis=0)

    n = int(round(1.0 / resolution)) + 1
    fracs = np.linspace(0.0, 1.0, n)
    shape = (n,) * len(free_rows)
    loads = [np.full(shape, base_loads[i]) for i in range(q)]
    transit = np.zeros(shape)
    transit += float(np.sum(topology.prices * fixed))
    for axis, j in enumerate(free_rows):
        local, remote = _two_options(topology, j)
        f = fracs.reshape([-1 if a == axis else 1 for a in range(len(free_rows))])
        loads[local] = loads[local] + arrivals[j] * (1.0 - f)
        loads[remote] = loads[remote] + arrivals[j] * f
        transit = transit + topology.prices[j, remote] * arrivals[j] * f \
            + topology.prices[j, local] * arrivals[j] * (1.0 - f)

    cost = np.zeros(shape)
    feasible = np.ones(shape, dtype=bool)
    for i in range(q):
        feasible &= loads[i] < guard[i]
        gap = np.where(feasible, caps[i] - loads[i], 1.0)
        cost = cost + np.where(feasible, loads[i] / gap, np.inf)
    total = c1 * np.where(feasible, cost, np.inf) + c2 * transit
    if not np.isfinite(total).any():
        raise Infeasible("no feasible grid point")

    best = np.unravel_index(int(np.argmin(total)), shape) if shape else ()
    X = fixed.copy()
    for axis, j in enumerate(free_rows):
        local, remote = _two_options(topology, j)
        f = fracs[best[axis]]
        X[j, local] = arrivals[j] * (1.0 - f)
        X[j, remote] = arrivals[j] * f
    state = SplitState.for_topology(topology, X)
    return state, float(total[best])


def _two_options(topology, j):
    """(local, remote) option pair of a two-option population."""
    opts = list(topology.options(j))
    if j in opts:
        local = j
        remote = next(i for i in opts if i != j)
    else:
        local, remote = opts
    return local, remote
