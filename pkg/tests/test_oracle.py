"""Oracle checks: simplex projection, min-cost splits, Wardrop
certificates, net-utility maximization, and the brute-force second
opinion that keeps the projected-gradient solver honest."""

import math

import numpy as np
import pytest

from multitrack.dynamics import initial_split
from multitrack.errors import Infeasible, TooLarge
from multitrack.oracle import (brute_force_min_cost, max_net_utility,
                               min_cost_split, net_value, project_simplex,
                               verify_wardrop)
from multitrack.payoffs import payoff_view, system_cost
from multitrack.topology import SplitState, Topology, TrackerSpec

# Frozen from the projected-gradient solver at tolerance 1e-8 and
# cross-checked against the 1e-3 grid search (agreement 5.4e-5).
SCENARIO_A_MIN_COST = 20.969646264176177
SCENARIO_A_MIN_SPLIT = {
    (0, 0): 10.0,
    (1, 0): 3.0278953479191895,
    (1, 1): 16.97210465208081,
    (2, 0): 4.11438141312221,
    (2, 2): 15.885618586877788,
}

# Frozen from the envelope ascent; the T2/T3 components satisfy the local
# fixed point w = x * cap/(cap-x)^2 and T1 matches the standalone closed
# form because offloading onto the hub is unprofitable at the maximizer.
SCENARIO_A_BEST_ARRIVALS = (21.89531406147765,
                            14.596874914805191,
                            14.596874914805191)
SCENARIO_A_BEST_VALUE = 76.37419023343644


def _pair():
    return Topology((TrackerSpec("A", 20.0), TrackerSpec("B", 20.0)),
                    [("A", "B", 1.0), ("B", "A", 1.0)])


def test_project_simplex_examples():
    out = project_simplex(np.array([1.0, 2.0]), 1.0)
    assert np.allclose(out, [0.0, 1.0])
    out = project_simplex(np.array([0.6, 0.6]), 1.0)
    assert np.allclose(out, [0.5, 0.5])
    # already feasible points project to themselves
    out = project_simplex(np.array([0.25, 0.75]), 1.0)
    assert out == pytest.approx([0.25, 0.75], abs=1e-15)


def test_project_simplex_properties():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        total = float(rng.uniform(0.1, 50))
        v = rng.normal(0, 10, n)
        p = project_simplex(v, total)
        assert (p >= 0).all()
        assert math.fsum(p) == pytest.approx(total, rel=1e-12)
        # no feasible point is closer to v than the projection
        z = rng.random(n)
        z = total * z / z.sum()
        assert np.sum((v - p) ** 2) <= np.sum((v - z) ** 2) + 1e-9


def test_project_simplex_rejects_nonpositive_total():
    with pytest.raises(ValueError):
        project_simplex(np.array([1.0, 2.0]), 0.0)


def test_single_tracker_min_cost_closed_form(single_tracker):
    st, cost = min_cost_split(single_tracker, np.array([10.0]))
    # one cloud, no transit: C = L/(cap - L) = 10/20
    assert cost == pytest.approx(0.5, rel=1e-12)
    assert st.rates[0, 0] == pytest.approx(10.0, rel=1e-12)


def test_symmetric_pair_keeps_traffic_local():
    # Swapping equal masses leaves both loads unchanged and only adds
    # transit, so the optimum forwards nothing.
    top = _pair()
    st, cost = min_cost_split(top, np.array([8.0, 8.0]))
    assert cost == pytest.approx(4.0 / 3.0, rel=1e-10)
    assert st.rates[0, 1] <= 1e-9
    assert st.rates[1, 0] <= 1e-9


def test_scenario_a_min_cost_frozen(scenario_a):
    st, cost = min_cost_split(scenario_a.topology, scenario_a.arrivals)
    assert cost == pytest.approx(SCENARIO_A_MIN_COST, rel=1e-9)
    for (j, i), want in SCENARIO_A_MIN_SPLIT.items():
        assert st.rates[j, i] == pytest.approx(want, rel=1e-5)
    # first-order conditions of the minimum are the Wardrop conditions
    assert verify_wardrop(scenario_a.topology, st, tolerance=1e-5).passed


def test_min_cost_descends_from_uniform(scenario_a):
    top = scenario_a.topology
    start = initial_split(top, scenario_a.arrivals)
    st, cost = min_cost_split(top, scenario_a.arrivals)
    assert cost <= system_cost(top, start) + 1e-12


def test_min_cost_agrees_with_brute_force(scenario_a):
    st, cost = min_cost_split(scenario_a.topology, scenario_a.arrivals)
    bst, bcost = brute_force_min_cost(scenario_a.topology,
                                      scenario_a.arrivals, resolution=1e-3)
    assert abs(bcost - cost) < 1e-3
    # a grid point can never beat the true optimum
    assert bcost >= cost - 1e-6

    top = _pair()
    st, cost = min_cost_split(top, np.array([8.0, 8.0]))
    bst, bcost = brute_force_min_cost(top, np.array([8.0, 8.0]),
                                      resolution=1e-3)
    # the boundary optimum sits exactly on a grid point
    assert bcost == pytest.approx(cost, abs=1e-9)


def test_min_cost_warm_start_matches_cold(scenario_a):
    top = scenario_a.topology
    st, cost = min_cost_split(top, scenario_a.arrivals)
    warm_st, warm_cost = min_cost_split(top, scenario_a.arrivals, initial=st)
    assert warm_cost == pytest.approx(cost, rel=1e-10)
    # warm rows are rescaled when the requested arrivals differ
    bigger = scenario_a.arrivals * 1.05
    cold_st, cold = min_cost_split(top, bigger)
    warm_st, warm = min_cost_split(top, bigger, initial=st)
    assert warm == pytest.approx(cold, rel=1e-8)


def test_min_cost_propagates_infeasibility():
    top = _pair()
    with pytest.raises(Infeasible):
        min_cost_split(top, np.array([25.0, 25.0]))


def test_wardrop_report_shape_at_minimum(scenario_a):
    top = scenario_a.topology
    st, _ = min_cost_split(top, scenario_a.arrivals)
    kkt = verify_wardrop(top, st, tolerance=1e-5)
    assert kkt.passed
    view = payoff_view(top, st)
    # single-option population: its multiplier is its only payoff
    assert kkt.multipliers[0] == pytest.approx(view.payoffs[0, 0], rel=1e-12)
    # fully used rows leave no slackness entries
    assert np.isnan(kkt.slackness).all()
    assert kkt.tolerance == 1e-5


def test_wardrop_flags_cheaper_unused_option(scenario_a):
    top = scenario_a.topology
    rates = np.zeros((3, 3))
    rates[0, 0] = 10.0
    rates[1, 1] = 18.0  # remote option unused although far cheaper
    rates[2, 0] = 4.0
    rates[2, 2] = 16.0
    st = SplitState.for_topology(top, rates)
    kkt = verify_wardrop(top, st, tolerance=1e-4)
    assert not kkt.passed
    assert kkt.slackness[1, 0] < 0
    assert kkt.stationarity > 1e-4


def test_wardrop_single_option_always_passes(single_tracker):
    st = initial_split(single_tracker, np.array([12.0]))
    assert verify_wardrop(single_tracker, st).passed


def test_max_net_utility_single_tracker_closed_form(single_tracker):
    x, value = max_net_utility(single_tracker)
    # stationarity of w*log(x) - x/(cap-x): x^2 - 63x + 900 = 0
    best = (63.0 - math.sqrt(369.0)) / 2.0
    best_value = 10.0 * math.log(best) - best / (30.0 - best)
    assert x[0] == pytest.approx(best, abs=1e-5)
    assert value == pytest.approx(best_value, rel=1e-9)
    # grid sweep of the objective never beats the reported maximum
    grid = np.linspace(1.0, 29.5, 20001)
    vals = 10.0 * np.log(grid) - grid / (30.0 - grid)
    assert vals.max() <= value + 1e-6
    assert vals.max() >= value - 1e-5


def test_max_net_utility_scenario_a_frozen(scenario_a):
    top = scenario_a.topology
    x, value = max_net_utility(top)
    assert x == pytest.approx(SCENARIO_A_BEST_ARRIVALS, rel=1e-6)
    assert value == pytest.approx(SCENARIO_A_BEST_VALUE, rel=1e-9)
    # reported point satisfies the fixed-point condition w_j = x_j F_j*
    _, _, fstar = net_value(top, x)
    residual = np.max(np.abs(top.weights - x * fstar) / top.weights)
    assert residual < 1e-6
    # T1 behaves as standalone: nobody offloads onto the hub here
    assert x[0] == pytest.approx((63.0 - math.sqrt(369.0)) / 2.0, abs=1e-4)


def test_net_value_rejects_nonpositive_arrivals(scenario_a):
    with pytest.raises(Infeasible):
        net_value(scenario_a.topology, np.array([10.0, 0.0, 5.0]))


def test_brute_force_refuses_large_instances():
    quad = Topology(
        tuple(TrackerSpec(f"T{i}", 20.0) for i in range(1, 5)),
        [("T2", "T1", 1.0), ("T3", "T1", 1.0), ("T4", "T1", 1.0)])
    with pytest.raises(TooLarge):
        brute_force_min_cost(quad, np.array([5.0, 5.0, 5.0, 5.0]))

    three_opts = Topology(
        (TrackerSpec("T1", 20.0), TrackerSpec("T2", 20.0),
         TrackerSpec("T3", 20.0)),
        [("T2", "T1", 1.0), ("T2", "T3", 1.0)])
    with pytest.raises(TooLarge):
        brute_force_min_cost(three_opts, np.array([5.0, 5.0, 5.0]))

    three_free = Topology(
        (TrackerSpec("T1", 20.0), TrackerSpec("T2", 20.0),
         TrackerSpec("T3", 20.0)),
        [("T1", "T2", 1.0), ("T2", "T1", 1.0), ("T3", "T1", 1.0)])
    with pytest.raises(TooLarge):
        brute_force_min_cost(three_free, np.array([5.0, 5.0, 5.0]))


def test_brute_force_zero_arrivals_costs_nothing():
    top = _pair()
    st, cost = brute_force_min_cost(top, np.array([0.0, 0.0]))
    assert cost == 0.0
    assert (st.rates == 0).all()
