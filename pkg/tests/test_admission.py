"""Admission controller tests: fixed points, net-utility ascent,
agreement with the envelope oracle, and the failure modes (floor clamp,
unconverged inner dynamics, too-coarse controller steps)."""

import math

import numpy as np
import pytest

from multitrack.admission import (ADMISSION_COLUMNS, AdmissionConfig,
                                  admission_init, admission_step,
                                  net_utility, run_admission)
from multitrack.dynamics import DynamicsConfig
from multitrack.errors import InnerNotConverged
from multitrack.oracle import net_value
from multitrack.topology import Topology, TrackerSpec

# Frozen from the envelope-ascent oracle (see test_oracle).
SCENARIO_A_BEST_ARRIVALS = (21.89531406147765,
                            14.596874914805191,
                            14.596874914805191)
SCENARIO_B_BEST_ARRIVALS = (11.677498798178863,
                            1.0947656944232114,
                            1.4596875762567152)


def test_net_utility_single_tracker_closed_form(single_tracker):
    # one cloud: V(x) = w log x - x/(cap - x)
    for x in (5.0, 12.0, 21.0):
        want = 10.0 * math.log(x) - x / (30.0 - x)
        assert net_utility(single_tracker, np.array([x])) == \
            pytest.approx(want, rel=1e-9)


def test_exact_fixed_point_holds_still():
    # Capacity chosen so that x = 5 solves w = x * F*(x) in closed form:
    # F*(5) = cap/(cap-5)^2 = 2 exactly when 2*cap^2 - 21*cap + 50 = 0.
    cap = (21.0 + math.sqrt(41.0)) / 4.0
    top = Topology((TrackerSpec("S", cap, "steady", 10.0),))
    state, log = run_admission(top, np.array([5.0]))
    assert state.arrivals[0] == 5.0
    assert state.fstar[0] == pytest.approx(2.0, rel=1e-12)
    want = 10.0 * math.log(5.0) - 20.0 / (1.0 + math.sqrt(41.0))
    assert state.net_utility == pytest.approx(want, rel=1e-12)
    # terminated before taking a single controller step
    assert len(log.rows) == 1
    assert log.rows[0][0] == 0.0


def test_net_utility_never_decreases(scenario_a):
    state, log = run_admission(scenario_a.topology, scenario_a.arrivals)
    q = scenario_a.topology.size
    V = np.array(log.column("net_utility"), dtype=float)[::q]
    assert len(V) > 10
    assert (np.diff(V) >= -1e-6).all()


def test_run_reaches_net_utility_maximizer(scenario_a):
    state, _ = run_admission(scenario_a.topology, scenario_a.arrivals)
    for got, want in zip(state.arrivals, SCENARIO_A_BEST_ARRIVALS):
        assert abs(got - want) / want < 1e-3
    w = scenario_a.topology.weights
    residual = np.max(np.abs(w - state.arrivals * state.fstar) / w)
    assert residual < 1e-4


def test_envelope_gradient_matches_finite_differences(scenario_a):
    top = scenario_a.topology
    w = top.weights
    for x0 in (np.array([12.0, 16.0, 14.0]), np.array([8.0, 12.0, 10.0])):
        _, _, fstar = net_value(top, x0)
        for j in range(top.size):
            h = 1e-4 * x0[j]
            xp = x0.copy()
            xp[j] += h
            xm = x0.copy()
            xm[j] -= h
            fd = (net_utility(top, xp) - net_utility(top, xm)) / (2 * h)
            assert fd == pytest.approx(w[j] / x0[j] - fstar[j], rel=1e-3)


def test_step_clamps_at_the_admission_floor(single_tracker):
    # Near the pole the payoff explodes and the raw Euler update would go
    # negative; the controller floors it instead.
    cfg = AdmissionConfig()
    state = admission_init(single_tracker, np.array([29.9]), cfg)
    nxt = admission_step(single_tracker, state, cfg)
    assert nxt.arrivals[0] == cfg.x_min


def test_unconverged_inner_dynamics_is_an_error(scenario_a):
    cfg = AdmissionConfig(inner=DynamicsConfig(horizon=0.05))
    with pytest.raises(InnerNotConverged):
        admission_init(scenario_a.topology, scenario_a.arrivals, cfg)


def test_stiff_instance_needs_finer_controller_steps(scenario_b):
    # Small-capacity trackers make x*F*(x) stiff; the default controller
    # step overshoots into a limit cycle and the run returns after its
    # budget without meeting the residual. A finer step converges to the
    # oracle maximizer.
    top = scenario_b.topology
    w = top.weights
    coarse, _ = run_admission(top, scenario_b.arrivals,
                              AdmissionConfig(steps=300))
    residual = np.max(np.abs(w - coarse.arrivals * coarse.fstar) / w)
    assert residual > 1e-2

    fine, _ = run_admission(top, scenario_b.arrivals,
                            AdmissionConfig(dt_medium=0.01, steps=6000))
    for got, want in zip(fine.arrivals, SCENARIO_B_BEST_ARRIVALS):
        assert abs(got - want) / want < 1e-3
    # the hub admits the most by far
    assert fine.arrivals[0] > 5 * fine.arrivals[1]
    assert fine.arrivals[0] > 5 * fine.arrivals[2]


def test_log_layout(scenario_a):
    state, log = run_admission(scenario_a.topology, scenario_a.arrivals)
    assert log.columns == ADMISSION_COLUMNS
    q = scenario_a.topology.size
    assert len(log.rows) % q == 0
    T = np.array(log.column("T"), dtype=float)
    # one block of q rows per outer step, T advancing by dt_medium
    assert np.diff(T[::q]) == pytest.approx(0.1)
    ids = log.column("j")
    assert tuple(ids[:q]) == scenario_a.topology.ids


def test_config_validation():
    with pytest.raises(ValueError):
        AdmissionConfig(dt_medium=0.0)
    with pytest.raises(ValueError):
        AdmissionConfig(steps=0)
    with pytest.raises(ValueError):
        AdmissionConfig(x_min=0.0)
    with pytest.raises(ValueError):
        AdmissionConfig(tolerance=1.0)
