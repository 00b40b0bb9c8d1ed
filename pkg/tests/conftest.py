import numpy as np
import pytest

from multitrack.scenario import load_scenario
from multitrack.topology import Topology, TrackerSpec


@pytest.fixture
def scenario_a():
    return load_scenario("scenario-A")


@pytest.fixture
def scenario_b():
    return load_scenario("scenario-B")


@pytest.fixture
def single_tracker():
    return Topology((TrackerSpec("T1", 30.0, "steady", 10.0),))


def random_feasible_state(topology, rng, margin=0.95):
    """Random arrivals and split with every load below margin * capacity."""
    from multitrack.topology import SplitState

    q = topology.size
    for _ in range(1000):
        rates = np.where(topology.mask, rng.uniform(0.05, 1.0, (q, q)), 0.0)
        scale = rng.uniform(0.2, 0.9) * margin * topology.capacities.sum() \
            / rates.sum()
        rates = rates * scale
        if (rates.sum(axis=0) < margin * topology.capacities).all():
            return SplitState.for_topology(topology, rates)
    raise AssertionError("could not sample a feasible state")
