"""MultiTrack: a multi-timescale traffic management simulator.

Trackers split peer demand across domains with replicator or BNN
population dynamics (small time scale), shape admitted rates with a
log-utility controller (medium time scale), and absorb capacity changes
(large time scale). A projected-gradient oracle provides independent
minimum-cost and Wardrop/KKT ground truth, and a slot-based stochastic
swarm reproduces the whole loop from measured delays instead of closed
forms.
"""

from ._kernels import backend_name
from .admission import (AdmissionConfig, AdmissionState, admission_init,
                        admission_step, net_utility, run_admission)
from .dynamics import (DynamicsConfig, EquilibriumReport, bnn_step,
                       replicator_step, run_to_equilibrium)
from .errors import (CapacityViolation, Infeasible, InnerNotConverged,
                     MaxIterations, MultiTrackError, NoSuchEdge, ParseError,
                     SchemaError, StepCollapse, TooLarge, ValidationError)
from .oracle import (KKTReport, brute_force_min_cost, max_net_utility,
                     min_cost_split, project_simplex, verify_wardrop)
from .payoffs import (PayoffView, congestion_price, delay, payoff,
                      payoff_view, system_cost)
from .scenario import (Scenario, builtin_scenarios, dump_scenario,
                       load_scenario, save_scenario)
from .swarm import (EstimatorState, SlotMeasurement, SwarmConfig,
                    run_swarm, simulate_slot, update_estimators)
from .topology import SplitState, Topology, TrackerSpec, initial_split
from .trajectory import TrajectoryLog

__version__ = "0.1.0"

__all__ = [
    "AdmissionConfig", "AdmissionState", "admission_init", "admission_step",
    "net_utility", "run_admission",
    "DynamicsConfig", "EquilibriumReport", "bnn_step", "replicator_step",
    "run_to_equilibrium",
    "CapacityViolation", "Infeasible", "InnerNotConverged", "MaxIterations",
    "MultiTrackError", "NoSuchEdge", "ParseError", "SchemaError",
    "StepCollapse", "TooLarge", "ValidationError",
    "KKTReport", "brute_force_min_cost", "max_net_utility", "min_cost_split",
    "project_simplex", "verify_wardrop",
    "PayoffView", "congestion_price", "delay", "payoff", "payoff_view",
    "system_cost",
    "Scenario", "builtin_scenarios", "dump_scenario", "load_scenario",
    "save_scenario",
    "EstimatorState", "SlotMeasurement", "SwarmConfig", "run_swarm",
    "simulate_slot", "update_estimators",
    "SplitState", "Topology", "TrackerSpec", "initial_split",
    "TrajectoryLog", "backend_name",
]
