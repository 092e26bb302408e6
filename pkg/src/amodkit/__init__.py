"""Multi-city fleet rebalancing: simulator, exact controllers, meta-RL."""

__version__ = "0.1.0"

from .errors import InvariantViolation, ScenarioError
from .scenario import (City, Disturbance, DisturbanceKind, SynthCityParams,
                       apply_disturbance, generate_synthetic_city,
                       load_disturbances, load_scenario, sample_demand,
                       save_scenario)
from .flow import FlowNetwork, FlowSolution, SolveStatus, min_cost_flow
from .flowopt import (MpcPlan, solve_matching, solve_mpc_forecast,
                      solve_mpc_oracle, solve_rebalance)
from .env import (FlowAction, Observation, RebalanceEnv, SimState, StepResult,
                  Trajectory, derive_seed, desired_counts, run_episode)

__all__ = [
    "InvariantViolation", "ScenarioError",
    "City", "Disturbance", "DisturbanceKind", "SynthCityParams",
    "apply_disturbance", "generate_synthetic_city", "load_disturbances",
    "load_scenario", "sample_demand", "save_scenario",
    "FlowNetwork", "FlowSolution", "SolveStatus", "min_cost_flow",
    "MpcPlan", "solve_matching", "solve_mpc_forecast", "solve_mpc_oracle",
    "solve_rebalance",
    "FlowAction", "Observation", "RebalanceEnv", "SimState", "StepResult",
    "Trajectory", "derive_seed", "desired_counts", "run_episode",
]
