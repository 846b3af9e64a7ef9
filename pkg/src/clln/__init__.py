"""Contrastive local learning networks: circuit simulation and Q-learning training."""

from clln.circuit import (
    Boundary,
    DeviceModel,
    Equilibrium,
    NotConvergedError,
    SingularSystemError,
    SolverConfig,
    Topology,
    conductance,
    dissipated_power,
    kcl_residual,
    network_function,
    solve_equilibrium,
    validate_topology,
)
from clln.envs import FourStateMDP, GridNav, fourstate_topology, grid_topology
from clln.estimators import QLearningAgent
from clln.experiment import (
    OracleReport,
    TrialConfig,
    TrialRecord,
    enumerate_strategies_fourstate,
    grid_policy_oracle,
    log_bins,
    occupancy_heatmap,
    run_campaign,
    run_trial,
)
from clln.learning import (
    ContrastPair,
    LearnConfig,
    UpdateBatch,
    apply_batch,
    contrast,
    contrastive_value,
    local_deltas,
)
from clln.qagent import AgentConfig, QNetwork, q_values, select_action

__all__ = [
    "AgentConfig",
    "Boundary",
    "ContrastPair",
    "DeviceModel",
    "Equilibrium",
    "FourStateMDP",
    "GridNav",
    "LearnConfig",
    "NotConvergedError",
    "OracleReport",
    "QLearningAgent",
    "QNetwork",
    "SingularSystemError",
    "SolverConfig",
    "Topology",
    "TrialConfig",
    "TrialRecord",
    "UpdateBatch",
    "apply_batch",
    "conductance",
    "contrast",
    "contrastive_value",
    "dissipated_power",
    "enumerate_strategies_fourstate",
    "fourstate_topology",
    "grid_policy_oracle",
    "grid_topology",
    "kcl_residual",
    "local_deltas",
    "log_bins",
    "network_function",
    "occupancy_heatmap",
    "q_values",
    "run_campaign",
    "run_trial",
    "select_action",
    "solve_equilibrium",
    "validate_topology",
]
