"""Scikit-learn facade over the functional training pipeline.

The estimator holds configuration only; ``fit`` builds a frozen
``TrialConfig``, runs one seeded trial, and stores the learned gate vector
plus the full trial record. It exists so the package cooperates with
sklearn tooling (cloning, ``get_params``/``set_params``, grid search); the
mechanics all live in :mod:`clln.experiment`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .circuit import DeviceModel, SolverConfig
from .envs import FourStateMDP, GridNav, fourstate_topology, grid_topology
from .experiment import TrialConfig, run_trial
from .learning import LearnConfig
from .qagent import AgentConfig, QNetwork, q_values


class QLearningAgent(BaseEstimator):
    """Q-learning agent whose value function is a resistor network.

    Parameters mirror the trial configuration one to one and are validated
    at ``fit`` time, per sklearn convention. ``fit`` ignores ``X`` and ``y``:
    the environment generates its own experience stream. The learned state
    is the gate-voltage vector ``gates_``; ``predict`` reads greedy actions
    back out of the trained network.

    Parameters
    ----------
    environment : Environment
        Task to train on. Required before calling ``fit``.
    topology : Topology or None
        Network to train. Defaults per environment: the random regular
        graph for the four-state task, the layered grid network otherwise.
    total_steps : int
        Training steps for the single trial ``fit`` runs.
    trial_seed : int
        Master seed; every random stream in the trial derives from it.
    mode : str
        Device model, "nonlinear" or "linear".
    alpha, eta, batch_size : learning-rule knobs (see LearnConfig).
    gamma, epsilon_start, epsilon_end : agent knobs (see AgentConfig).
    gate_init_mean, gate_init_std : initial gate distribution.

    Attributes
    ----------
    gates_ : ndarray
        Trained gate voltages, one per edge.
    policy_ : dict
        Greedy action per environment state at the trained gates.
    record_ : TrialRecord
        Full per-step log of the training run.
    """

    def __init__(
        self,
        environment=None,
        topology=None,
        total_steps=10_000,
        trial_seed=0,
        mode="nonlinear",
        alpha=0.02,
        eta=0.1,
        batch_size=50,
        gamma=0.5,
        epsilon_start=0.05,
        epsilon_end=0.0,
        gate_init_mean=1.5,
        gate_init_std=0.1,
    ):
        self.environment = environment
        self.topology = topology
        self.total_steps = total_steps
        self.trial_seed = trial_seed
        self.mode = mode
        self.alpha = alpha
        self.eta = eta
        self.batch_size = batch_size
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.gate_init_mean = gate_init_mean
        self.gate_init_std = gate_init_std

    def _resolved_topology(self):
        if self.topology is not None:
            return self.topology
        if isinstance(self.environment, GridNav):
            return grid_topology()
        if isinstance(self.environment, FourStateMDP):
            return fourstate_topology(seed=0)
        raise ValueError(
            "no default topology for this environment; pass topology explicitly"
        )

    def _trial_config(self) -> TrialConfig:
        if self.environment is None:
            raise ValueError("environment is required before fitting")
        return TrialConfig(
            environment=self.environment,
            topology=self._resolved_topology(),
            total_steps=self.total_steps,
            trial_seed=self.trial_seed,
            model=DeviceModel(mode=self.mode),
            solver=SolverConfig(),
            learn=LearnConfig(
                alpha=self.alpha, eta=self.eta, batch_size=self.batch_size
            ),
            agent=AgentConfig(
                gamma=self.gamma,
                epsilon_start=self.epsilon_start,
                epsilon_end=self.epsilon_end,
            ),
            gate_init_mean=self.gate_init_mean,
            gate_init_std=self.gate_init_std,
        )

    def fit(self, X=None, y=None):
        """Train for ``total_steps`` on the configured environment.

        ``X`` and ``y`` are accepted for interface compatibility and
        ignored; experience comes from the environment itself.
        """
        record = run_trial(self._trial_config())
        self.gates_ = record.final_gates
        self.policy_ = dict(record.policy)
        self.record_ = record
        return self

    def decision_function(self, states):
        """Output-node voltages (q-values) per state, one row per state."""
        check_is_fitted(self, "gates_")
        qnet = QNetwork(
            self._resolved_topology(),
            self.gates_,
            DeviceModel(mode=self.mode),
            self.environment,
        )
        solver = SolverConfig()
        return np.array([q_values(qnet, s, solver) for s in states])

    def predict(self, states):
        """Greedy action for each environment state (ties to lowest index)."""
        values = self.decision_function(states)
        return values.argmax(axis=1)

    def score(self, X=None, y=None):
        """Mean reward over the final logarithmic bin of the training run."""
        check_is_fitted(self, "record_")
        return float(self.record_.bins[-1][2])
