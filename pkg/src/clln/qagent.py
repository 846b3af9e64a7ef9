"""The network as a Q-function.

States are encoded to input voltages, the output voltages are read as
action values, and the training label clamps the taken action's output to
a reward-plus-lookahead score while every other output keeps its free
value. The lookahead term is max minus mean of the next state's outputs,
which keeps labels inside the output voltage range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .circuit import DeviceModel, SolverConfig, Topology, network_function

__all__ = [
    "AgentConfig",
    "QNetwork",
    "q_values",
    "select_action",
    "future_term",
    "target_score",
    "clamp_labels",
    "epsilon_at",
    "check_label_bounds",
]


@dataclass(frozen=True)
class AgentConfig:
    """Discount and exploration schedule."""

    gamma: float = 0.5
    epsilon_start: float = 0.05
    epsilon_end: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class QNetwork:
    """Network plus encoder; gates are the mutable learned state."""

    topology: Topology
    gates: np.ndarray
    model: DeviceModel
    encoder: object  # anything with .encode(state) -> input voltages

    def __post_init__(self):
        self.gates = np.asarray(self.gates, dtype=float)
        if self.gates.shape != (self.topology.edge_count,):
            raise ValueError(
                f"expected {self.topology.edge_count} gate voltages, "
                f"got {self.gates.shape}"
            )


def q_values(qnet: QNetwork, state, cfg: SolverConfig) -> np.ndarray:
    """Action values are the output voltages for the encoded state."""
    return network_function(
        qnet.topology, qnet.gates, qnet.model, cfg, qnet.encoder.encode(state)
    )


def select_action(values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy with lowest-index tie-breaking.

    Draw discipline: exactly one uniform for the epsilon test, plus one
    integer draw only on the random branch. Keeping the count fixed makes
    action sequences reproducible across refactors.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty value vector")
    if rng.uniform() < epsilon:
        return int(rng.integers(0, values.size))
    return int(np.argmax(values))


def future_term(next_values) -> float:
    """Lookahead bonus: spread of the best next action above the mean."""
    next_values = np.asarray(next_values, dtype=float)
    if next_values.size == 0:
        raise ValueError("empty value vector")
    return float(next_values.max() - next_values.mean())


def target_score(reward: float, next_values, gamma: float) -> float:
    return reward + gamma * future_term(next_values)


def clamp_labels(free_outputs, action: int, target: float) -> np.ndarray:
    """Label vector: the taken action moves to the target, the rest hold."""
    free_outputs = np.asarray(free_outputs, dtype=float)
    if not 0 <= action < free_outputs.size:
        raise IndexError(
            f"action {action} out of range for {free_outputs.size} outputs"
        )
    labels = free_outputs.copy()
    labels[action] = target
    return labels


def epsilon_at(config: AgentConfig, step: int, total_steps: int) -> float:
    """Linear schedule over training steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    frac = step / total_steps
    return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac


def check_label_bounds(reward_scale: float, gamma: float, n_actions: int) -> bool:
    """Warn when targets could leave the output range [0, 1].

    The worst-case lookahead spread for outputs in [0, 1] is
    (1 - 1/n): one action at 1 V, the rest at 0 V.
    """
    worst = reward_scale + gamma * (1.0 - 1.0 / n_actions)
    if worst > 1.0:
        warnings.warn(
            f"targets can reach {worst:.3f} V, beyond the 1 V output range; "
            f"learning may rail the clamped outputs",
            stacklevel=2,
        )
        return False
    return True
