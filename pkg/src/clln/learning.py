"""Contrastive coupled learning on resistor networks with transistor edges.

A training step solves the network twice on one parameter set: a free state
with only the inputs constrained, and a clamped state where the outputs are
additionally held at targets nudged toward the labels. The difference of
squared edge drops between the two states gives a per-edge, purely local
update for the gate voltages. Updates are summed over a batch of steps and
applied together, clipped to the physical gate range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .circuit import (
    Boundary,
    CircuitError,
    DeviceModel,
    Equilibrium,
    GATE_MAX,
    GATE_MIN,
    SolverConfig,
    Topology,
    solve_equilibrium,
)

__all__ = [
    "LearnConfig",
    "ContrastPair",
    "UpdateBatch",
    "nudged_targets",
    "contrast",
    "local_deltas",
    "accumulate",
    "apply_batch",
    "contrastive_value",
]


@dataclass(frozen=True)
class LearnConfig:
    """Learning-rule parameters and the physical gate range."""

    alpha: float = 0.02
    eta: float = 0.1
    batch_size: int = 50
    gate_min: float = GATE_MIN
    gate_max: float = GATE_MAX

    def __post_init__(self):
        # alpha 0 is allowed as a diagnostic (no learning, pure rollout)
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gate_min >= self.gate_max:
            raise ValueError("gate_min must be below gate_max")


@dataclass(frozen=True, eq=False)
class ContrastPair:
    """Free and clamped equilibria of one training step, plus the targets."""

    free: Equilibrium
    clamped: Equilibrium
    labels: tuple
    nudged_targets: tuple


@dataclass
class UpdateBatch:
    """Running sum of per-edge gate updates awaiting application."""

    accumulated_deltas: np.ndarray
    steps_accumulated: int = 0

    @classmethod
    def empty(cls, edge_count: int) -> "UpdateBatch":
        return cls(np.zeros(edge_count), 0)


def nudged_targets(free_outputs, labels, eta: float) -> np.ndarray:
    """Convex combination pulling each free output toward its label."""
    free_outputs = np.asarray(free_outputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if free_outputs.shape != labels.shape:
        raise ValueError(
            f"free outputs and labels differ in length: "
            f"{free_outputs.shape} vs {labels.shape}"
        )
    return free_outputs * (1.0 - eta) + eta * labels


def contrast(
    topology: Topology,
    gates: np.ndarray,
    model: DeviceModel,
    cfg: SolverConfig,
    inputs,
    labels,
    eta: float,
) -> ContrastPair:
    """Solve the free and clamped states for one input/label pair."""
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if inputs.shape != (len(topology.input_nodes),):
        raise ValueError(
            f"expected {len(topology.input_nodes)} input voltages, got {inputs.shape}"
        )
    if labels.shape != (len(topology.output_nodes),):
        raise ValueError(
            f"expected {len(topology.output_nodes)} labels, got {labels.shape}"
        )

    free_boundary = Boundary(tuple(zip(topology.input_nodes, inputs.tolist())))
    try:
        free = solve_equilibrium(topology, gates, free_boundary, model, cfg)
    except CircuitError as exc:
        exc.args = (f"free state: {exc}",)
        raise

    free_outputs = free.node_voltages[list(topology.output_nodes)]
    targets = nudged_targets(free_outputs, labels, eta)
    clamped_boundary = Boundary(
        free_boundary.constraints + tuple(zip(topology.output_nodes, targets.tolist()))
    )
    try:
        clamped = solve_equilibrium(topology, gates, clamped_boundary, model, cfg)
    except CircuitError as exc:
        exc.args = (f"clamped state: {exc}",)
        raise

    return ContrastPair(
        free=free,
        clamped=clamped,
        labels=tuple(labels.tolist()),
        nudged_targets=tuple(targets.tolist()),
    )


def local_deltas(pair: ContrastPair, alpha: float) -> np.ndarray:
    """Per-edge gate update from the two equilibria of one step.

    Uses only quantities local to each edge: the squared voltage drops in
    the free and clamped states.
    """
    df = pair.free.edge_drops
    dc = pair.clamped.edge_drops
    return alpha * (df * df - dc * dc)


def accumulate(batch: UpdateBatch, deltas: np.ndarray) -> UpdateBatch:
    """Add one step's deltas into the batch. Mutates and returns the batch."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != batch.accumulated_deltas.shape:
        raise ValueError(
            f"delta length {deltas.shape} does not match batch "
            f"{batch.accumulated_deltas.shape}"
        )
    batch.accumulated_deltas += deltas
    batch.steps_accumulated += 1
    return batch


def apply_batch(gates: np.ndarray, batch: UpdateBatch, cfg: LearnConfig) -> np.ndarray:
    """Apply the summed batch to the gates, clip to range, reset the batch."""
    if batch.steps_accumulated != cfg.batch_size:
        warnings.warn(
            f"applying a partial batch of {batch.steps_accumulated} steps "
            f"(batch_size is {cfg.batch_size})",
            stacklevel=2,
        )
    new_gates = np.clip(
        gates + batch.accumulated_deltas, cfg.gate_min, cfg.gate_max
    )
    batch.accumulated_deltas = np.zeros_like(batch.accumulated_deltas)
    batch.steps_accumulated = 0
    return new_gates


def contrastive_value(pair: ContrastPair) -> float:
    """Dissipated-power gap between clamped and free states (diagnostic)."""
    return pair.clamped.dissipated_power - pair.free.dissipated_power
