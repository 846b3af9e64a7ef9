"""Numerical verification suite behind the `verify` subcommand.

Four checks, each a seeded sweep over random networks:

  solver-certificate     nonlinear solves satisfy current conservation,
                         recomputed independently of the solver state, and
                         a symmetric linear divider splits exactly in half
  gradient-fidelity      linear-mode rule deltas equal minus alpha times
                         the central finite-difference gradient of the
                         clamped-minus-free power gap, per edge, with the
                         clamp targets held fixed during perturbation
  contrastive-nonnegativity
                         the clamped-minus-free power gap is never below
                         -1e-12 (clamping restricts the same minimization)
  nonlinear-alignment    in nonlinear mode the rule is only approximately
                         a gradient; require directional agreement
                         (cosine > 0.9) with gates held at 2 V or above,
                         away from the conductance floor where the power
                         gap stops acting as a potential

The deep level multiplies every sample count by 10. `gradient-fidelity`
accepts an injectable delta function so tests can prove the check catches
a sign-flipped rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import (
    Boundary,
    DeviceModel,
    NotConvergedError,
    SolverConfig,
    Topology,
    kcl_residual,
    solve_equilibrium,
)
from .learning import contrast, contrastive_value, local_deltas

LEVELS = {"default": 1, "deep": 10}

_LINEAR = DeviceModel(mode="linear")
_NONLINEAR = DeviceModel()
_CFG = SolverConfig()
_FD_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def sample_network(rng, n_nodes=None, gate_low=1.2, gate_high=3.0):
    """Random connected graph (spanning tree plus extras) with one input
    node and one to three output nodes, gates clear of the floor."""
    if n_nodes is None:
        n_nodes = int(rng.integers(5, 21))
    edges = set()
    order = rng.permutation(n_nodes)
    for i in range(1, n_nodes):
        a = int(order[int(rng.integers(0, i))])
        b = int(order[i])
        edges.add((min(a, b), max(a, b)))
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if (a, b) not in edges and rng.random() < 0.3:
                edges.add((a, b))
    edges = tuple(sorted(edges))
    n_outputs = int(rng.integers(1, min(4, n_nodes - 1)))
    outputs = tuple(range(n_nodes - n_outputs, n_nodes))
    topology = Topology(n_nodes, edges, input_nodes=(0,), output_nodes=outputs)
    gates = rng.uniform(gate_low, gate_high, size=len(edges))
    return topology, gates


def _power_gap(topology, gates, model, inputs, targets):
    """P_clamped - P_free with the clamp targets supplied, not re-nudged."""
    free_boundary = Boundary(tuple(zip(topology.input_nodes, inputs)))
    clamped_boundary = Boundary(
        free_boundary.constraints + tuple(zip(topology.output_nodes, targets))
    )
    free = solve_equilibrium(topology, gates, free_boundary, model, _CFG)
    clamped = solve_equilibrium(topology, gates, clamped_boundary, model, _CFG)
    return clamped.dissipated_power - free.dissipated_power


def _fd_gradient(topology, gates, model, inputs, targets):
    grad = np.zeros(topology.edge_count)
    for i in range(topology.edge_count):
        bumped = gates.copy()
        bumped[i] += _FD_STEP
        up = _power_gap(topology, bumped, model, inputs, targets)
        bumped[i] -= 2 * _FD_STEP
        down = _power_gap(topology, bumped, model, inputs, targets)
        grad[i] = (up - down) / (2 * _FD_STEP)
    return grad


def check_solver_certificate(factor: int = 1, seed: int = 0) -> CheckResult:
    """Nonlinear solves conserve current; the linear divider splits 0.5 V."""
    n_cases = 100 * factor
    rng = np.random.default_rng(seed)
    worst_kcl = 0.0
    worst_iters = 0
    for case in range(n_cases):
        topology, _ = sample_network(rng)
        gates = rng.uniform(1.0, 5.5, topology.edge_count)
        n_fixed = int(rng.integers(1, max(2, topology.node_count // 2)))
        nodes = rng.choice(topology.node_count, size=n_fixed, replace=False)
        volts = rng.uniform(0.0, 1.0, size=n_fixed)
        boundary = Boundary(tuple(zip(nodes.tolist(), volts.tolist())))
        try:
            eq = solve_equilibrium(topology, gates, boundary, _NONLINEAR, _CFG)
        except NotConvergedError as exc:
            return CheckResult(
                "solver-certificate",
                False,
                f"case {case}: no convergence ({exc})",
            )
        residual = kcl_residual(
            topology, gates, _NONLINEAR, eq.node_voltages, boundary
        )
        worst_kcl = max(worst_kcl, residual)
        worst_iters = max(worst_iters, eq.iterations)
        if residual >= 1e-8 or eq.iterations > 500:
            return CheckResult(
                "solver-certificate",
                False,
                f"case {case}: kcl {residual:.2e}, {eq.iterations} iterations",
            )

    divider = Topology(3, ((0, 1), (1, 2)), input_nodes=(0, 2), output_nodes=(1,))
    eq = solve_equilibrium(
        divider,
        np.array([2.0, 2.0]),
        Boundary(((0, 0.0), (2, 1.0))),
        _LINEAR,
        _CFG,
    )
    divider_err = abs(eq.node_voltages[1] - 0.5)
    passed = divider_err < 1e-12
    return CheckResult(
        "solver-certificate",
        passed,
        f"{n_cases} nonlinear solves: max kcl {worst_kcl:.2e} A, "
        f"max iterations {worst_iters}; divider error {divider_err:.1e} V",
    )


def check_gradient_fidelity(
    factor: int = 1, seed: int = 0, delta_fn=local_deltas
) -> CheckResult:
    """Linear-mode deltas match -alpha * FD gradient on every edge."""
    n_networks = 10 * factor
    alpha = 0.02
    worst_rel = 0.0
    n_edges = 0
    for case in range(n_networks):
        rng = np.random.default_rng(seed + case)
        topology, gates = sample_network(rng)
        inputs = [float(rng.uniform(0.0, 1.0))]
        labels = rng.uniform(0.0, 1.0, len(topology.output_nodes)).tolist()
        pair = contrast(topology, gates, _LINEAR, _CFG, inputs, labels, eta=0.1)
        if pair.free.floor_activations or pair.clamped.floor_activations:
            return CheckResult(
                "gradient-fidelity",
                False,
                f"case {case}: floored edges in a regime built to avoid them",
            )
        deltas = delta_fn(pair, alpha)
        grad = _fd_gradient(
            topology, gates, _LINEAR, inputs, list(pair.nudged_targets)
        )
        expected = -alpha * grad
        # rel 1e-4 with an absolute floor of 1e-10 on the difference; FD
        # cannot resolve below roundoff/step on near-zero-drop edges
        tol = np.maximum(1e-4 * np.abs(expected), 1e-10)
        ratio = np.abs(deltas - expected) / tol
        worst_rel = max(worst_rel, float(ratio.max()))
        n_edges += topology.edge_count
        if ratio.max() >= 1.0:
            edge = int(ratio.argmax())
            return CheckResult(
                "gradient-fidelity",
                False,
                f"case {case} edge {edge}: delta {deltas[edge]:.6e} vs "
                f"-alpha*grad {expected[edge]:.6e} "
                f"({ratio.max():.2f}x tolerance)",
            )
    return CheckResult(
        "gradient-fidelity",
        True,
        f"{n_networks} linear networks, {n_edges} edges: worst edge at "
        f"{worst_rel:.3f}x tolerance (rel 1e-4, abs 1e-10)",
    )


def check_contrastive_nonnegativity(factor: int = 1, seed: int = 0) -> CheckResult:
    """Clamping constrains the same power minimization, so the gap >= 0."""
    n_pairs = 100 * factor
    rng = np.random.default_rng(seed)
    worst = np.inf
    for case in range(n_pairs):
        topology, gates = sample_network(rng)
        inputs = [float(rng.uniform(0.0, 1.0))]
        labels = rng.uniform(0.0, 1.0, len(topology.output_nodes)).tolist()
        eta = float(rng.uniform(0.05, 1.0))
        pair = contrast(topology, gates, _LINEAR, _CFG, inputs, labels, eta=eta)
        gap = contrastive_value(pair)
        worst = min(worst, gap)
        if gap < -1e-12:
            return CheckResult(
                "contrastive-nonnegativity",
                False,
                f"case {case}: gap {gap:.3e} below -1e-12",
            )
    return CheckResult(
        "contrastive-nonnegativity",
        True,
        f"{n_pairs} linear pairs: min gap {worst:.3e} (tolerance -1e-12)",
    )


def check_nonlinear_alignment(
    factor: int = 1, seed: int = 0, delta_fn=local_deltas
) -> CheckResult:
    """Rule deltas point along -grad of the power gap in nonlinear mode."""
    n_networks = 10 * factor
    worst_cosine = 1.0
    for case in range(n_networks):
        rng = np.random.default_rng(seed + case)
        topology, _ = sample_network(rng, n_nodes=10)
        gates = rng.uniform(2.0, 4.0, topology.edge_count)
        inputs = [float(rng.uniform(0.0, 1.0))]
        labels = rng.uniform(0.0, 1.0, len(topology.output_nodes)).tolist()
        pair = contrast(topology, gates, _NONLINEAR, _CFG, inputs, labels, eta=0.1)
        deltas = delta_fn(pair, 1.0)
        grad = _fd_gradient(
            topology, gates, _NONLINEAR, inputs, list(pair.nudged_targets)
        )
        denom = np.linalg.norm(deltas) * np.linalg.norm(grad)
        cosine = float(np.dot(deltas, -grad) / denom) if denom > 0 else 1.0
        worst_cosine = min(worst_cosine, cosine)
        if cosine <= 0.9:
            return CheckResult(
                "nonlinear-alignment",
                False,
                f"case {case}: cosine {cosine:.3f} at or below 0.9",
            )
    return CheckResult(
        "nonlinear-alignment",
        True,
        f"{n_networks} nonlinear networks: min cosine {worst_cosine:.3f}",
    )


def run_checks(level: str = "default", delta_fn=local_deltas) -> list:
    """All four checks at the given level, in a fixed order."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; choose from {sorted(LEVELS)}")
    factor = LEVELS[level]
    return [
        check_solver_certificate(factor),
        check_gradient_fidelity(factor, delta_fn=delta_fn),
        check_contrastive_nonnegativity(factor),
        check_nonlinear_alignment(factor, delta_fn=delta_fn),
    ]


def format_results(results) -> str:
    """Fixed-width pass/fail table, one line per check."""
    width = max(len(r.name) for r in results)
    lines = [
        f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}"
        for r in results
    ]
    return "\n".join(lines)
