"""Resistor-network model and its electrical equilibrium solver.

A network is a connected graph whose edges are voltage-controlled
resistors (transistors in the triode regime).  Imposing voltages on a
subset of nodes and letting the physics settle computes the network
function: boundary voltages in, equilibrium node voltages out.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GATE_MIN = 1.0
GATE_MAX = 5.5


class CircuitError(Exception):
    """Base class for solver failures."""


class NotConvergedError(CircuitError):
    """Fixed-point iteration exhausted max_iterations.

    Carries the last per-sweep voltage change and KCL residual so the
    caller can tell a near-miss from a divergence.
    """

    def __init__(self, iterations: int, last_change: float, kcl_residual: float):
        self.iterations = iterations
        self.last_change = last_change
        self.kcl_residual = kcl_residual
        super().__init__(
            f"no equilibrium after {iterations} sweeps "
            f"(last voltage change {last_change:.3e} V, KCL residual {kcl_residual:.3e} A)"
        )


class SingularSystemError(CircuitError):
    """The reduced Laplacian block was not invertible."""


@dataclass(frozen=True)
class Topology:
    """Graph of nodes and resistive edges with designated input/output nodes."""

    node_count: int
    edges: tuple[tuple[int, int], ...]
    input_nodes: tuple[int, ...]
    output_nodes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "input_nodes", tuple(int(n) for n in self.input_nodes))
        object.__setattr__(self, "output_nodes", tuple(int(n) for n in self.output_nodes))

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def validate_topology(topology: Topology) -> list[str]:
    """Check topology invariants, returning a list of violations (empty = ok).

    Violations reported: self-loops, duplicate edges (unordered), node
    indices out of range, input/output overlap, disconnected graph.
    """
    violations = []
    n = topology.node_count
    if n < 1:
        violations.append(f"node_count must be positive, got {n}")
        return violations

    seen = set()
    for k, (a, b) in enumerate(topology.edges):
        if a == b:
            violations.append(f"self-loop at edge {k}: ({a}, {b})")
        if not (0 <= a < n and 0 <= b < n):
            violations.append(f"edge {k} index out of range: ({a}, {b})")
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            violations.append(f"duplicate edge {k}: ({a}, {b})")
        seen.add(key)

    for name, nodes in (("input", topology.input_nodes), ("output", topology.output_nodes)):
        for node in nodes:
            if not (0 <= node < n):
                violations.append(f"{name} node {node} out of range")
    overlap = set(topology.input_nodes) & set(topology.output_nodes)
    if overlap:
        violations.append(f"input/output overlap: {sorted(overlap)}")

    # Connectivity over the valid edges (BFS).
    adjacency = [[] for _ in range(n)]
    for a, b in topology.edges:
        if a != b and 0 <= a < n and 0 <= b < n:
            adjacency[a].append(b)
            adjacency[b].append(a)
    reached = {0}
    stack = [0]
    while stack:
        for neighbor in adjacency[stack.pop()]:
            if neighbor not in reached:
                reached.add(neighbor)
                stack.append(neighbor)
    if len(reached) != n:
        violations.append(f"disconnected: reached {len(reached)} of {n} nodes")

    return violations


@dataclass(frozen=True)
class DeviceModel:
    """Per-edge conductance law: a MOSFET-style voltage-controlled resistor.

    In nonlinear mode the conductance depends on the mean of the edge's
    endpoint voltages; linear mode drops that term, making the network an
    ordinary resistor network.  Conductances are floored to keep the
    Laplacian positive definite when the raw law would go nonpositive.
    """

    slope: float = 1.0
    threshold: float = 0.7
    mode: str = "nonlinear"
    conductance_floor: float = 1e-4

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError(f"slope must be positive, got {self.slope}")
        if self.conductance_floor <= 0:
            raise ValueError(f"conductance_floor must be positive, got {self.conductance_floor}")
        if self.mode not in ("nonlinear", "linear"):
            raise ValueError(f"mode must be 'nonlinear' or 'linear', got {self.mode!r}")


@dataclass(frozen=True)
class Boundary:
    """Voltages imposed on a set of nodes: ((node, volts), ...)."""

    constraints: tuple[tuple[int, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "constraints", tuple((int(n), float(v)) for n, v in self.constraints)
        )

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.constraints)

    @property
    def voltages(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.constraints)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9  # max voltage change per sweep, volts
    max_iterations: int = 500
    damping: float = 1.0  # reduce below 1.0 only if sweeps oscillate

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (0 < self.damping <= 1):
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A solved network state.

    Constrained nodes hold their imposed voltages exactly; `kcl_residual`
    is the convergence certificate (max net current into any free node).
    """

    node_voltages: np.ndarray
    edge_drops: np.ndarray
    edge_conductances: np.ndarray
    dissipated_power: float
    kcl_residual: float
    iterations: int
    converged: bool
    floor_activations: int


def conductance(gate_voltage, v_a, v_b, model: DeviceModel):
    """Edge conductance in siemens for the given gate and endpoint voltages.

    Nonlinear mode: max(S * (V_G - V_T - (v_a + v_b) / 2), floor).
    Linear mode omits the endpoint-voltage term.  Scalar or array inputs.
    """
    if model.mode == "nonlinear":
        raw = model.slope * (gate_voltage - model.threshold - (v_a + v_b) / 2.0)
    else:
        raw = model.slope * (np.asarray(gate_voltage) - model.threshold)
    return np.maximum(raw, model.conductance_floor)


@lru_cache(maxsize=256)
def _edge_arrays(edges: tuple[tuple[int, int], ...]):
    a = np.fromiter((e[0] for e in edges), dtype=np.intp, count=len(edges))
    b = np.fromiter((e[1] for e in edges), dtype=np.intp, count=len(edges))
    return a, b


@lru_cache(maxsize=256)
def _partition(node_count: int, constrained: tuple[int, ...]):
    mask = np.zeros(node_count, dtype=bool)
    mask[list(constrained)] = True
    free = np.flatnonzero(~mask)
    cons = np.asarray(constrained, dtype=np.intp)
    return free, cons, np.ix_(free, free), np.ix_(free, cons)


@lru_cache(maxsize=256)
def _reduced_system(edges, node_count: int, constrained: tuple[int, ...]):
    """Scatter indices for assembling the Dirichlet-reduced system directly.

    Edges with both ends free fill the off-diagonal block; every free
    endpoint collects its edge conductance on the diagonal; edges crossing
    into the constrained set feed the right-hand side weighted by the
    constrained voltage. Cached per (edges, boundary-node) structure since
    the training loop reuses the same handful of boundaries throughout.
    """
    a, b = _edge_arrays(edges)
    mask = np.zeros(node_count, dtype=bool)
    mask[list(constrained)] = True
    free = np.flatnonzero(~mask)
    pos = np.full(node_count, -1)
    pos[free] = np.arange(free.size)
    cpos = np.full(node_count, -1)
    cpos[list(constrained)] = np.arange(len(constrained))

    fa, fb = pos[a], pos[b]
    a_free, b_free = fa >= 0, fb >= 0
    ff_edges = np.flatnonzero(a_free & b_free)
    # diagonal and rhs keep a-side entries before b-side entries so the
    # accumulation order matches the previous full-Laplacian assembly
    diag_edges = np.concatenate([np.flatnonzero(a_free), np.flatnonzero(b_free)])
    diag_pos = np.concatenate([fa[a_free], fb[b_free]])
    a_only = a_free & ~b_free
    b_only = b_free & ~a_free
    rhs_edges = np.concatenate([np.flatnonzero(a_only), np.flatnonzero(b_only)])
    rhs_pos = np.concatenate([fa[a_only], fb[b_only]])
    rhs_cons = np.concatenate([cpos[b[a_only]], cpos[a[b_only]]])
    return (
        free,
        ff_edges,
        fa[ff_edges],
        fb[ff_edges],
        diag_edges,
        diag_pos,
        rhs_edges,
        rhs_pos,
        rhs_cons,
    )


def _check_boundary(topology: Topology, boundary: Boundary) -> None:
    if not boundary.constraints:
        raise ValueError("boundary must constrain at least one node")
    nodes = boundary.nodes
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"duplicate boundary nodes: {nodes}")
    for node in nodes:
        if not (0 <= node < topology.node_count):
            raise ValueError(f"boundary node {node} out of range")


def _edge_conductances(gates, v, a, b, model):
    if model.mode == "nonlinear":
        raw = model.slope * (gates - model.threshold - (v[a] + v[b]) / 2.0)
    else:
        raw = model.slope * (gates - model.threshold)
    return np.maximum(raw, model.conductance_floor), raw


def solve_equilibrium(
    topology: Topology,
    gates: np.ndarray,
    boundary: Boundary,
    model: DeviceModel,
    cfg: SolverConfig = SolverConfig(),
) -> Equilibrium:
    """Solve for the node voltages that satisfy KCL under the boundary.

    Damped fixed-point scheme: freeze conductances at the current voltage
    estimate, assemble the conductance-weighted Laplacian, solve the
    Dirichlet-reduced linear system for the free nodes, repeat until the
    max voltage change per sweep drops below cfg.tolerance.  Linear-mode
    conductances are voltage-independent, so the first sweep is exact.

    Raises NotConvergedError when max_iterations is exhausted and
    SingularSystemError if the reduced Laplacian cannot be factorized.
    """
    _check_boundary(topology, boundary)
    gates = np.asarray(gates, dtype=float)
    if gates.shape != (topology.edge_count,):
        raise ValueError(f"expected {topology.edge_count} gate voltages, got {gates.shape}")

    n = topology.node_count
    a, b = _edge_arrays(topology.edges)
    (
        free,
        ff_edges,
        ff_i,
        ff_j,
        diag_edges,
        diag_pos,
        rhs_edges,
        rhs_pos,
        rhs_cons,
    ) = _reduced_system(topology.edges, n, boundary.nodes)
    v_cons = np.asarray(boundary.voltages, dtype=float)

    # Fixed initial guess (mean of boundary values) so identical inputs
    # always produce bit-identical equilibria.
    v = np.full(n, v_cons.mean())
    v[list(boundary.nodes)] = v_cons

    slope, threshold, floor = model.slope, model.threshold, model.conductance_floor
    nonlinear = model.mode == "nonlinear"
    if not nonlinear:
        G_fixed = np.maximum(slope * (gates - threshold), floor)

    iterations = 0
    nf = free.size
    if nf:
        rhs_vc = v_cons[rhs_cons]
        eye = np.arange(nf)
        v_free = v[free]
        last_change = np.inf
        for sweep in range(cfg.max_iterations):
            if nonlinear:
                G = np.maximum(
                    slope * (gates - threshold - (v[a] + v[b]) / 2.0), floor
                )
            else:
                G = G_fixed

            A = np.zeros((nf, nf))
            A[ff_i, ff_j] = -G[ff_edges]
            A[ff_j, ff_i] = -G[ff_edges]
            A[eye, eye] = np.bincount(
                diag_pos, weights=G[diag_edges], minlength=nf
            )
            rhs = np.bincount(
                rhs_pos, weights=G[rhs_edges] * rhs_vc, minlength=nf
            )

            try:
                solved = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError(f"reduced Laplacian singular at sweep {sweep}") from exc

            new_free = v_free + cfg.damping * (solved - v_free)
            last_change = float(np.abs(new_free - v_free).max())
            v_free = new_free
            v[free] = new_free
            iterations = sweep + 1

            if model.mode == "linear" and cfg.damping == 1.0:
                break  # conductances fixed; the first solve is the fixed point
            if last_change < cfg.tolerance:
                break
        else:
            residual = kcl_residual(topology, gates, model, v, boundary)
            raise NotConvergedError(iterations, last_change, residual)

    G, raw = _edge_conductances(gates, v, a, b, model)
    drops = v[a] - v[b]
    return Equilibrium(
        node_voltages=v,
        edge_drops=drops,
        edge_conductances=G,
        dissipated_power=float(np.dot(drops * drops, G)),
        kcl_residual=kcl_residual(topology, gates, model, v, boundary),
        iterations=iterations,
        converged=True,
        floor_activations=int(np.count_nonzero(raw < model.conductance_floor)),
    )


def dissipated_power(eq: Equilibrium) -> float:
    """Total power in watts: sum over edges of drop^2 * conductance."""
    return float(np.dot(eq.edge_drops * eq.edge_drops, eq.edge_conductances))


def network_function(
    topology: Topology,
    gates: np.ndarray,
    model: DeviceModel,
    cfg: SolverConfig,
    input_voltages,
) -> np.ndarray:
    """Impose `input_voltages` on the input nodes and read the output nodes."""
    inputs = tuple(topology.input_nodes)
    if len(input_voltages) != len(inputs):
        raise ValueError(
            f"expected {len(inputs)} input voltages, got {len(input_voltages)}"
        )
    boundary = Boundary(tuple(zip(inputs, input_voltages)))
    eq = solve_equilibrium(topology, gates, boundary, model, cfg)
    return eq.node_voltages[list(topology.output_nodes)]


def kcl_residual(
    topology: Topology,
    gates: np.ndarray,
    model: DeviceModel,
    node_voltages: np.ndarray,
    boundary: Boundary,
) -> float:
    """Max |net current| in amperes over free nodes, from the device law.

    Independent convergence certificate: recomputes conductances from the
    given voltages rather than trusting any solver state.
    """
    a, b = _edge_arrays(topology.edges)
    v = np.asarray(node_voltages, dtype=float)
    gates = np.asarray(gates, dtype=float)
    G, _ = _edge_conductances(gates, v, a, b, model)
    current = G * (v[a] - v[b])
    net = np.zeros(topology.node_count)
    np.add.at(net, a, -current)
    np.add.at(net, b, current)
    free, _, _, _ = _partition(topology.node_count, boundary.nodes)
    if free.size == 0:
        return 0.0
    return float(np.max(np.abs(net[free])))
