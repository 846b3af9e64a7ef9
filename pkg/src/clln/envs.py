"""The two benchmark environments and their voltage encodings.

Both environments are stateless services: the caller owns the current
state and passes it to step(). The four-state task is a continuing MDP
whose next state equals the chosen action; the grid task is a 3x3
navigation problem with a large target reward, a faint distance-graded
shaping signal, and a random reset every few steps.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod

import networkx as nx
import numpy as np

from .circuit import Topology

__all__ = [
    "Environment",
    "FourStateMDP",
    "GridNav",
    "fourstate_topology",
    "grid_topology",
    "GRID_ACTIONS",
]

# action index -> (row delta, col delta); output node order follows this
GRID_ACTIONS = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}  # up, down, left, right


class Environment(ABC):
    """Stateless environment contract used by the training loop."""

    state_count: int
    action_count: int
    reset_period: int | None

    @abstractmethod
    def step(self, state, action, rng):
        """Return (next_state, reward)."""

    @abstractmethod
    def encode(self, state):
        """Return input voltages for the paired topology."""

    @abstractmethod
    def reset(self, rng):
        """Return a fresh state."""

    @abstractmethod
    def all_states(self):
        """Enumerate every state, in a fixed order."""


class FourStateMDP(Environment):
    """Four states, four actions, action a always leads to state a.

    Rewards are drawn once per instance from Normal(0.1, 0.1) and a small
    Normal(0, noise_std) observation noise is added on every step.
    """

    state_count = 4
    action_count = 4
    reset_period = None

    ENCODINGS = {
        0: (1.0, 0.0, 1.0, 0.0),
        1: (0.0, 1.0, 0.0, 1.0),
        2: (1.0, 1.0, 0.0, 0.0),
        3: (0.0, 0.0, 1.0, 1.0),
    }

    def __init__(self, table_seed: int, noise_std: float = 0.01):
        self.table_seed = int(table_seed)
        self.noise_std = float(noise_std)
        table = np.random.default_rng(self.table_seed).normal(0.1, 0.1, size=(4, 4))
        table.setflags(write=False)
        self.reward_table = table

    def step(self, state, action, rng):
        if not (0 <= state < 4 and 0 <= action < 4):
            raise ValueError(f"state {state} / action {action} out of range")
        # one draw regardless of noise_std so seeded streams stay aligned
        noise = self.noise_std * rng.standard_normal()
        return action, float(self.reward_table[state, action] + noise)

    def encode(self, state):
        try:
            return list(self.ENCODINGS[state])
        except KeyError:
            raise ValueError(f"invalid state {state}") from None

    def reset(self, rng):
        return 0

    def all_states(self):
        return list(range(4))

    # an environment is its parameters; equality lets configs round-trip
    def __eq__(self, other):
        return (
            type(other) is FourStateMDP
            and other.table_seed == self.table_seed
            and other.noise_std == self.noise_std
        )

    def __hash__(self):
        return hash((FourStateMDP, self.table_seed, self.noise_std))


class GridNav(Environment):
    """3x3 grid, target at (0, 0), moves clamped at the walls.

    Landing on the target earns target_reward; any other landing earns a
    shaping reward graded by Manhattan distance and scaled 5000x smaller
    so it guides exploration without competing with the target. Steps are
    deterministic; the only randomness is the periodic uniform reset.
    """

    state_count = 9
    action_count = 4

    def __init__(self, target_reward: float = 1.0, reset_period: int = 5):
        self.width = 3
        self.height = 3
        self.target = (0, 0)
        self.target_reward = float(target_reward)
        self.shaping_unit = self.target_reward / 5000.0
        self.reset_period = int(reset_period)

    def step(self, state, action, rng=None):
        row, col = state
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"state {state} outside the grid")
        dr, dc = GRID_ACTIONS[action]
        nxt = (row + dr, col + dc)
        if not (0 <= nxt[0] < self.height and 0 <= nxt[1] < self.width):
            nxt = (row, col)
        if nxt == self.target:
            return nxt, self.target_reward
        manhattan = abs(nxt[0] - self.target[0]) + abs(nxt[1] - self.target[1])
        return nxt, self.shaping_unit * (4 - manhattan)

    def encode(self, state):
        row, col = state
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"invalid state {state}")
        return [row / 2, col / 2, 1 - row / 2, 1 - col / 2, 0.0, 1.0, 0.5]

    def reset(self, rng):
        cell = rng.integers(0, 3, size=2)
        return (int(cell[0]), int(cell[1]))

    def all_states(self):
        return [(r, c) for r in range(self.height) for c in range(self.width)]

    def __eq__(self, other):
        return (
            type(other) is GridNav
            and other.target_reward == self.target_reward
            and other.reset_period == self.reset_period
        )

    def __hash__(self):
        return hash((GridNav, self.target_reward, self.reset_period))


def grid_topology() -> Topology:
    """Layered 6-4-4-1 network, dense between consecutive layers.

    Inputs are the six first-layer nodes plus the single last-layer node;
    outputs are the four third-layer nodes, one per action in the
    GRID_ACTIONS order.
    """
    layers = [list(range(0, 6)), list(range(6, 10)), list(range(10, 14)), [14]]
    edges = []
    for upper, lower in zip(layers[:-1], layers[1:]):
        for a in upper:
            for b in lower:
                edges.append((a, b))
    return Topology(
        15,
        tuple(edges),
        input_nodes=(0, 1, 2, 3, 4, 5, 14),
        output_nodes=(10, 11, 12, 13),
    )


def _independent_quad(adjacency, candidates):
    """First 4 mutually non-adjacent nodes from candidates, in index order."""
    for quad in itertools.combinations(candidates, 4):
        if all(b not in adjacency[a] for a, b in itertools.combinations(quad, 2)):
            return quad
    return None


def fourstate_topology(seed: int, max_attempts: int = 100) -> Topology:
    """Random connected 4-regular graph on 16 nodes with 4 inputs and 4
    outputs, each set internally non-adjacent and disjoint from the other.

    Full 8-node independence is essentially never available in these
    graphs, so non-adjacency is enforced within each set only.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        graph = nx.random_regular_graph(4, 16, seed=rng)
        if not nx.is_connected(graph):
            continue
        adjacency = {n: set(graph.neighbors(n)) for n in range(16)}
        inputs = _independent_quad(adjacency, range(16))
        if inputs is None:
            continue
        rest = [n for n in range(16) if n not in inputs]
        outputs = _independent_quad(adjacency, rest)
        if outputs is None:
            continue
        edges = tuple(sorted((min(a, b), max(a, b)) for a, b in graph.edges()))
        return Topology(16, edges, input_nodes=inputs, output_nodes=outputs)
    raise RuntimeError(
        f"no usable 4-regular topology found in {max_attempts} attempts "
        f"from seed {seed}"
    )
