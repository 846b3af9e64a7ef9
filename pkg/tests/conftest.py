"""Shared helpers: seeded random network instances for property tests."""

import numpy as np

from clln.circuit import Boundary, Topology


def random_network(rng, n_nodes=None, extra_edge_prob=0.3):
    """Random connected graph: a random spanning tree plus extra edges."""
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
            if (a, b) not in edges and rng.random() < extra_edge_prob:
                edges.add((a, b))
    edges = tuple(sorted(edges))
    topology = Topology(n_nodes, edges, input_nodes=(0,), output_nodes=(n_nodes - 1,))
    gates = rng.uniform(1.2, 3.0, size=len(edges))
    return topology, gates


def random_boundary(rng, n_nodes, n_constrained=None):
    if n_constrained is None:
        n_constrained = int(rng.integers(1, max(2, n_nodes // 2)))
    nodes = rng.choice(n_nodes, size=n_constrained, replace=False)
    volts = rng.uniform(0.0, 1.0, size=n_constrained)
    return Boundary(tuple(zip(nodes.tolist(), volts.tolist())))
