"""Graph-perturbation defenses applied once before training and serving.

EdgeRand flips every upper-triangular adjacency cell independently with
probability 1/(1 + e^eps), the randomized-response rate that achieves
eps-edge-DP.  LapGraph splits the budget 1%/99% between a noisy edge count
and Laplace noise on the cells, then keeps the noisiest-count cells so the
overall density is preserved.  Both touch edges only: node count, features
and labels pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

DEFENSE_KINDS = ("none", "edgerand", "lapgraph")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str = "none"
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense {self.kind!r}; valid: {DEFENSE_KINDS}")
        if self.kind != "none" and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0 for a non-none defense")


def flip_probability(epsilon: float) -> float:
    return 1.0 / (1.0 + np.exp(epsilon))


def _rebuild(graph: Graph, upper: np.ndarray) -> Graph:
    us, vs = np.nonzero(upper)
    edges = list(zip(us.tolist(), vs.tolist()))
    return Graph(graph.features.copy(), edges=edges,
                 labels=None if graph.labels is None else graph.labels.copy(),
                 num_classes=graph.num_classes)


def _upper_adjacency(graph: Graph) -> np.ndarray:
    n = graph.num_nodes
    upper = np.zeros((n, n), dtype=bool)
    for u, v in graph.edge_set():
        upper[u, v] = True
    return upper


def edge_rand(graph: Graph, epsilon: float, seed: int = 0) -> Graph:
    """Randomized response on every potential edge; deterministic under seed."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    upper = _upper_adjacency(graph)
    flips = rng.random((n, n)) < flip_probability(epsilon)
    flips &= np.triu(np.ones((n, n), dtype=bool), k=1)
    return _rebuild(graph, upper ^ flips)


def lap_graph(graph: Graph, epsilon: float, seed: int = 0) -> Graph:
    """Laplace noise on the adjacency cells, keeping a noisy total edge count.

    Budget split: eps1 = 0.01*eps estimates the count, eps2 = 0.99*eps
    perturbs the cells.  Output has exactly the clamped noisy count of edges.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    eps1, eps2 = 0.01 * epsilon, 0.99 * epsilon
    iu = np.triu_indices(n, k=1)
    max_cells = iu[0].shape[0]

    t_noisy = int(round(graph.num_edges + rng.laplace(0.0, 1.0 / eps1)))
    t_noisy = min(max(t_noisy, 0), max_cells)

    upper = _upper_adjacency(graph)
    noisy = upper[iu].astype(np.float64) + rng.laplace(0.0, 1.0 / eps2, size=max_cells)
    keep = np.argsort(-noisy, kind="stable")[:t_noisy]

    new_upper = np.zeros((n, n), dtype=bool)
    new_upper[iu[0][keep], iu[1][keep]] = True
    return _rebuild(graph, new_upper)


def apply_defense(graph: Graph, spec: DefenseSpec | None) -> Graph:
    """Dispatch on the spec; the result is what both trainer and service consume."""
    if spec is None or spec.kind == "none":
        return graph
    if spec.kind == "edgerand":
        return edge_rand(graph, spec.epsilon, spec.seed)
    return lap_graph(graph, spec.epsilon, spec.seed)
