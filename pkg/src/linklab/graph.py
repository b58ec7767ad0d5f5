"""Sparse undirected graph with node features, labels and snapshot isolation.

Adjacency is kept as one sorted int64 neighbor array per node (CSR-style,
no duplicates, no stored self-loops; layers add their own self term).
Mutations match the adversary capabilities: add nodes, add edges, overwrite
feature rows.  Snapshots capture the full state so attack code can restore
the serving graph between candidate pairs.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np


class GraphFormatError(ValueError):
    """Malformed input file (message carries the offending line number)."""


class GraphValidationError(ValueError):
    """Structurally invalid graph data (dangling ids, shape mismatches)."""


@dataclass(frozen=True)
class Snapshot:
    """Opaque copy of a graph's state; see :func:`snapshot` / :func:`restore`."""

    _num_nodes: int
    _neighbors: tuple
    _features: np.ndarray
    _labels: np.ndarray | None
    _num_classes: int


class Graph:
    """Mutable undirected graph over dense integer node ids."""

    def __init__(self, features, edges=(), labels=None, num_classes=None):
        features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
        if features.ndim != 2:
            raise GraphValidationError("features must be a 2-D (nodes x dims) array")
        self.features = features
        n = features.shape[0]
        self._neighbors: list[np.ndarray] = [
            np.empty(0, dtype=np.int64) for _ in range(n)
        ]
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise GraphValidationError("labels must have one entry per node")
        self.labels = labels
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels is not None and n else 0
        self.num_classes = num_classes
        self.version = 0
        self._csr_cache = None
        self._csr_self_cache = None
        for u, v in edges:
            self.add_edge(int(u), int(v))

    # -- basic accessors ----------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self._neighbors) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self._neighbors[v]

    def degree(self, v: int) -> int:
        return len(self._neighbors[v])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._neighbors], dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        arr = self._neighbors[u]
        i = np.searchsorted(arr, v)
        return i < len(arr) and arr[i] == v

    def edge_set(self) -> set:
        return {(u, int(v)) for u in range(self.num_nodes)
                for v in self._neighbors[u] if u < v}

    def _check_node(self, v: int) -> None:
        if not 0 <= v < self.num_nodes:
            raise GraphValidationError(f"node id {v} out of range [0, {self.num_nodes})")

    # -- mutations (adversary capabilities) ---------------------------------

    def _touch(self) -> None:
        self.version += 1
        self._csr_cache = None
        self._csr_self_cache = None

    def add_node(self, features) -> int:
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.feature_dim,):
            raise GraphValidationError(
                f"feature vector has length {features.shape}, expected ({self.feature_dim},)"
            )
        self.features = np.ascontiguousarray(np.vstack([self.features, features[None, :]]))
        self._neighbors.append(np.empty(0, dtype=np.int64))
        if self.labels is not None:
            self.labels = np.append(self.labels, -1)
        self._touch()
        return self.num_nodes - 1

    def add_edge(self, u: int, v: int) -> None:
        self._check_node(u)
        self._check_node(v)
        if u == v:
            raise GraphValidationError(f"self-loop ({u},{u}) not allowed")
        if self.has_edge(u, v):
            return
        for a, b in ((u, v), (v, u)):
            arr = self._neighbors[a]
            i = int(np.searchsorted(arr, b))
            self._neighbors[a] = np.insert(arr, i, b)
        self._touch()

    def set_features(self, v: int, features) -> None:
        self._check_node(v)
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.feature_dim,):
            raise GraphValidationError(
                f"feature vector has length {features.shape}, expected ({self.feature_dim},)"
            )
        self.features = self.features.copy()
        self.features[v] = features
        self._touch()

    # -- CSR views (cached per version) --------------------------------------

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) over the plain neighbor lists."""
        if self._csr_cache is None:
            degs = self.degrees()
            indptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
            np.cumsum(degs, out=indptr[1:])
            indices = (np.concatenate(self._neighbors)
                       if self.num_nodes and indptr[-1] else np.empty(0, dtype=np.int64))
            self._csr_cache = (indptr, indices.astype(np.int64, copy=False))
        return self._csr_cache

    def csr_with_self(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) with v inserted into its own sorted segment."""
        if self._csr_self_cache is None:
            n = self.num_nodes
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(self.degrees() + 1, out=indptr[1:])
            segments = []
            for v in range(n):
                arr = self._neighbors[v]
                segments.append(np.insert(arr, int(np.searchsorted(arr, v)), v))
            indices = (np.concatenate(segments) if n else np.empty(0, dtype=np.int64))
            self._csr_self_cache = (indptr, indices.astype(np.int64, copy=False))
        return self._csr_self_cache

    def copy(self) -> "Graph":
        g = Graph.__new__(Graph)
        g.features = self.features.copy()
        g._neighbors = [a.copy() for a in self._neighbors]
        g.labels = None if self.labels is None else self.labels.copy()
        g.num_classes = self.num_classes
        g.version = 0
        g._csr_cache = None
        g._csr_self_cache = None
        return g


def graphs_equal(a: Graph, b: Graph) -> bool:
    if a.num_nodes != b.num_nodes or a.num_classes != b.num_classes:
        return False
    if a.features.shape != b.features.shape:
        return False
    if a.features.tobytes() != b.features.tobytes():
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    if a.labels is not None and not np.array_equal(a.labels, b.labels):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a._neighbors, b._neighbors))


def snapshot(graph: Graph) -> Snapshot:
    return Snapshot(
        _num_nodes=graph.num_nodes,
        _neighbors=tuple(a.copy() for a in graph._neighbors),
        _features=graph.features.copy(),
        _labels=None if graph.labels is None else graph.labels.copy(),
        _num_classes=graph.num_classes,
    )


def restore(graph: Graph, snap: Snapshot) -> None:
    """Revert node count, edges, features and labels to the captured state."""
    graph.features = snap._features.copy()
    graph._neighbors = [a.copy() for a in snap._neighbors]
    graph.labels = None if snap._labels is None else snap._labels.copy()
    graph.num_classes = snap._num_classes
    graph._touch()


# ---------------------------------------------------------------------------
# traversal
# ---------------------------------------------------------------------------

def bfs_distances(graph: Graph, v: int) -> np.ndarray:
    """Shortest-path hop counts from v; unreachable nodes get -1."""
    graph._check_node(v)
    dist = np.full(graph.num_nodes, -1, dtype=np.int64)
    dist[v] = 0
    frontier = [v]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in graph._neighbors[u]:
                if dist[w] < 0:
                    dist[w] = d
                    nxt.append(int(w))
        frontier = nxt
    return dist


def k_hop_neighbors(graph: Graph, v: int, k: int) -> set:
    """Nodes at shortest-path distance exactly k from v (v excluded)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    dist = bfs_distances(graph, v)
    return set(np.flatnonzero(dist == k).tolist())


# ---------------------------------------------------------------------------
# file loaders / writers
# ---------------------------------------------------------------------------
#
# Edge file:    one edge per line, two whitespace-separated decimal node ids;
#               '#' starts a comment line.
# Feature file: CSV, first column node id, remaining columns real values;
#               optional header row (detected by a non-numeric first cell).
# Label file:   CSV "node_id,label", optional header detected the same way.

def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _read_feature_csv(path) -> np.ndarray:
    rows = {}
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue  # header
            try:
                node = int(row[0])
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise GraphFormatError(f"{path}: line {lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise GraphFormatError(
                    f"{path}: line {lineno}: expected {width} feature values, got {len(values)}"
                )
            if node in rows:
                raise GraphFormatError(f"{path}: line {lineno}: duplicate node id {node}")
            rows[node] = values
    if not rows:
        raise GraphFormatError(f"{path}: no feature rows found")
    n = len(rows)
    if set(rows) != set(range(n)):
        raise GraphValidationError(
            f"{path}: node ids must be exactly 0..{n - 1} (dense)"
        )
    return np.array([rows[i] for i in range(n)], dtype=np.float64)


def _read_label_csv(path, num_nodes: int) -> np.ndarray:
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue
            if len(row) != 2:
                raise GraphFormatError(
                    f"{path}: line {lineno}: expected 'node_id,label'"
                )
            try:
                node, label = int(row[0]), int(row[1])
            except ValueError as exc:
                raise GraphFormatError(f"{path}: line {lineno}: {exc}") from None
            if not 0 <= node < num_nodes:
                raise GraphValidationError(
                    f"{path}: line {lineno}: node id {node} out of range"
                )
            labels[node] = label
    return labels


def _read_edge_file(path) -> tuple[list, int]:
    edges = []
    self_loops = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(
                    f"{path}: line {lineno}: expected two node ids, got {len(parts)} tokens"
                )
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(
                    f"{path}: line {lineno}: node ids must be decimal integers"
                ) from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}: line {lineno}: negative node id")
            if u == v:
                self_loops += 1
                continue
            edges.append((u, v))
    return edges, self_loops


def load_graph(edges_path, features_path, labels_path=None) -> Graph:
    """Build a Graph from an edge list plus feature (and optional label) CSVs.

    Duplicate and reversed edge lines are deduplicated; self-loop lines are
    dropped (a warning reports how many).  Edges referencing node ids absent
    from the feature file raise :class:`GraphValidationError`.
    """
    features = _read_feature_csv(features_path)
    n = features.shape[0]
    raw_edges, self_loops = _read_edge_file(edges_path)
    if self_loops:
        warnings.warn(f"{edges_path}: dropped {self_loops} self-loop line(s)")
    dedup = set()
    for u, v in raw_edges:
        if u >= n or v >= n:
            raise GraphValidationError(
                f"{edges_path}: edge ({u},{v}) references a node id >= {n}"
            )
        dedup.add((min(u, v), max(u, v)))
    labels = _read_label_csv(labels_path, n) if labels_path is not None else None
    return Graph(features, edges=sorted(dedup), labels=labels)


def write_graph(graph: Graph, edges_path, features_path, labels_path=None) -> None:
    with open(edges_path, "w") as fh:
        fh.write("# u v\n")
        for u, v in sorted(graph.edge_set()):
            fh.write(f"{u} {v}\n")
    with open(features_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for v in range(graph.num_nodes):
            writer.writerow([v] + [repr(float(x)) for x in graph.features[v]])
    if labels_path is not None and graph.labels is not None:
        with open(labels_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for v in range(graph.num_nodes):
                writer.writerow([v, int(graph.labels[v])])


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

def generate_sbm(blocks, nodes_per_block, p_in, p_out, feature_dim,
                 feature_noise=0.0, seed=0) -> Graph:
    """Stochastic-block-model graph with block labels and noisy one-hot features.

    Each node's label is its block; its features are the block's one-hot
    prototype (index block % feature_dim) plus N(0, feature_noise) noise.
    Deterministic under a fixed seed.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise ValueError("blocks and nodes_per_block must be >= 1")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError("require 0 <= p_out < p_in <= 1")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    n = blocks * nodes_per_block
    block_of = np.repeat(np.arange(blocks), nodes_per_block)

    features = rng.normal(0.0, feature_noise, size=(n, feature_dim)) if feature_noise > 0 \
        else np.zeros((n, feature_dim))
    features[np.arange(n), block_of % feature_dim] += 1.0

    edges = []
    for u in range(n):
        p_row = np.where(block_of[u + 1:] == block_of[u], p_in, p_out)
        hits = np.flatnonzero(rng.random(n - u - 1) < p_row)
        edges.extend((u, u + 1 + int(v)) for v in hits)

    return Graph(features, edges=edges, labels=block_of)
