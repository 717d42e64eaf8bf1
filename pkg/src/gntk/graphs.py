"""Graph construction, adjacency normalization, and train/test splits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "GraphSpec",
    "FeatureMoment",
    "TrainSplit",
    "build_ring_graph",
    "normalize_adjacency",
    "identity_features",
    "figure1_split",
    "graph_from_dict",
    "load_graph_json",
    "induced_subgraph",
    "FIGURE1_TRAIN_COORDS",
]

NORMALIZATION_MODES = ("none", "symmetric", "row")

# Nominal x-coordinates of the six training nodes of the bundled ring demo.
FIGURE1_TRAIN_COORDS = (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5)


@dataclass(frozen=True, eq=False)
class GraphSpec:
    """A graph held as a dense (possibly normalized) adjacency matrix.

    ``coords`` is optional per-node plotting metadata; none of the kernel
    math consumes it.
    """

    n_nodes: int
    adjacency: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if self.n_nodes < 1 or self.n_nodes != a.shape[0]:
            raise ValueError("n_nodes must be >= 1 and match the adjacency shape")
        object.__setattr__(self, "adjacency", a)
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float)
            if c.shape != (self.n_nodes,):
                raise ValueError("coords must be one value per node")
            object.__setattr__(self, "coords", c)

    @cached_property
    def neighborhoods(self) -> tuple[np.ndarray, ...]:
        """Nonzero support of each adjacency row."""
        return tuple(np.flatnonzero(self.adjacency[x]) for x in range(self.n_nodes))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighborhoods])


@dataclass(frozen=True, eq=False)
class FeatureMoment:
    """Second raw moment of the input features, one symmetric PSD matrix."""

    c0: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c0, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("feature moment must be a square matrix")
        if not np.allclose(c, c.T, atol=1e-10, rtol=0.0):
            raise ValueError("feature moment must be symmetric")
        if np.linalg.eigvalsh(0.5 * (c + c.T)).min() < -1e-10:
            raise ValueError("feature moment must be positive semi-definite")
        object.__setattr__(self, "c0", c)


@dataclass(frozen=True, eq=False)
class TrainSplit:
    """Partition of the node set into training nodes (with targets) and the rest."""

    train_idx: np.ndarray
    rest_idx: np.ndarray
    y_b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.train_idx, dtype=int)
        c = np.asarray(self.rest_idx, dtype=int)
        y = np.asarray(self.y_b, dtype=float)
        if b.size < 1:
            raise ValueError("training set must contain at least one node")
        if y.shape != (b.size,):
            raise ValueError("y_b must hold one target per training node")
        n = b.size + c.size
        union = np.concatenate([b, c])
        if np.intersect1d(b, c).size or np.unique(union).size != n:
            raise ValueError("train and rest indices must be disjoint and exhaustive")
        if union.min() < 0 or union.max() != n - 1:
            raise ValueError("indices must cover 0..n-1")
        object.__setattr__(self, "train_idx", b)
        object.__setattr__(self, "rest_idx", c)
        object.__setattr__(self, "y_b", y)

    @property
    def n_nodes(self) -> int:
        return self.train_idx.size + self.rest_idx.size


def build_ring_graph(n_nodes: int = 100, threshold: float = 0.9) -> GraphSpec:
    """Ring of equispaced nodes on (-pi, pi], joined when cos(x_i - x_j) >= threshold.

    Self-loops are included (cos 0 = 1).  No normalization is applied.
    """
    j = np.arange(1, n_nodes + 1, dtype=float)
    coords = (2.0 * j / n_nodes - 1.0) * np.pi
    diff = coords[:, None] - coords[None, :]
    adjacency = (np.cos(diff) >= threshold).astype(float)
    return GraphSpec(n_nodes=n_nodes, adjacency=adjacency, coords=coords)


def normalize_adjacency(raw: np.ndarray, mode: str = "none") -> np.ndarray:
    """Apply degree normalization to a raw nonnegative adjacency matrix.

    Modes: ``none`` (copy), ``symmetric`` (D^-1/2 A D^-1/2), ``row`` (D^-1 A).
    Zero-degree rows are left as zero rows.
    """
    a = np.asarray(raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(a < 0):
        raise ValueError("adjacency must be nonnegative")
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "none":
        return a.copy()
    deg = a.sum(axis=1)
    nz = deg > 0
    if mode == "row":
        inv = np.zeros_like(deg)
        inv[nz] = 1.0 / deg[nz]
        return inv[:, None] * a
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def identity_features(n: int) -> FeatureMoment:
    """Identity input features: second moment (1/n) * I."""
    if n < 1:
        raise ValueError("need at least one node")
    return FeatureMoment(np.eye(n) / float(n))


def figure1_split(graph: GraphSpec | None = None) -> TrainSplit:
    """Six training nodes of the ring demo, targets from sin(pi/2 x + pi/4).

    Each nominal training coordinate is mapped to the nearest graph node;
    targets are evaluated at the nominal coordinates.
    """
    if graph is None:
        graph = build_ring_graph()
    if graph.coords is None:
        raise ValueError("graph has no node coordinates")
    train_idx = []
    for xb in FIGURE1_TRAIN_COORDS:
        train_idx.append(int(np.argmin(np.abs(graph.coords - xb))))
    xb = np.asarray(FIGURE1_TRAIN_COORDS, dtype=float)
    y_b = np.sin(0.5 * np.pi * xb + 0.25 * np.pi)
    b = np.asarray(train_idx, dtype=int)
    rest = np.setdiff1d(np.arange(graph.n_nodes), b)
    return TrainSplit(train_idx=b, rest_idx=rest, y_b=y_b)


def graph_from_dict(spec: dict) -> GraphSpec:
    """Build a graph from an edge-list mapping.

    Expected keys: ``n`` (node count), ``edges`` (0-based [i, j] pairs,
    undirected edges are duplicated automatically), ``normalization``.
    The builtin key ``{"builtin": "ring100"}`` bypasses the edge list.
    """
    if spec.get("builtin") == "ring100":
        return build_ring_graph()
    if "builtin" in spec:
        raise ValueError(f"unknown builtin graph {spec['builtin']!r}")
    try:
        n = int(spec["n"])
        edges = spec["edges"]
    except KeyError as exc:
        raise ValueError(f"edge-list graph needs key {exc.args[0]!r}") from None
    mode = spec.get("normalization", "none")
    raw = np.zeros((n, n))
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        raw[i, j] = 1.0
        raw[j, i] = 1.0
    return GraphSpec(n_nodes=n, adjacency=normalize_adjacency(raw, mode))


def load_graph_json(path: str) -> GraphSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def induced_subgraph(graph: GraphSpec, nodes) -> GraphSpec:
    """Subgraph on the given node subset, keeping coordinates when present."""
    nodes = np.asarray(nodes, dtype=int)
    adj = graph.adjacency[np.ix_(nodes, nodes)]
    coords = None if graph.coords is None else graph.coords[nodes]
    return GraphSpec(n_nodes=nodes.size, adjacency=adj, coords=coords)
