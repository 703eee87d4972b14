"""Stacked multi-chain node state, node distances and the Gaussian motion kernel.

All K ropes are tracked as one deformable object: their ordered node chains are
stacked row-wise into a single (M, 3) matrix. Distances between nodes are either
plain Euclidean or arc length along the owning chain, with +inf between nodes
of different chains.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

EUCLIDEAN = "euclidean"
GEODESIC = "geodesic"
METRIC_MODES = (EUCLIDEAN, GEODESIC)

# Segment lengths are rounded up onto a dyadic grid so that every arc-length
# sum is exact in float64 (chains shorter than 2**12 m).
_ARC_QUANTUM = 2.0 ** -40


@dataclass(frozen=True)
class NodeChain:
    object_id: int
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ValueError(f"chain {self.object_id}: nodes must have shape (n, 3), got {nodes.shape}")
        if len(nodes) < 2:
            raise ValueError(f"chain {self.object_id}: needs at least 2 nodes, got {len(nodes)}")
        seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
        if np.any(seg <= 0):
            raise ValueError(f"chain {self.object_id}: zero-length segment at index {int(np.argmin(seg))}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "object_id", int(self.object_id))

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class MultiDLOState:
    """Chains stacked into one node matrix ``Y`` with per-object row ranges."""

    chains: tuple[NodeChain, ...]
    Y: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Y = np.vstack([c.nodes for c in self.chains])
        sizes = [len(c) for c in self.chains]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
        labels = np.repeat(np.arange(len(self.chains)), sizes)
        for arr in (Y, offsets, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "labels", labels)

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    @property
    def K(self) -> int:
        return len(self.chains)

    @property
    def object_ids(self) -> list[int]:
        return [c.object_id for c in self.chains]

    def rows(self, k: int) -> slice:
        """Row range of the k-th chain (position in ``chains``, not object_id)."""
        start = int(self.offsets[k])
        return slice(start, start + len(self.chains[k]))

    def object_nodes(self, k: int) -> np.ndarray:
        return self.Y[self.rows(k)]

    def with_nodes(self, Y: np.ndarray) -> "MultiDLOState":
        """Same chains and ordering, new stacked positions."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape != self.Y.shape:
            raise ValueError(f"expected node matrix of shape {self.Y.shape}, got {Y.shape}")
        return build_state(
            [NodeChain(c.object_id, Y[self.rows(k)]) for k, c in enumerate(self.chains)]
        )


def build_state(chains: Sequence[NodeChain]) -> MultiDLOState:
    if len(chains) == 0:
        raise ValueError("need at least one chain")
    ids = [c.object_id for c in chains]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate object_id in {ids}")
    return MultiDLOState(tuple(chains))


@dataclass(frozen=True)
class GeodesicTable:
    metric_mode: str
    dist: np.ndarray


def _object_slices(labels: np.ndarray) -> list[slice]:
    bounds = np.flatnonzero(np.diff(labels)) + 1
    edges = np.concatenate([[0], bounds, [len(labels)]])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def arc_lengths(Y: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cumulative arc length of every node along its own chain (exact sums)."""
    s = np.zeros(len(Y))
    for rows in _object_slices(labels):
        seg = np.linalg.norm(np.diff(Y[rows], axis=0), axis=1)
        seg = np.ceil(seg / _ARC_QUANTUM) * _ARC_QUANTUM
        s[rows] = np.concatenate([[0.0], np.cumsum(seg)])
    return s


def distance_matrix(Y: np.ndarray, labels: np.ndarray, mode: str = GEODESIC) -> np.ndarray:
    """Node-to-node distances for stacked nodes ``Y`` with contiguous object ``labels``."""
    if mode == EUCLIDEAN:
        dist = cdist(Y, Y)
        np.fill_diagonal(dist, 0.0)
        return dist
    if mode != GEODESIC:
        raise ValueError(f"unknown metric mode {mode!r}, expected one of {METRIC_MODES}")
    s = arc_lengths(Y, labels)
    dist = np.abs(s[:, None] - s[None, :])
    dist[labels[:, None] != labels[None, :]] = np.inf
    return dist


def geodesic_table(state: MultiDLOState, mode: str = GEODESIC) -> GeodesicTable:
    return GeodesicTable(mode, distance_matrix(state.Y, state.labels, mode))


def nearest_two(Y: np.ndarray, X: np.ndarray, sqdist: np.ndarray | None = None):
    """Indices and Euclidean distances of the two nodes nearest to each point.

    Ties go to the lower node index. Returns ``(c1, c2, d1, d2)``, each of length N.
    """
    if len(Y) < 2:
        raise ValueError("need at least 2 nodes")
    if sqdist is None:
        sqdist = cdist(Y, X, "sqeuclidean")
    cols = np.arange(sqdist.shape[1])
    c1 = np.argmin(sqdist, axis=0)
    d1sq = sqdist[c1, cols]
    masked = sqdist.copy()
    masked[c1, cols] = np.inf
    c2 = np.argmin(masked, axis=0)
    d2sq = sqdist[c2, cols]
    return c1, c2, np.sqrt(d1sq), np.sqrt(d2sq)


def node_to_points(table: GeodesicTable, Y: np.ndarray, X: np.ndarray,
                   sqdist: np.ndarray | None = None) -> np.ndarray:
    """(M, N) node-to-point geodesic distances through the nearer of the two anchors.

    Each point is anchored to its two Euclidean-nearest nodes c1, c2. Node m reaches
    the point through whichever anchor is geodesically closer to it; nodes whose
    chain holds neither anchor are at +inf.
    """
    c1, c2, d1, d2 = nearest_two(Y, X, sqdist)
    R1 = table.dist[:, c1]
    R2 = table.dist[:, c2]
    via1 = R1 <= R2
    D = np.where(via1, R1 + d1, R2 + d2)
    cols = np.arange(X.shape[0])
    D[c1, cols] = d1
    D[c2, cols] = d2
    return D


def node_to_point_distances(state: MultiDLOState, table: GeodesicTable, x) -> np.ndarray:
    """Length-M distances from every node to a single point ``x``."""
    if table.metric_mode != GEODESIC:
        raise ValueError("node-to-point geodesic distances need a geodesic table")
    x = np.asarray(x, dtype=float).reshape(1, 3)
    return node_to_points(table, state.Y, x)[:, 0]


@dataclass(frozen=True)
class KernelMatrix:
    G: np.ndarray
    beta: float


def kernel_matrix(table: GeodesicTable, beta: float) -> KernelMatrix:
    """Gaussian kernel exp(-dist^2 / (2 beta^2)); infinite distances give exactly 0."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    G = np.exp(-np.square(table.dist) / (2.0 * beta * beta))
    return KernelMatrix(G, float(beta))
