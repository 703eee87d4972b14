"""Frame-to-frame multi-rope tracking.

The first frame must carry per-point instance labels; it seeds one node chain per
label. Every later frame is treated as an unlabeled foreground cloud and all ropes
are registered jointly.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dlo_model import MultiDLOState, NodeChain, build_state
from .registration import DIM, GLTPParams, LLEWeights, gltp_em, lle_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointCloudFrame:
    index: int
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(int).reshape(-1)
            if len(labels) != len(pts):
                raise ValueError(f"frame {self.index}: {len(labels)} labels for {len(pts)} points")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class TrackerConfig:
    nodes_per_object: int = 45
    voxel_size: float = 0.01
    max_points: int = 8000
    seed: int = 0
    settle_rounds: int = 200
    settle_tol: float = 1e-6

    def __post_init__(self):
        if self.settle_rounds < 0:
            raise ValueError(f"invalid settle_rounds = {self.settle_rounds}")
        if self.nodes_per_object < 2:
            raise ValueError(f"invalid nodes_per_object = {self.nodes_per_object}")
        if not self.voxel_size > 0:
            raise ValueError(f"invalid voxel_size = {self.voxel_size}")
        if self.max_points < 1:
            raise ValueError(f"invalid max_points = {self.max_points}")


@dataclass(frozen=True)
class Diagnostics:
    iterations: int = 0
    cost: float = float("nan")
    displacement: tuple[float, ...] = ()
    num_points: int = 0
    warning: str | None = None


@dataclass(frozen=True)
class TrackerState:
    state: MultiDLOState
    lle: LLEWeights
    params: GLTPParams
    config: TrackerConfig = field(default_factory=TrackerConfig)
    last_sigma2: float = float("nan")
    frame_index: int = 0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


# ---------------------------------------------------------------------------
# preprocessing


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Centroid of each occupied voxel, in order of first occurrence."""
    if not voxel_size > 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return points.copy()
    keys = np.floor(points / voxel_size).astype(np.int64)
    _, first, inverse, counts = np.unique(
        keys, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(first), 3))
    np.add.at(sums, inverse, points)
    centroids = sums / counts[:, None]
    return centroids[np.argsort(first, kind="stable")]


def preprocess(frame: PointCloudFrame, voxel_size: float, max_points: int,
               seed: int = 0) -> np.ndarray:
    pts = voxel_downsample(frame.points, voxel_size)
    if len(pts) > max_points:
        rng = np.random.default_rng([seed, frame.index])
        keep = np.sort(rng.choice(len(pts), size=max_points, replace=False))
        pts = pts[keep]
    return pts


# ---------------------------------------------------------------------------
# initialization


def order_points(points: np.ndarray) -> np.ndarray:
    """Greedy nearest-neighbour chain starting at the point farthest from the centroid."""
    n = len(points)
    start = int(np.argmax(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    tree = cKDTree(points)
    visited = np.zeros(n, dtype=bool)
    order = [start]
    visited[start] = True
    cur = start
    for _ in range(n - 1):
        k = 8
        while True:
            _, idx = tree.query(points[cur], k=min(k, n))
            idx = np.atleast_1d(idx)
            free = idx[~visited[idx]]
            if len(free) or k >= n:
                break
            k *= 4
        if len(free) == 0:
            free = np.flatnonzero(~visited)
            free = free[[np.argmin(np.linalg.norm(points[free] - points[cur], axis=1))]]
        cur = int(free[0])
        visited[cur] = True
        order.append(cur)
    return points[order]


def resample_polyline(poly: np.ndarray, n: int) -> np.ndarray:
    """``n`` points equally spaced by arc length along ``poly`` (end points kept)."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        raise ValueError("polyline has zero length")
    keep = np.concatenate([[True], seg > 0])
    s, poly = s[keep], poly[keep]
    t = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(t, s, poly[:, d]) for d in range(3)])


def drop_stragglers(poly: np.ndarray, jump_factor: float = 5.0) -> np.ndarray:
    """Cut an ordered chain at its first step longer than ``jump_factor`` x the median step.

    Greedy chaining occasionally skips a point and returns for it at the very end;
    everything after such a jump is discarded.
    """
    steps = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    if len(steps) == 0:
        return poly
    long = np.flatnonzero(steps > jump_factor * np.median(steps))
    return poly if len(long) == 0 else poly[: long[0] + 1]


def smooth_polyline(poly: np.ndarray, window: int = 5) -> np.ndarray:
    """Moving average with the ends reflected through the end points, so ends stay put."""
    pad = window // 2
    if len(poly) <= 2 * pad + 1:
        return poly
    ext = np.vstack([2 * poly[0] - poly[pad:0:-1], poly, 2 * poly[-1] - poly[-2:-pad - 2:-1]])
    kernel = np.ones(window) / window
    return np.column_stack([np.convolve(ext[:, d], kernel, mode="valid") for d in range(3)])


def fit_chain(points: np.ndarray, n_nodes: int, voxel_size: float) -> np.ndarray:
    """Ordered ``n_nodes`` chain through one object's labelled points."""
    pts = voxel_downsample(points, voxel_size)
    if len(pts) < 2:
        pts = np.asarray(points, dtype=float)
    poly = drop_stragglers(order_points(pts))
    return resample_polyline(smooth_polyline(poly), n_nodes)


def residual_sigma2(points: np.ndarray, nodes: np.ndarray) -> float:
    """Per-axis variance of the points about their nearest node."""
    d, _ = cKDTree(nodes).query(points)
    return float(np.mean(d * d) / DIM)


def settle(state: MultiDLOState, X: np.ndarray, params: GLTPParams, lle: LLEWeights,
           sigma2: float, rounds: int, tol: float) -> tuple[MultiDLOState, float]:
    """Re-register ``state`` to the same points until no node moves more than ``tol``.

    Leaves the nodes at a fixed point of registration on ``X``, so repeated
    identical frames do not move them.
    """
    for _ in range(rounds):
        res = gltp_em(X, state, params, lle, sigma2=sigma2)
        step = float(np.linalg.norm(res.Y_new - state.Y, axis=1).max())
        state, sigma2 = state.with_nodes(res.Y_new), res.sigma2_final
        if step < tol:
            break
    return state, sigma2


def initialize(first_frame: PointCloudFrame, params: GLTPParams,
               config: TrackerConfig | None = None) -> TrackerState:
    config = config or TrackerConfig()
    if first_frame.labels is None:
        raise ValueError(f"frame {first_frame.index} has no instance labels")
    chains = []
    for obj in np.unique(first_frame.labels):
        pts = first_frame.points[first_frame.labels == obj]
        if len(pts) < config.nodes_per_object:
            raise ValueError(
                f"object {obj} has {len(pts)} points, need at least {config.nodes_per_object}"
            )
        nodes = fit_chain(pts, config.nodes_per_object, config.voxel_size)
        chains.append(NodeChain(int(obj), nodes))
    state = build_state(chains)
    lle = lle_weights(state, params.q)
    sigma2 = residual_sigma2(first_frame.points, state.Y)
    if config.settle_rounds:
        X = preprocess(first_frame, config.voxel_size, config.max_points, config.seed)
        state, sigma2 = settle(state, X, params, lle, sigma2, config.settle_rounds, config.settle_tol)
    return TrackerState(
        state=state,
        lle=lle,
        params=params,
        config=config,
        last_sigma2=sigma2,
        frame_index=first_frame.index,
    )


# ---------------------------------------------------------------------------
# tracking


def track_frame(ts: TrackerState, frame: PointCloudFrame) -> TrackerState:
    X = preprocess(frame, ts.config.voxel_size, ts.config.max_points, ts.config.seed)
    if len(X) == 0:
        log.warning("frame %d is empty, holding previous state", frame.index)
        return dataclasses.replace(
            ts,
            frame_index=frame.index,
            diagnostics=Diagnostics(warning="empty frame"),
        )
    result = gltp_em(X, ts.state, ts.params, ts.lle, sigma2=ts.last_sigma2)
    new_state = ts.state.with_nodes(result.Y_new)
    moved = np.linalg.norm(result.Y_new - ts.state.Y, axis=1)
    disp = tuple(float(np.linalg.norm(moved[ts.state.rows(k)])) for k in range(ts.state.K))
    diag = Diagnostics(
        iterations=result.iterations,
        cost=result.cost_trace[-1],
        displacement=disp,
        num_points=len(X),
    )
    return dataclasses.replace(
        ts,
        state=new_state,
        last_sigma2=result.sigma2_final,
        frame_index=frame.index,
        diagnostics=diag,
    )


def track_sequence(frames, params: GLTPParams, config: TrackerConfig | None = None):
    """Initialize on ``frames[0]`` and track the rest; yields one TrackerState per frame."""
    frames = list(frames)
    ts = initialize(frames[0], params, config)
    yield ts
    for frame in frames[1:]:
        ts = track_frame(ts, frame)
        yield ts
