"""Synthetic multi-rope scenes with exact ground truth, and tracking error metrics.

Ropes are cubic splines through animated control points. Four scripted scenarios:

``static``      K parallel ropes lying still on the table.
``crossing``    K-1 ropes lying still, the last rope draped across them and slid
                ``travel`` metres along them.
``entangle``    K parallel ropes; the outer ropes are lifted, swept across the
                others and lowered onto them, ending in a braided pile.
``disentangle`` ``entangle`` played backwards.

Ropes never interpenetrate: wherever two ropes cross, their centrelines are at
least 3 rope radii apart vertically.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dlo_model import MultiDLOState
from .tracker import PointCloudFrame, track_sequence

SCENARIOS = ("static", "crossing", "entangle", "disentangle")

_DENSE = 4001
_N_CTRL = 9


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "static"
    num_objects: int = 3
    rope_length: float = 0.88
    node_spacing: float = 0.02
    num_frames: int = 60
    points_per_object: int = 400
    noise_sigma: float = 0.002
    occlusion_rate: float = 0.0
    outlier_count: int = 0
    workspace_min: tuple[float, float, float] = (-0.1, -0.4, 0.0)
    workspace_max: tuple[float, float, float] = (1.0, 0.4, 0.15)
    rope_radius: float = 0.005
    separation: float = 0.05
    travel: float = 0.15
    seed: int = 0

    def __post_init__(self):
        checks = {
            "scenario": self.scenario in SCENARIOS,
            "num_objects": self.num_objects >= (2 if self.scenario == "crossing" else 1),
            "rope_length": self.rope_length > 0,
            "node_spacing": 0 < self.node_spacing <= self.rope_length / 2,
            "num_frames": self.num_frames >= 1,
            "points_per_object": self.points_per_object >= 2,
            "noise_sigma": self.noise_sigma >= 0,
            "occlusion_rate": 0 <= self.occlusion_rate < 1,
            "outlier_count": self.outlier_count >= 0,
            "rope_radius": self.rope_radius >= 0,
            "separation": self.separation > 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {name} = {getattr(self, name)!r}")
        object.__setattr__(self, "workspace_min", tuple(float(v) for v in self.workspace_min))
        object.__setattr__(self, "workspace_max", tuple(float(v) for v in self.workspace_max))

    @property
    def nodes_per_object(self) -> int:
        return int(round(self.rope_length / self.node_spacing)) + 1


@dataclass
class GroundTruth:
    object_ids: list[int]
    nodes: list[list[np.ndarray]] = field(default_factory=list)  # [frame][object] -> (n, 3)

    @property
    def num_frames(self) -> int:
        return len(self.nodes)


# ---------------------------------------------------------------------------
# curve animation


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _phase(tau: float, start: float, end: float) -> float:
    return float(_smoothstep((tau - start) / (end - start)))


def _rest_offsets(spec: ScenarioSpec, count: int) -> np.ndarray:
    return (np.arange(count) - (count - 1) / 2.0) * spec.separation


def _straight(spec: ScenarioSpec, y: float) -> np.ndarray:
    x = np.linspace(0.0, spec.rope_length, _N_CTRL)
    return np.column_stack([x, np.full(_N_CTRL, y), np.full(_N_CTRL, spec.rope_radius)])


def _static_controls(spec: ScenarioSpec, tau: float) -> list[np.ndarray]:
    return [_straight(spec, y) for y in _rest_offsets(spec, spec.num_objects)]


def _crossing_controls(spec: ScenarioSpec, tau: float) -> list[np.ndarray]:
    r, L = spec.rope_radius, spec.rope_length
    ctrls = [_straight(spec, y) for y in _rest_offsets(spec, spec.num_objects - 1)]
    y = np.linspace(-L / 2, L / 2, _N_CTRL)
    drape = np.clip(1.0 - (y / (0.3 * L)) ** 2, 0.0, None)
    x = np.full(_N_CTRL, L / 2 - spec.travel / 2 + spec.travel * tau)
    ctrls.append(np.column_stack([x, y, r + 3.0 * r * drape]))
    return ctrls


# fraction of the sideways sweep applied at each control point along the rope
_SWEEP_PROFILE = np.array([0.0, 0.25, 0.75, 1.0, 1.0, 1.0, 0.75, 0.25, 0.0])
# control points lifted off the table
_LIFT_PROFILE = np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0])


def _entangle_controls(spec: ScenarioSpec, tau: float) -> list[np.ndarray]:
    r, K = spec.rope_radius, spec.num_objects
    rest = _rest_offsets(spec, K)
    # stacking order: ropes closest to the middle stay lowest
    rank = np.empty(K, dtype=int)
    rank[np.lexsort((np.arange(K), np.abs(rest)))] = np.arange(K)
    lift = _phase(tau, 0.0, 0.2)
    sweep = _phase(tau, 0.2, 0.8)
    lower = _phase(tau, 0.8, 1.0)
    ctrls = []
    for k in range(K):
        c = _straight(spec, rest[k])
        target = -rest[k] - np.sign(rest[k]) * 0.2 * spec.separation
        c[:, 1] += (target - rest[k]) * sweep * _SWEEP_PROFILE
        transit = 6.0 * r * rank[k]
        resting = 3.0 * r * rank[k]
        height = lift * transit + lower * (resting - transit)
        c[:, 2] += height * _LIFT_PROFILE
        ctrls.append(c)
    return ctrls


_CONTROLS = {
    "static": _static_controls,
    "crossing": _crossing_controls,
    "entangle": _entangle_controls,
}


def control_points(spec: ScenarioSpec, frame: int) -> list[np.ndarray]:
    if spec.scenario == "disentangle":
        frame = spec.num_frames - 1 - frame
        fn = _entangle_controls
    else:
        fn = _CONTROLS[spec.scenario]
    tau = frame / (spec.num_frames - 1) if spec.num_frames > 1 else 0.0
    return fn(spec, tau)


class ArcCurve:
    """Cubic spline through control points, evaluated by arc length.

    With ``length`` given, only the centred stretch of that length is used, so a
    rope keeps its length while its middle is displaced (the ends slide inward).
    """

    def __init__(self, ctrl: np.ndarray, length: float | None = None):
        u = np.linspace(0.0, 1.0, len(ctrl))
        self.spline = CubicSpline(u, ctrl, axis=0)
        self._u = np.linspace(0.0, 1.0, _DENSE)
        pts = self.spline(self._u)
        self._s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        full = float(self._s[-1])
        if full <= 0:
            raise ValueError("degenerate rope with zero length")
        self.length = full if length is None else min(float(length), full)
        self._start = 0.5 * (full - self.length)

    def at(self, s: np.ndarray) -> np.ndarray:
        """Points at arc lengths ``s`` in [0, length]; always exactly on the spline."""
        return self.spline(np.interp(np.asarray(s) + self._start, self._s, self._u))


def curves(spec: ScenarioSpec, frame: int) -> list[ArcCurve]:
    return [ArcCurve(c, spec.rope_length) for c in control_points(spec, frame)]


# ---------------------------------------------------------------------------
# generation


def generate(spec: ScenarioSpec) -> tuple[list[PointCloudFrame], GroundTruth]:
    """Frames and ground truth for ``spec``.

    Frame 0 is clean and instance-labelled (it stands in for the manually
    segmented first frame). Occlusion and outliers apply to frames 1 onwards.
    """
    rng = np.random.default_rng(spec.seed)
    n_nodes = spec.nodes_per_object
    lo, hi = np.array(spec.workspace_min), np.array(spec.workspace_max)
    gt = GroundTruth(object_ids=list(range(spec.num_objects)))
    frames = []
    for f in range(spec.num_frames):
        pts, labels, nodes = [], [], []
        for k, curve in enumerate(curves(spec, f)):
            nodes.append(curve.at(np.linspace(0.0, curve.length, n_nodes)))
            s = np.sort(rng.uniform(0.0, curve.length, spec.points_per_object))
            if f > 0 and spec.occlusion_rate > 0:
                span = spec.occlusion_rate * curve.length
                start = rng.uniform(0.0, curve.length - span)
                s = s[(s < start) | (s > start + span)]
            p = curve.at(s)
            if spec.noise_sigma > 0:
                p = p + rng.normal(scale=spec.noise_sigma, size=p.shape)
            pts.append(p)
            labels.append(np.full(len(p), k))
        if f > 0 and spec.outlier_count > 0:
            pts.append(rng.uniform(lo, hi, size=(spec.outlier_count, 3)))
        points = np.vstack(pts)
        frames.append(PointCloudFrame(f, points, np.concatenate(labels) if f == 0 else None))
        gt.nodes.append(nodes)
    return frames, gt


def min_clearance(spec: ScenarioSpec, frame: int, samples: int = 2000) -> float:
    """Smallest centreline distance between two different ropes in ``frame``."""
    from scipy.spatial import cKDTree

    dense = [c.at(np.linspace(0.0, c.length, samples)) for c in curves(spec, frame)]
    best = np.inf
    for i in range(len(dense)):
        tree = cKDTree(dense[i])
        for j in range(i + 1, len(dense)):
            d, _ = tree.query(dense[j])
            best = min(best, float(d.min()))
    return best


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Metrics:
    mean: np.ndarray  # (frames, objects)
    max: np.ndarray   # (frames, objects)
    reversed: np.ndarray  # (frames, objects) bool, orientation used

    @property
    def frame_mean(self) -> np.ndarray:
        """Mean per-node error over all objects' nodes in each frame."""
        return self.mean.mean(axis=1)

    @property
    def object_mean(self) -> np.ndarray:
        return self.mean.mean(axis=0)

    @property
    def overall_mean(self) -> float:
        return float(self.mean.mean())


def node_errors(tracked: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, bool]:
    """Per-node errors under whichever chain orientation fits better."""
    fwd = np.linalg.norm(tracked - truth, axis=1)
    rev = np.linalg.norm(tracked[::-1] - truth, axis=1)
    if rev.mean() < fwd.mean():
        return rev, True
    return fwd, False


def _per_object(tracked) -> list[np.ndarray]:
    tracked = getattr(tracked, "state", tracked)  # TrackerState -> MultiDLOState
    if isinstance(tracked, MultiDLOState):
        return [tracked.object_nodes(k) for k in range(tracked.K)]
    return [np.asarray(n, dtype=float) for n in tracked]


def evaluate(tracked, gt: GroundTruth) -> Metrics:
    """Per-frame, per-object node errors against ground truth.

    ``tracked`` holds one entry per frame: a TrackerState, a MultiDLOState or a
    list of per-object (n, 3) node arrays, objects in ground-truth order.
    """
    if len(tracked) != gt.num_frames:
        raise ValueError(f"{len(tracked)} tracked frames vs {gt.num_frames} ground-truth frames")
    F, K = gt.num_frames, len(gt.object_ids)
    mean = np.zeros((F, K))
    mx = np.zeros((F, K))
    rev = np.zeros((F, K), dtype=bool)
    for f, (entry, truth) in enumerate(zip(tracked, gt.nodes)):
        objects = _per_object(entry)
        if len(objects) != K:
            raise ValueError(f"frame {f}: {len(objects)} tracked objects vs {K} in ground truth")
        for k, nodes in enumerate(objects):
            if nodes.shape != truth[k].shape:
                raise ValueError(
                    f"frame {f}, object {k}: {nodes.shape} tracked nodes vs {truth[k].shape}"
                )
            err, rev[f, k] = node_errors(nodes, truth[k])
            mean[f, k] = err.mean()
            mx[f, k] = err.max()
    return Metrics(mean, mx, rev)


# ---------------------------------------------------------------------------
# end-to-end runs


@dataclass
class ScenarioRun:
    spec: ScenarioSpec
    states: list  # TrackerState per frame
    truth: GroundTruth
    metrics: Metrics
    seconds: float


def run_scenario(spec: ScenarioSpec, params, config=None) -> ScenarioRun:
    """Generate ``spec``, track every frame and score the result."""
    frames, gt = generate(spec)
    t0 = time.perf_counter()
    states = list(track_sequence(frames, params, config))
    seconds = time.perf_counter() - t0
    return ScenarioRun(spec, states, gt, evaluate(states, gt), seconds)
