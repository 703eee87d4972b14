import dataclasses
import logging

import numpy as np
import pytest

from multidlo.registration import GLTPParams
from multidlo.tracker import (
    PointCloudFrame,
    TrackerConfig,
    drop_stragglers,
    fit_chain,
    initialize,
    order_points,
    preprocess,
    resample_polyline,
    smooth_polyline,
    track_frame,
    track_sequence,
    voxel_downsample,
)


def segment_points(n=1000, length=1.0, offset=(0.0, 0.0, 0.0)):
    x = np.linspace(0.0, length, n)
    return np.column_stack([x, np.zeros(n), np.zeros(n)]) + np.asarray(offset)


def two_rope_frame(index, rng=None, noise=0.0, drop_second=False, n=600):
    a = segment_points(n, 0.6)
    b = segment_points(n, 0.6, (0.0, 0.1, 0.0))
    parts, labels = [a], [np.zeros(n)]
    if not drop_second:
        parts.append(b)
        labels.append(np.ones(n))
    pts = np.vstack(parts)
    if noise:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return PointCloudFrame(index, pts, np.concatenate(labels) if index == 0 else None)


# ---------------------------------------------------------------------------
# frames and config


def test_frame_reshapes_and_checks_labels():
    f = PointCloudFrame(3, [0, 0, 0, 1, 1, 1])
    assert f.points.shape == (2, 3)
    assert len(f) == 2
    with pytest.raises(ValueError, match="labels"):
        PointCloudFrame(0, np.zeros((3, 3)), [0, 1])


@pytest.mark.parametrize("field, value", [
    ("nodes_per_object", 1), ("voxel_size", 0.0), ("max_points", 0), ("settle_rounds", -1),
])
def test_config_rejects(field, value):
    with pytest.raises(ValueError, match=field):
        TrackerConfig(**{field: value})


# ---------------------------------------------------------------------------
# preprocess


def test_voxel_corners_collapse():
    corners = np.array([[x, y, z] for x in (0.001, 0.009) for y in (0.001, 0.009) for z in (0.001, 0.009)])
    out = voxel_downsample(corners, 0.01)
    assert out.shape == (1, 3)
    np.testing.assert_allclose(out[0], [0.005] * 3, atol=1e-15)


def test_voxel_sparse_identity(rng):
    pts = rng.permutation(np.arange(50))[:, None] * np.array([[0.05, 0.0, 0.0]]) + 0.001
    out = voxel_downsample(pts, 0.01)
    assert np.array_equal(out, pts)


def test_voxel_empty():
    assert voxel_downsample(np.zeros((0, 3)), 0.01).shape == (0, 3)
    with pytest.raises(ValueError):
        voxel_downsample(np.zeros((1, 3)), 0.0)


def test_voxel_centroids_brute_force(rng):
    pts = rng.uniform(0, 0.05, (300, 3))
    out = voxel_downsample(pts, 0.01)
    keys = {}
    for p in pts:
        keys.setdefault(tuple(np.floor(p / 0.01).astype(int)), []).append(p)
    ref = [np.mean(v, axis=0) for v in keys.values()]  # dict keeps first-occurrence order
    np.testing.assert_allclose(out, ref, atol=1e-15)


def test_preprocess_caps_points():
    rng = np.random.default_rng(7)
    frame = PointCloudFrame(4, rng.uniform(0, 10, (100_000, 3)))
    a = preprocess(frame, 0.001, 5000, seed=1)
    b = preprocess(frame, 0.001, 5000, seed=1)
    c = preprocess(frame, 0.001, 5000, seed=2)
    assert a.shape == (5000, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_preprocess_empty_frame():
    assert preprocess(PointCloudFrame(0, np.zeros((0, 3))), 0.01, 10).shape == (0, 3)


# ---------------------------------------------------------------------------
# chain fitting


def test_order_points_line(rng):
    pts = segment_points(40)
    ordered = order_points(rng.permutation(pts))
    xs = ordered[:, 0]
    assert np.all(np.diff(xs) > 0) or np.all(np.diff(xs) < 0)


def test_resample_polyline_spacing():
    poly = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
    out = resample_polyline(poly, 5)
    np.testing.assert_allclose(out, [[0, 0, 0], [0.5, 0, 0], [1, 0, 0], [1, 0.5, 0], [1, 1, 0]])


def test_drop_stragglers_cuts_return_jump():
    poly = np.vstack([segment_points(20, 0.19), [[0.0, 0.05, 0.0]]])
    assert len(drop_stragglers(poly)) == 20
    assert len(drop_stragglers(segment_points(20))) == 20


def test_smooth_keeps_straight_line():
    poly = segment_points(30)
    np.testing.assert_allclose(smooth_polyline(poly), poly, atol=1e-15)


def test_fit_chain_straight_segment(rng):
    nodes = fit_chain(rng.permutation(segment_points()), 5, 0.01)
    spacing = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    np.testing.assert_allclose(spacing, 0.25, rtol=0.05)


def test_initialize_straight_segment():
    # the chain as fitted, before any registration against the first frame
    frame = PointCloudFrame(0, segment_points(), np.zeros(1000))
    ts = initialize(frame, GLTPParams(), TrackerConfig(nodes_per_object=5, settle_rounds=0))
    spacing = np.linalg.norm(np.diff(ts.state.Y, axis=0), axis=1)
    np.testing.assert_allclose(spacing, 0.25, rtol=0.05)


def test_settle_reaches_gmm_fixed_point():
    # registering against the first frame pulls end nodes half a cell inward
    # (each node sits at the centroid of its share of the points)
    frame = PointCloudFrame(0, segment_points(), np.zeros(1000))
    ts = initialize(frame, GLTPParams(), TrackerConfig(nodes_per_object=5))
    x = ts.state.Y[:, 0]
    np.testing.assert_allclose(np.diff(x), 0.2, rtol=0.05)
    assert x[0] == pytest.approx(0.1, abs=0.01)


def test_initialize_two_objects():
    ts = initialize(two_rope_frame(0), GLTPParams(), TrackerConfig(nodes_per_object=10))
    assert ts.state.K == 2
    r0, r1 = ts.state.rows(0), ts.state.rows(1)
    assert set(range(r0.start, r0.stop)).isdisjoint(range(r1.start, r1.stop))
    assert np.all(np.abs(ts.state.object_nodes(1)[:, 1] - 0.1) < 1e-3)
    assert ts.lle.H.shape == (20, 20)


def test_initialize_errors():
    with pytest.raises(ValueError, match="labels"):
        initialize(PointCloudFrame(0, segment_points()), GLTPParams())
    frame = PointCloudFrame(0, segment_points(30), np.zeros(30))
    with pytest.raises(ValueError, match="30 points"):
        initialize(frame, GLTPParams(), TrackerConfig(nodes_per_object=45))


# ---------------------------------------------------------------------------
# tracking


def test_static_frames_do_not_drift():
    cfg = TrackerConfig(nodes_per_object=20)
    ts = initialize(two_rope_frame(0), GLTPParams(), cfg)
    start = ts.state.Y.copy()
    for i in range(1, 11):
        ts = track_frame(ts, two_rope_frame(i))
    assert np.linalg.norm(ts.state.Y - start, axis=1).max() < 1e-4


def test_occluded_object_stays_put():
    rng = np.random.default_rng(3)
    cfg = TrackerConfig(nodes_per_object=31)
    spacing = 0.6 / 30
    ts = initialize(two_rope_frame(0, rng, 0.002), GLTPParams(), cfg)
    start = ts.state.Y.copy()
    for i in range(1, 6):
        ts = track_frame(ts, two_rope_frame(i, rng, 0.002, drop_second=True))
    hidden = ts.state.rows(1)
    moved = np.linalg.norm(ts.state.Y[hidden] - start[hidden], axis=1)
    assert moved.max() < 2 * spacing
    # visible rope still lies on its segment
    vis = ts.state.object_nodes(0)
    assert np.abs(vis[:, 1:]).max() < spacing / 2


def test_empty_frame_holds_state(caplog):
    ts = initialize(two_rope_frame(0), GLTPParams(), TrackerConfig(nodes_per_object=10))
    with caplog.at_level(logging.WARNING):
        out = track_frame(ts, PointCloudFrame(5, np.zeros((0, 3))))
    assert out.state is ts.state
    assert out.last_sigma2 == ts.last_sigma2
    assert out.frame_index == 5
    assert out.diagnostics.warning == "empty frame"
    assert "empty" in caplog.text


def test_track_frame_diagnostics_and_identity():
    rng = np.random.default_rng(0)
    ts = initialize(two_rope_frame(0), GLTPParams(), TrackerConfig(nodes_per_object=10))
    out = track_frame(ts, two_rope_frame(1, rng, 0.002))
    d = out.diagnostics
    assert d.iterations >= 1
    assert np.isfinite(d.cost)
    assert len(d.displacement) == 2
    assert d.num_points > 0 and d.warning is None
    assert out.state.object_ids == ts.state.object_ids
    assert [out.state.rows(k) for k in range(2)] == [ts.state.rows(k) for k in range(2)]
    assert out.lle is ts.lle


def test_track_frame_deterministic():
    rng = np.random.default_rng(1)
    ts = initialize(two_rope_frame(0), GLTPParams(), TrackerConfig(nodes_per_object=10))
    frame = two_rope_frame(1, rng, 0.002)
    a, b = track_frame(ts, frame), track_frame(ts, frame)
    assert np.array_equal(a.state.Y, b.state.Y)
    assert a.last_sigma2 == b.last_sigma2


def test_labels_after_first_frame_are_ignored():
    rng = np.random.default_rng(2)
    ts = initialize(two_rope_frame(0), GLTPParams(), TrackerConfig(nodes_per_object=10))
    frame = two_rope_frame(1, rng, 0.002)
    labelled = dataclasses.replace(frame, labels=np.zeros(len(frame), dtype=int))
    assert np.array_equal(track_frame(ts, frame).state.Y, track_frame(ts, labelled).state.Y)


def test_track_sequence_yields_every_frame():
    frames = [two_rope_frame(i) for i in range(4)]
    states = list(track_sequence(frames, GLTPParams(), TrackerConfig(nodes_per_object=10)))
    assert [s.frame_index for s in states] == [0, 1, 2, 3]
