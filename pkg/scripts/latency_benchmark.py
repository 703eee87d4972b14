"""Per-frame tracking latency for three 45-node ropes against N observed points."""
import argparse
import statistics
import time

import numpy as np

from multidlo import GLTPParams, ScenarioSpec, TrackerConfig, generate, initialize, track_frame


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=5000, help="points per frame after preprocessing")
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--metric", choices=("geodesic", "euclidean"), default="geodesic")
    args = ap.parse_args()

    per_object = -(-args.points // 3) + 10
    spec = ScenarioSpec(scenario="entangle", num_frames=args.frames + 1, points_per_object=per_object)
    frames, _ = generate(spec)
    config = TrackerConfig(voxel_size=1e-4, max_points=args.points)
    ts = initialize(frames[0], GLTPParams(metric=args.metric), config)
    times, iters = [], []
    for frame in frames[1:]:
        t0 = time.perf_counter()
        ts = track_frame(ts, frame)
        times.append(time.perf_counter() - t0)
        iters.append(ts.diagnostics.iterations)
    ms = np.array(times) * 1e3
    print(f"M = {ts.state.M}, N = {ts.diagnostics.num_points}, {len(times)} frames")
    print(f"median {statistics.median(ms):.1f} ms, p90 {np.percentile(ms, 90):.1f} ms, max {ms.max():.1f} ms")
    print(f"EM iterations per frame: mean {np.mean(iters):.1f}, max {max(iters)}")


if __name__ == "__main__":
    main()
