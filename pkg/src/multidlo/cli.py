"""Command-line entry point: ``multidlo {synth,track,eval,plot}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .dlo_model import METRIC_MODES
from .registration import RegistrationError
from .synth import GroundTruth, evaluate, generate
from .tracker import initialize, track_frame

log = logging.getLogger("multidlo")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multidlo", description="Track multiple deformable linear objects.")
    parser.add_argument("--seed", type=int, default=None, help="override the seed from spec/config")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--spec", required=True, help="scenario key = value file")
    p.add_argument("--out", required=True, help="output directory for frames and truth.jsonl")
    p.add_argument("--format", choices=("csv", "ply"), default="csv")

    p = sub.add_parser("track", help="track a directory of frames")
    p.add_argument("--config", required=True, help="tracking key = value file")
    p.add_argument("--frames", help="directory of ordinal-named .csv/.ply frames")
    p.add_argument("--out", help="result JSON-lines file")
    p.add_argument("--metric", choices=METRIC_MODES)

    p = sub.add_parser("eval", help="compare tracked nodes to ground truth")
    p.add_argument("--tracked", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="metrics CSV, one row per frame")

    p = sub.add_parser("plot", help="export tracked polylines for plotting")
    p.add_argument("--tracked", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "png"), default="csv")
    p.add_argument("--view", choices=("xy", "xz", "yz"), default="xy")
    return parser


def cmd_synth(args) -> int:
    spec = io.read_scenario(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    frames, gt = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(frames) - 1)))
    for frame in frames:
        io.write_frame(out / f"frame_{frame.index:0{width}d}.{args.format}", frame)
    io.write_result(out / "truth.jsonl", io.truth_results(gt))
    (out / "scenario.txt").write_text(io.format_scenario(spec))
    log.info("wrote %d frames to %s", len(frames), out)
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = io.read_config(args.config)
    frames_dir = args.frames or cfg.frames
    out = args.out or cfg.out
    if not frames_dir or not out:
        raise UsageError("track: --frames and --out are required (on the command line or in the config)")
    params = cfg.params
    if args.metric:
        params = dataclasses.replace(params, metric=args.metric)
    tcfg = cfg.tracker
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)

    paths = io.list_frames(frames_dir)
    first = io.read_frame(paths[0])
    ts = initialize(first, params, tcfg)
    results = [io.FrameResult.from_state(first.index, ts.state, ts.last_sigma2, 0)]
    for path in paths[1:]:
        frame = io.read_frame(path)
        ts = track_frame(ts, frame)
        d = ts.diagnostics
        if d.warning:
            log.warning("frame %d: %s", frame.index, d.warning)
        log.info("frame %d: %d points, %d iterations, sigma2 %.3g",
                 frame.index, d.num_points, d.iterations, ts.last_sigma2)
        results.append(io.FrameResult.from_state(frame.index, ts.state, ts.last_sigma2, d.iterations))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    io.write_result(out, results)
    return EXIT_OK


def _match_objects(result: io.FrameResult, object_ids: list[int]) -> list[np.ndarray]:
    by_id = dict(result.objects)
    missing = [i for i in object_ids if i not in by_id]
    if missing:
        raise io.DataError(f"frame {result.frame}: object(s) {missing} missing from tracked output")
    return [by_id[i] for i in object_ids]


def cmd_eval(args) -> int:
    tracked = io.read_result(args.tracked)
    truth = io.read_result(args.truth)
    if not truth:
        raise io.DataError(f"{args.truth}: no frames")
    ids = [oid for oid, _ in truth[0].objects]
    gt = GroundTruth(ids, [[n for _, n in r.objects] for r in truth])
    by_frame = {r.frame: r for r in tracked}
    missing = [r.frame for r in truth if r.frame not in by_frame]
    if missing:
        raise io.DataError(f"{args.tracked}: missing frame(s) {missing[:5]}")
    entries = [_match_objects(by_frame[r.frame], ids) for r in truth]
    try:
        metrics = evaluate(entries, gt)
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    io.write_metrics_csv(args.out, [r.frame for r in truth], metrics)
    log.info("mean node error %.4g m over %d frames", metrics.overall_mean, gt.num_frames)
    return EXIT_OK


def cmd_plot(args) -> int:
    tracked = io.read_result(args.tracked)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    axes = ["xyz".index(c) for c in args.view]
    if args.format == "png":
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        allpts = np.vstack([n for r in tracked for _, n in r.objects]) if tracked else np.zeros((1, 3))
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
        pad = 0.05 * max(float((hi - lo)[axes].max()), 1e-3)
    for r in tracked:
        if args.format == "csv":
            with open(out / f"frame_{r.frame:04d}.csv", "w") as fh:
                fh.write("object_id,node,x,y,z\n")
                for oid, nodes in r.objects:
                    for i, p in enumerate(nodes):
                        fh.write(f"{oid},{i},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g}\n")
        else:
            fig, ax = plt.subplots(figsize=(6, 4))
            for oid, nodes in r.objects:
                ax.plot(nodes[:, axes[0]], nodes[:, axes[1]], "o-", ms=2, lw=1, label=f"object {oid}")
            ax.set_xlim(lo[axes[0]] - pad, hi[axes[0]] + pad)
            ax.set_ylim(lo[axes[1]] - pad, hi[axes[1]] + pad)
            ax.set_aspect("equal")
            ax.set_xlabel(f"{args.view[0]} [m]")
            ax.set_ylabel(f"{args.view[1]} [m]")
            ax.set_title(f"frame {r.frame}")
            ax.legend(loc="upper right", fontsize="small")
            fig.savefig(out / f"frame_{r.frame:04d}.png", dpi=100)
            plt.close(fig)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "track": cmd_track, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("multidlo: a subcommand is required (synth, track, eval, plot)")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (io.DataError, RegistrationError, ValueError, OSError) as exc:
        print(f"multidlo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
