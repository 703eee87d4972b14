"""Frame files (CSV / PLY), result JSON-lines and key = value config files."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dlo_model import MultiDLOState
from .registration import GLTPParams
from .synth import GroundTruth, ScenarioSpec
from .tracker import PointCloudFrame, TrackerConfig

FRAME_EXTENSIONS = (".csv", ".ply")


class DataError(ValueError):
    """Malformed or missing input data."""


# ---------------------------------------------------------------------------
# frames


def frame_ordinal(path: str | Path) -> int:
    """Last integer in the file stem (``frame_0012.csv`` -> 12); 0 if there is none."""
    nums = re.findall(r"\d+", Path(path).stem)
    return int(nums[-1]) if nums else 0


def read_frame(path: str | Path) -> PointCloudFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    ext = path.suffix.lower()
    if ext == ".csv":
        points, labels = _read_csv(path)
    elif ext == ".ply":
        points, labels = _read_ply(path)
    else:
        raise DataError(f"{path}: unknown frame extension {ext!r}, expected one of {FRAME_EXTENSIONS}")
    return PointCloudFrame(frame_ordinal(path), points, labels)


def _read_csv(path: Path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file, expected header x,y,z")
    header = [h.strip() for h in lines[0].split(",")]
    if header not in (["x", "y", "z"], ["x", "y", "z", "label"]):
        raise DataError(f"{path}: line 1: bad header {lines[0]!r}, expected x,y,z or x,y,z,label")
    labelled = len(header) == 4
    points, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            if len(cells) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(cells)}")
            points.append([float(c) for c in cells[:3]])
            if labelled:
                label = int(cells[3])
                if label < 0:
                    raise ValueError("negative label")
                labels.append(label)
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: malformed row {line!r} ({exc})") from None
    pts = np.array(points, dtype=float).reshape(-1, 3)
    return pts, (np.array(labels, dtype=int) if labelled else None)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(path: Path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise DataError(f"{path}: line 1: not a PLY file")
        fmt = None
        elements: list[list] = []  # [name, count, [(prop, dtype)]]
        lineno = 1
        while True:
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise DataError(f"{path}: missing end_header")
            tok = raw.decode("ascii", "replace").split()
            if not tok or tok[0] in ("comment", "obj_info"):
                continue
            if tok[0] == "end_header":
                break
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append([tok[1], int(tok[2]), []])
            elif tok[0] == "property":
                if tok[1] == "list" or not elements:
                    raise DataError(f"{path}: line {lineno}: unsupported property {' '.join(tok[1:])!r}")
                if tok[1] not in _PLY_TYPES:
                    raise DataError(f"{path}: line {lineno}: unknown type {tok[1]!r}")
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        if not elements or elements[0][0] != "vertex":
            raise DataError(f"{path}: first element must be 'vertex'")
        _, count, props = elements[0]
        names = [p for p, _ in props]
        if not {"x", "y", "z"} <= set(names):
            raise DataError(f"{path}: vertex element lacks x, y, z")
        if fmt == "ascii":
            rows = []
            for i in range(count):
                raw = fh.readline()
                try:
                    vals = [float(v) for v in raw.split()]
                    if len(vals) != len(names):
                        raise ValueError
                except ValueError:
                    raise DataError(f"{path}: line {lineno + i + 1}: malformed vertex row") from None
                rows.append(vals)
            table = np.array(rows, dtype=float).reshape(count, len(names))
            col = {n: table[:, i] for i, n in enumerate(names)}
        elif fmt in ("binary_little_endian", "binary_big_endian"):
            order = "<" if fmt == "binary_little_endian" else ">"
            dtype = np.dtype([(n, order + t) for n, t in props])
            buf = fh.read(dtype.itemsize * count)
            if len(buf) != dtype.itemsize * count:
                raise DataError(f"{path}: truncated vertex data")
            rec = np.frombuffer(buf, dtype=dtype, count=count)
            col = {n: rec[n] for n in names}
        else:
            raise DataError(f"{path}: unsupported PLY format {fmt!r}")
    points = np.column_stack([col["x"], col["y"], col["z"]]).astype(float)
    labels = None
    if "label" in col:
        labels = np.asarray(col["label"]).astype(int)
    return points, labels


def write_frame(path: str | Path, frame: PointCloudFrame, binary: bool = True) -> None:
    """Write a frame as CSV (17 significant digits) or PLY (float64 vertices)."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".csv":
        with open(path, "w") as fh:
            if frame.labels is None:
                fh.write("x,y,z\n")
                for p in frame.points:
                    fh.write(",".join(repr(float(v)) for v in p) + "\n")
            else:
                fh.write("x,y,z,label\n")
                for p, lab in zip(frame.points, frame.labels):
                    fh.write(",".join(repr(float(v)) for v in p) + f",{int(lab)}\n")
    elif ext == ".ply":
        props = [("x", "f8", "double"), ("y", "f8", "double"), ("z", "f8", "double")]
        if frame.labels is not None:
            props.append(("label", "i4", "int"))
        fmt = "binary_little_endian" if binary else "ascii"
        header = ["ply", f"format {fmt} 1.0", f"element vertex {len(frame)}"]
        header += [f"property {ply} {name}" for name, _, ply in props]
        header.append("end_header")
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            if binary:
                rec = np.empty(len(frame), dtype=[(n, "<" + t) for n, t, _ in props])
                for d, n in enumerate("xyz"):
                    rec[n] = frame.points[:, d]
                if frame.labels is not None:
                    rec["label"] = frame.labels
                fh.write(rec.tobytes())
            else:
                for i, p in enumerate(frame.points):
                    row = [repr(float(v)) for v in p]
                    if frame.labels is not None:
                        row.append(str(int(frame.labels[i])))
                    fh.write((" ".join(row) + "\n").encode("ascii"))
    else:
        raise DataError(f"{path}: unknown frame extension {ext!r}")


def list_frames(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: frames directory does not exist")
    paths = [p for p in directory.iterdir() if p.suffix.lower() in FRAME_EXTENSIONS]
    if not paths:
        raise DataError(f"{directory}: no .csv or .ply frames found")
    return sorted(paths, key=lambda p: (frame_ordinal(p), p.name))


# ---------------------------------------------------------------------------
# results


@dataclass
class FrameResult:
    frame: int
    sigma2: float
    iterations: int
    objects: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @classmethod
    def from_state(cls, frame: int, state: MultiDLOState, sigma2: float, iterations: int):
        objects = [(c.object_id, np.asarray(state.object_nodes(k))) for k, c in enumerate(state.chains)]
        return cls(frame, float(sigma2), int(iterations), objects)


def _g9(v: float) -> float:
    return float(f"{float(v):.9g}")


def _dumps(record: dict) -> str:
    return json.dumps(record, separators=(", ", ": "), allow_nan=False)


def write_result(path: str | Path, results) -> None:
    lines = []
    for r in results:
        record = {
            "frame": int(r.frame),
            "sigma2": _g9(r.sigma2),
            "iterations": int(r.iterations),
            "objects": [
                {"object_id": int(oid), "nodes": [[_g9(v) for v in row] for row in nodes]}
                for oid, nodes in r.objects
            ],
        }
        lines.append(_dumps(record) + "\n")
    with open(path, "w") as fh:
        fh.writelines(lines)


def read_result(path: str | Path) -> list[FrameResult]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                objects = [(int(o["object_id"]), np.array(o["nodes"], dtype=float).reshape(-1, 3))
                           for o in rec["objects"]]
                out.append(FrameResult(int(rec["frame"]), float(rec["sigma2"]),
                                       int(rec["iterations"]), objects))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: bad record ({exc})") from None
    return out


def truth_results(gt: GroundTruth) -> list[FrameResult]:
    """Ground truth in the result schema (sigma2 and iterations are 0)."""
    return [FrameResult(f, 0.0, 0, list(zip(gt.object_ids, nodes))) for f, nodes in enumerate(gt.nodes)]


def write_metrics_csv(path: str | Path, frames: list[int], metrics) -> None:
    K = metrics.mean.shape[1]
    cols = ["frame", "mean_error", "max_error"] + [f"mean_error_obj{k}" for k in range(K)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, f in enumerate(frames):
            row = [str(f), f"{metrics.frame_mean[i]:.9g}", f"{metrics.max[i].max():.9g}"]
            row += [f"{v:.9g}" for v in metrics.mean[i]]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# key = value config


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}: line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DataError(f"{source}: line {lineno}: empty key")
        out[key] = value
    return out


def _coerce(value: str, typ, key: str, source: str):
    try:
        # field annotations are strings under postponed evaluation
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ.startswith("tuple"):
            return tuple(float(v) for v in value.split(","))
        return value
    except ValueError:
        raise DataError(f"{source}: {key}: cannot parse {value!r} as {typ}") from None


def _build(cls, values: dict[str, str], source: str):
    kinds = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        kwargs[key] = _coerce(value, kinds[key], key, source)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise DataError(f"{source}: {exc}") from None


@dataclass
class RunConfig:
    params: GLTPParams = field(default_factory=GLTPParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    frames: str | None = None
    out: str | None = None


_PATH_KEYS = ("frames", "out")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Flat key = value config. Keys are GLTPParams / TrackerConfig field names plus paths."""
    values = parse_kv(text, source)
    pkeys = {f.name for f in fields(GLTPParams)}
    tkeys = {f.name for f in fields(TrackerConfig)}
    unknown = set(values) - pkeys - tkeys - set(_PATH_KEYS)
    if unknown:
        raise DataError(f"{source}: unknown key(s) {sorted(unknown)}")
    for key in _PATH_KEYS:
        if key in values and not values[key]:
            raise DataError(f"{source}: {key}: empty path")
    params = _build(GLTPParams, {k: v for k, v in values.items() if k in pkeys}, source)
    tracker = _build(TrackerConfig, {k: v for k, v in values.items() if k in tkeys}, source)
    return RunConfig(params, tracker, values.get("frames"), values.get("out"))


def format_config(cfg: RunConfig) -> str:
    lines = ["# multidlo tracking config"]
    for obj in (cfg.params, cfg.tracker):
        for f in fields(obj):
            lines.append(f"{f.name} = {getattr(obj, f.name)}")
    for key in _PATH_KEYS:
        if getattr(cfg, key):
            lines.append(f"{key} = {getattr(cfg, key)}")
    return "\n".join(lines) + "\n"


def read_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such config file")
    return parse_config(path.read_text(), str(path))


def parse_scenario(text: str, source: str = "<spec>") -> ScenarioSpec:
    values = parse_kv(text, source)
    known = {f.name for f in fields(ScenarioSpec)}
    unknown = set(values) - known
    if unknown:
        raise DataError(f"{source}: unknown key(s) {sorted(unknown)}")
    return _build(ScenarioSpec, values, source)


def format_scenario(spec: ScenarioSpec) -> str:
    lines = ["# multidlo synthetic scenario"]
    for f in fields(spec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def read_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such scenario file")
    return parse_scenario(path.read_text(), str(path))
