"""Binary feature/weight containers and JSON annotation/prediction files.

AMAF (features)::

    b"AMAF" | u8 version=1 | u32le header_len | header JSON (UTF-8)
    | n_chunks * dim float32le, row-major

Header keys: video_id, n_chunks, dim, fps, frames_per_chunk.

AMAW (weights)::

    b"AMAW" | u8 version=1 | u32le manifest_len | manifest JSON (UTF-8)
    | float32le blob

The manifest is a list of {name, shape, byte_offset} sorted by name, with
offsets relative to the start of the blob.

Predictions are JSON lines ``{"video_id", "label", "t_start", "t_end",
"score"}`` (or CSV with that header), numbers fixed at 6 decimals, sorted by
(video_id, t_start, label).
"""
import csv
import io
import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import GroundTruthSegment
from .model import WeightBundle
from .postprocess import Detection

FEATURE_MAGIC = b"AMAF"
WEIGHT_MAGIC = b"AMAW"
VERSION = 1
_PREFIX = struct.Struct("<4sBI")

ACTION_LABELS = {
    1: "Drinking",
    2: "Phone Call (right hand)",
    3: "Phone Call (left hand)",
    4: "Eating",
    5: "Text (right hand)",
    6: "Text (left hand)",
    7: "Reaching behind",
    8: "Adjust control panel",
    9: "Pick up from floor (Driver)",
    10: "Pick up from floor (Passenger)",
    11: "Talk to passenger (right)",
    12: "Talk to passenger (backseat)",
    13: "Yawning",
    14: "Hand on head",
    15: "Singing or dancing with music",
    16: "Normal driving",
}

PREDICTION_FIELDS = ("video_id", "label", "t_start", "t_end", "score")


@dataclass
class FeatureSequence:
    """One video's chunk features, n_chunks x dim float32."""

    video_id: str
    data: np.ndarray
    fps: float = 30.0
    frames_per_chunk: int = 16

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise DataError(f"feature matrix must be n_chunks x dim with n_chunks >= 1, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DataError(f"features of {self.video_id!r} contain non-finite values")
        if not self.fps > 0:
            raise DataError(f"fps must be > 0, got {self.fps}")

    @property
    def n_chunks(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def header(self):
        return {
            "video_id": self.video_id,
            "n_chunks": self.n_chunks,
            "dim": self.dim,
            "fps": self.fps,
            "frames_per_chunk": self.frames_per_chunk,
        }


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def _pack(magic, header, payload):
    head = _canonical_json(header)
    return _PREFIX.pack(magic, VERSION, len(head)) + head + payload


def _unpack(buf, magic, what):
    if len(buf) < _PREFIX.size:
        raise DataError(f"{what}: truncated header at offset 0")
    got_magic, version, head_len = _PREFIX.unpack_from(buf, 0)
    if got_magic != magic:
        raise DataError(f"{what}: bad magic {got_magic!r} at offset 0, expected {magic!r}")
    if version != VERSION:
        raise DataError(f"{what}: unsupported version {version} at offset 4")
    start = _PREFIX.size
    if len(buf) < start + head_len:
        raise DataError(f"{what}: truncated header at offset {start}")
    try:
        header = json.loads(buf[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{what}: invalid header JSON at offset {start}: {exc}") from None
    return header, start + head_len


def _read_floats(buf, offset, count, what):
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(
            f"{what}: non-finite value at byte offset {offset + 4 * int(bad[0])}"
        )
    return arr.astype(np.float32)


def dumps_features(seq):
    return _pack(FEATURE_MAGIC, seq.header(), seq.data.astype("<f4").tobytes())


def loads_features(buf, what="features"):
    header, off = _unpack(buf, FEATURE_MAGIC, what)
    try:
        n, dim = int(header["n_chunks"]), int(header["dim"])
        video_id = str(header["video_id"])
        fps = float(header["fps"])
        fpc = int(header["frames_per_chunk"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{what}: bad header field {exc} at offset {_PREFIX.size}") from None
    payload = len(buf) - off
    if payload % 4:
        raise DataError(
            f"{what}: truncated payload at offset {off}: {payload} bytes is not a whole number of float32 values"
        )
    if payload // 4 != n * dim:
        raise DataError(
            f"{what}: payload size mismatch at offset {off}: header n_chunks={n}, dim={dim} "
            f"needs {n * dim} values, found {payload // 4}"
        )
    data = _read_floats(buf, off, n * dim, what).reshape(n, dim)
    return FeatureSequence(video_id, data, fps, fpc)


def write_features(path, seq):
    Path(path).write_bytes(dumps_features(seq))


def read_features(path):
    return loads_features(_read_bytes(path), str(path))


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read file: {exc.strerror or exc}") from None


def dumps_weights(bundle):
    manifest, chunks, offset = [], [], 0
    for name in bundle.names():
        arr = np.ascontiguousarray(bundle[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "byte_offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    return _pack(WEIGHT_MAGIC, manifest, b"".join(chunks))


def loads_weights(buf, cfg=None, what="weights"):
    manifest, off = _unpack(buf, WEIGHT_MAGIC, what)
    if not isinstance(manifest, list):
        raise DataError(f"{what}: manifest must be a JSON list")
    blob_len = len(buf) - off
    tensors, spans = {}, []
    for entry in manifest:
        try:
            name = str(entry["name"])
            shape = tuple(int(s) for s in entry["shape"])
            start = int(entry["byte_offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{what}: bad manifest entry {entry!r}: {exc}") from None
        if name in tensors:
            raise DataError(f"{what}: duplicate tensor {name!r}")
        count = math.prod(shape)
        end = start + 4 * count
        if start < 0 or end > blob_len:
            raise DataError(
                f"{what}: tensor {name!r} at blob offset {start} runs past the end of the blob ({blob_len} bytes)"
            )
        spans.append((start, end, name))
        tensors[name] = _read_floats(buf, off + start, count, what).reshape(shape)
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise DataError(f"{what}: overlapping offsets for tensors {n0!r} and {n1!r} at blob offset {s1}")
    bundle = WeightBundle(tensors)
    if cfg is not None:
        bundle.validate(cfg)
    return bundle


def write_weights(path, bundle):
    Path(path).write_bytes(dumps_weights(bundle))


def read_weights(path, cfg=None):
    return loads_weights(_read_bytes(path), cfg, str(path))


# -- annotations ---------------------------------------------------------


@dataclass
class VideoAnnotation:
    video_id: str
    fps: float
    duration_s: float
    segments: list = field(default_factory=list)  # of (label, start_s, end_s)


def _number(val, what):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise DataError(f"{what}: expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val):
        raise DataError(f"{what}: non-finite value")
    return val


def _label(val, what):
    if isinstance(val, bool) or not isinstance(val, int) or val not in ACTION_LABELS:
        raise DataError(f"{what}: unknown label id {val!r}")
    return val


def parse_annotations(obj, what="annotations"):
    if not isinstance(obj, dict) or not isinstance(obj.get("videos"), list):
        raise DataError(f"{what}: expected an object with a 'videos' list")
    videos = []
    for vi, v in enumerate(obj["videos"]):
        where = f"{what}: videos[{vi}]"
        try:
            vid = str(v["video_id"])
            fps = _number(v["fps"], f"{where}.fps")
            dur = _number(v["duration_s"], f"{where}.duration_s")
            segs_in = v["segments"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{where}: missing field {exc}") from None
        segs = []
        for si, s in enumerate(segs_in):
            sw = f"{where}.segments[{si}]"
            try:
                label = _label(s["label"], sw)
                start = _number(s["start_s"], f"{sw}.start_s")
                end = _number(s["end_s"], f"{sw}.end_s")
            except (KeyError, TypeError) as exc:
                raise DataError(f"{sw}: missing field {exc}") from None
            if start < 0 or end < 0:
                raise DataError(f"{sw}: negative time")
            if not start < end or end > dur:
                raise DataError(f"{sw}: need 0 <= start_s < end_s <= duration_s")
            seg = (label, start, end)
            if seg in segs:
                warnings.warn(f"{sw}: duplicate ground-truth segment {seg}", stacklevel=2)
            segs.append(seg)
        videos.append(VideoAnnotation(vid, fps, dur, segs))
    return videos


def read_annotations(path):
    try:
        obj = json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    return parse_annotations(obj, str(path))


def dumps_annotations(videos):
    obj = {
        "videos": [
            {
                "video_id": v.video_id,
                "fps": v.fps,
                "duration_s": round(v.duration_s, 6),
                "segments": [
                    {"label": lb, "start_s": round(s, 6), "end_s": round(e, 6)}
                    for lb, s, e in v.segments
                ],
            }
            for v in videos
        ]
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_annotations(path, videos):
    Path(path).write_text(dumps_annotations(videos))


def ground_truth(videos):
    return [
        GroundTruthSegment(v.video_id, lb, s, e) for v in videos for lb, s, e in v.segments
    ]


# -- predictions ---------------------------------------------------------


def _sort_key(d):
    return (d.video_id, round(d.t_start, 6), d.label, -round(d.score, 6), round(d.t_end, 6))


def _prediction(obj, what):
    if not isinstance(obj, dict):
        raise DataError(f"{what}: expected an object")
    missing = [f for f in PREDICTION_FIELDS if f not in obj]
    if missing:
        raise DataError(f"{what}: missing fields {missing}")
    label = _label(obj["label"], what)
    ts = _number(obj["t_start"], f"{what}.t_start")
    te = _number(obj["t_end"], f"{what}.t_end")
    score = _number(obj["score"], f"{what}.score")
    if ts < 0 or te < 0:
        raise DataError(f"{what}: negative time")
    if te < ts:
        raise DataError(f"{what}: t_end < t_start")
    return Detection(ts, te, label, score, str(obj["video_id"]))


def dumps_predictions(dets, fmt="jsonl"):
    dets = sorted(dets, key=_sort_key)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PREDICTION_FIELDS)
        for d in dets:
            w.writerow([d.video_id, d.label, f"{d.t_start:.6f}", f"{d.t_end:.6f}", f"{d.score:.6f}"])
        return buf.getvalue()
    lines = [
        f'{{"video_id": {json.dumps(d.video_id)}, "label": {d.label}, '
        f'"t_start": {d.t_start:.6f}, "t_end": {d.t_end:.6f}, "score": {d.score:.6f}}}'
        for d in dets
    ]
    return "".join(line + "\n" for line in lines)


def loads_predictions(text, fmt="jsonl", what="predictions"):
    dets = []
    if fmt == "csv":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            return dets
        if tuple(rows[0]) != PREDICTION_FIELDS:
            raise DataError(f"{what}: line 1: expected header {','.join(PREDICTION_FIELDS)}")
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            where = f"{what}: line {lineno}"
            if len(row) != len(PREDICTION_FIELDS):
                raise DataError(f"{where}: expected {len(PREDICTION_FIELDS)} columns")
            try:
                obj = {
                    "video_id": row[0],
                    "label": int(row[1]),
                    "t_start": float(row[2]),
                    "t_end": float(row[3]),
                    "score": float(row[4]),
                }
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from None
            dets.append(_prediction(obj, where))
        return dets
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{what}: line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: malformed JSON: {exc.msg}") from None
        dets.append(_prediction(obj, where))
    return dets


def _fmt_for(path, fmt):
    if fmt:
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "jsonl"


def write_predictions(path, dets, fmt=None):
    Path(path).write_text(dumps_predictions(dets, _fmt_for(path, fmt)))


def read_predictions(path, fmt=None):
    try:
        text = _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8: {exc}") from None
    return loads_predictions(text, _fmt_for(path, fmt), str(path))
