"""Raw head outputs to timestamped detections.

Order: sigmoid -> score threshold -> top-k -> decode -> duration filter ->
per-class NMS -> seconds -> final score filter.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .numerics import sigmoid


@dataclass(frozen=True)
class GridSegment:
    """A segment on the chunk grid (base stride units)."""

    left: float
    right: float
    label: int
    score: float


@dataclass(frozen=True)
class Detection:
    t_start: float
    t_end: float
    label: int
    score: float
    video_id: str = ""


@dataclass(frozen=True)
class Candidates:
    """Flat arrays of (point, class) pairs that survived scoring."""

    t: np.ndarray
    stride: np.ndarray
    label: np.ndarray
    score: np.ndarray
    offsets: np.ndarray
    level: np.ndarray

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class PostprocessParams:
    pre_nms_thresh: float = 0.2
    pre_nms_topk: int = 5000
    nms_iou: float = 0.5
    min_duration: float = 0.0
    min_score: float = 0.5
    feat_stride: int = 16
    frames_per_chunk: int = 16

    def __post_init__(self):
        for name in ("pre_nms_thresh", "min_score"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {val}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if self.pre_nms_topk < 0 or self.min_duration < 0:
            raise ConfigError("pre_nms_topk and min_duration must be >= 0")


def score_filter_topk(raw, pre_nms_thresh=0.2, topk=5000):
    """Keep (point, class) pairs scoring >= ``pre_nms_thresh``, then the top k.

    Ranking is by score, ties by earlier t, then lower label, then lower level.
    """
    if not 0.0 <= pre_nms_thresh <= 1.0:
        raise ConfigError(f"pre_nms_thresh must be in [0, 1], got {pre_nms_thresh}")
    parts = {k: [] for k in ("t", "stride", "label", "score", "offsets", "level")}
    for lvl, (logits, offs, pts, mask) in enumerate(
        zip(raw.cls_logits, raw.offsets, raw.points, raw.masks)
    ):
        scores = sigmoid(logits)
        scores[~np.asarray(mask, dtype=bool)] = -1.0
        idx, cls = np.nonzero(scores >= pre_nms_thresh)
        parts["t"].append(pts[idx, 0])
        parts["stride"].append(pts[idx, 3])
        parts["label"].append(cls.astype(np.int64) + 1)
        parts["score"].append(scores[idx, cls])
        parts["offsets"].append(np.asarray(offs, dtype=np.float64)[idx])
        parts["level"].append(np.full(idx.shape[0], lvl, dtype=np.int64))
    if not parts["t"]:
        empty = np.zeros(0)
        return Candidates(empty, empty, np.zeros(0, np.int64), empty, np.zeros((0, 2)), np.zeros(0, np.int64))
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    order = np.lexsort((cat["level"], cat["label"], cat["t"], -cat["score"]))
    order = order[:topk]
    return Candidates(**{k: v[order] for k, v in cat.items()})


def decode_segments(cands, n_chunks):
    """left = t - off_left * stride, right = t + off_right * stride, clamped to [0, n_chunks]."""
    left = cands.t - cands.offsets[:, 0] * cands.stride
    right = cands.t + cands.offsets[:, 1] * cands.stride
    left = np.clip(left, 0.0, n_chunks)
    right = np.clip(right, 0.0, n_chunks)
    return [
        GridSegment(float(lo), float(hi), int(lab), float(s))
        for lo, hi, lab, s in zip(left, right, cands.label, cands.score)
    ]


def filter_min_duration(segs, min_chunks):
    if min_chunks < 0:
        raise ConfigError(f"min duration must be >= 0, got {min_chunks}")
    return [s for s in segs if s.right - s.left >= min_chunks]


def temporal_iou(a, b):
    """Intersection over union of two (start, end) intervals; 0 for empty unions."""
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter < 0.0:
        inter = 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def nms_order(segs):
    """Priority order for NMS: score desc, then left, label, right ascending."""
    return sorted(segs, key=lambda s: (-s.score, s.left, s.label, s.right))


def nms_multiclass(segs, iou_thresh=0.5):
    """Greedy per-class NMS; a segment overlapping a kept one by tIoU > thresh is dropped.

    The result is in priority order across all classes.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ConfigError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    ordered = nms_order(segs)
    if not ordered:
        return []
    left = np.array([s.left for s in ordered], dtype=np.float64)
    right = np.array([s.right for s in ordered], dtype=np.float64)
    label = np.array([s.label for s in ordered], dtype=np.int64)
    keep = np.asarray(kernels.nms_sorted(left, right, label, float(iou_thresh)))
    return [s for s, k in zip(ordered, keep) if k]


def grid_to_seconds(grid, feat_stride=16, n_frames=16, fps=30.0):
    return (grid * feat_stride + 0.5 * n_frames) / fps


def to_timestamps(segs, feat_stride=16, n_frames=16, fps=30.0, video_id=""):
    if not fps > 0:
        raise ConfigError(f"fps must be > 0, got {fps}")
    return [
        Detection(
            grid_to_seconds(s.left, feat_stride, n_frames, fps),
            grid_to_seconds(s.right, feat_stride, n_frames, fps),
            s.label,
            s.score,
            video_id,
        )
        for s in segs
    ]


def final_filter(dets, min_score):
    """Keep detections whose score strictly exceeds ``min_score``."""
    if not 0.0 <= min_score <= 1.0:
        raise ConfigError(f"min_score must be in [0, 1], got {min_score}")
    return [d for d in dets if d.score > min_score]


def postprocess(raw, fps, params=None, video_id=""):
    """Run the full post-processing chain on one video's raw prediction."""
    params = params or PostprocessParams()
    cands = score_filter_topk(raw, params.pre_nms_thresh, params.pre_nms_topk)
    segs = decode_segments(cands, raw.n_chunks)
    segs = filter_min_duration(segs, params.min_duration)
    segs = nms_multiclass(segs, params.nms_iou)
    dets = to_timestamps(segs, params.feat_stride, params.frames_per_chunk, fps, video_id)
    return final_filter(dets, params.min_score)
