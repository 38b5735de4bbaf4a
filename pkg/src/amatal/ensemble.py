"""Fusing detections from several model runs, one segment per (video, label)."""
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

from .errors import ConfigError
from .postprocess import Detection

MODES = ("mean", "weighted")


@dataclass(frozen=True)
class PredictionGroup:
    video_id: str
    label: int
    members: tuple  # of (start_s, end_s, score)

    def __post_init__(self):
        if not self.members:
            raise ConfigError("prediction group must not be empty")


def select_top_per_source(dets_by_source):
    """Keep the best-scoring detection per (source, video, label).

    ``dets_by_source`` is a sequence of detection lists, one per model run.
    Ties go to the earlier start. Returns ``(source_index, Detection)`` pairs.
    """
    best = {}
    for src, dets in enumerate(dets_by_source):
        for d in dets:
            key = (src, d.video_id, d.label)
            cur = best.get(key)
            if cur is None or (-d.score, d.t_start, d.t_end) < (-cur.score, cur.t_start, cur.t_end):
                best[key] = d
    return [(key[0], best[key]) for key in sorted(best)]


def _hull(value, values):
    # a mean can land one ulp outside its inputs; keep it inside
    return min(max(value, min(values)), max(values))


def fuse_mean(group):
    n = len(group.members)
    starts = [m[0] for m in group.members]
    ends = [m[1] for m in group.members]
    return _hull(math.fsum(starts) / n, starts), _hull(math.fsum(ends) / n, ends)


def fuse_weighted(group):
    """Score-weighted boundary means; the fused score is the best member score."""
    total = math.fsum(m[2] for m in group.members)
    top = max(m[2] for m in group.members)
    if total <= 0.0:
        warnings.warn(
            f"all-zero scores for video {group.video_id!r} label {group.label}; "
            "falling back to the unweighted mean",
            RuntimeWarning,
            stacklevel=2,
        )
        ts, te = fuse_mean(group)
        return ts, te, top
    ts = math.fsum(m[0] * m[2] for m in group.members) / total
    te = math.fsum(m[1] * m[2] for m in group.members) / total
    starts = [m[0] for m in group.members]
    ends = [m[1] for m in group.members]
    return _hull(ts, starts), _hull(te, ends), top


def group_predictions(selected):
    groups = defaultdict(list)
    for _, d in selected:
        groups[(d.video_id, d.label)].append((d.t_start, d.t_end, d.score))
    return [
        PredictionGroup(vid, label, tuple(members))
        for (vid, label), members in sorted(groups.items())
    ]


def ensemble(dets_by_source, mode="weighted"):
    """Top-per-source filtering followed by per-(video, label) boundary fusion."""
    if mode not in MODES:
        raise ConfigError(f"ensemble mode must be one of {MODES}, got {mode!r}")
    out = []
    for group in group_predictions(select_top_per_source(dets_by_source)):
        if mode == "mean":
            ts, te = fuse_mean(group)
            score = max(m[2] for m in group.members)
        else:
            ts, te, score = fuse_weighted(group)
        out.append(Detection(ts, te, group.label, score, group.video_id))
    out.sort(key=lambda d: (d.video_id, d.t_start, d.label))
    return out
