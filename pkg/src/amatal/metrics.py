"""Detection mAP with P/R/F1, and the AI City average activity overlap score."""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, EvalInputError
from .postprocess import temporal_iou

DEFAULT_TIOUS = (0.1, 0.2, 0.3, 0.4, 0.5)
AICITY_WINDOW_S = 10.0


@dataclass(frozen=True)
class GroundTruthSegment:
    video_id: str
    label: int
    g_s: float
    g_e: float

    def __post_init__(self):
        if not self.g_s < self.g_e:
            raise DataError(
                f"ground truth in {self.video_id!r} has start {self.g_s} >= end {self.g_e}"
            )


def _det_sort_key(d):
    return (-d.score, d.t_start, d.t_end, d.video_id, d.label)


def _gt_sort_key(g):
    return (g.video_id, g.g_s, g.g_e, g.label)


def _match(dets, gts, tiou, group_of):
    """Score-greedy one-to-one matching; returns (sorted dets, match index array)."""
    dets = sorted(dets, key=_det_sort_key)
    gts = sorted(gts, key=_gt_sort_key)
    groups = {}
    g_group = np.array([groups.setdefault(group_of(g), len(groups)) for g in gts], dtype=np.int64)
    d_group = np.array([groups.get(group_of(d), -1) for d in dets], dtype=np.int64)
    match = kernels.greedy_match(
        np.array([d.t_start for d in dets], dtype=np.float64),
        np.array([d.t_end for d in dets], dtype=np.float64),
        d_group,
        np.array([g.g_s for g in gts], dtype=np.float64),
        np.array([g.g_e for g in gts], dtype=np.float64),
        g_group,
        float(tiou),
    )
    return dets, np.asarray(match)


def average_precision(dets, gts, label, tiou):
    """AP of one class at one tIoU threshold, or ``None`` if the class has no ground truth.

    Uses the all-point interpolated (monotone precision envelope) area under
    the precision/recall curve.
    """
    gts = [g for g in gts if g.label == label]
    if not gts:
        return None
    dets = [d for d in dets if d.label == label]
    if not dets:
        return 0.0
    dets, match = _match(dets, gts, tiou, lambda x: x.video_id)
    tp = match >= 0
    tp_cum = np.cumsum(tp)
    precision = tp_cum / np.arange(1, len(dets) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall rises by exactly 1/n_gt at every true positive
    return float(envelope[tp].sum() / len(gts))


@dataclass(frozen=True)
class MapResult:
    tious: tuple
    per_class: dict  # label -> tuple of AP per tIoU
    mAP: tuple
    avg_mAP: float


def mean_ap(dets, gts, tious=DEFAULT_TIOUS):
    """Class-mean AP per threshold and its average; classes without ground truth are skipped."""
    if not gts:
        raise EvalInputError("no ground truth")
    labels = sorted({g.label for g in gts})
    per_class = {}
    for label in labels:
        per_class[label] = tuple(average_precision(dets, gts, label, t) for t in tious)
    maps = tuple(
        math.fsum(per_class[lb][i] for lb in labels) / len(labels) for i in range(len(tious))
    )
    return MapResult(tuple(tious), per_class, maps, math.fsum(maps) / len(maps))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def precision_recall_f1(dets, gts, tiou=0.5, score_min=0.5):
    """Precision, recall and F1 of detections scoring >= ``score_min``."""
    dets = [d for d in dets if d.score >= score_min]
    n_gt = len(gts)
    if dets and gts:
        _, match = _match(dets, gts, tiou, lambda x: (x.video_id, x.label))
        tp = int((match >= 0).sum())
    else:
        tp = 0
    fp = len(dets) - tp
    fn = n_gt - tp
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f1, tp, fp, fn)


@dataclass(frozen=True)
class OverlapResult:
    score: float
    matched: int
    unmatched_gt: int
    unmatched_pred: int
    pairs: tuple  # (gt index, pred index, overlap) in match order


def aicity_overlap_score(dets, gts, count_unmatched_predictions=True, window=AICITY_WINDOW_S):
    """Average activity overlap score.

    A prediction is eligible for a ground truth of the same video and label
    when both of its boundaries lie within +-``window`` seconds (inclusive) of
    the ground-truth boundaries. Pairs are matched one-to-one greedily by
    descending overlap. Matched pairs score their tIoU; unmatched ground
    truths and predictions score 0 and count in the denominator (the latter
    only with ``count_unmatched_predictions``).
    """
    gts = sorted(gts, key=_gt_sort_key)
    dets = sorted(dets, key=_det_sort_key)
    cands = []
    for gi, g in enumerate(gts):
        for pi, p in enumerate(dets):
            if p.video_id != g.video_id or p.label != g.label:
                continue
            if not (g.g_s - window <= p.t_start <= g.g_s + window):
                continue
            if not (g.g_e - window <= p.t_end <= g.g_e + window):
                continue
            cands.append((-temporal_iou((g.g_s, g.g_e), (p.t_start, p.t_end)), gi, pi))
    cands.sort()
    gt_used, pred_used, pairs = set(), set(), []
    for neg_os, gi, pi in cands:
        if gi in gt_used or pi in pred_used:
            continue
        gt_used.add(gi)
        pred_used.add(pi)
        pairs.append((gi, pi, -neg_os))
    un_gt = len(gts) - len(pairs)
    un_pred = len(dets) - len(pairs)
    denom = len(pairs) + un_gt + (un_pred if count_unmatched_predictions else 0)
    total = math.fsum(p[2] for p in pairs)
    score = total / denom if denom else 0.0
    return OverlapResult(score, len(pairs), un_gt, un_pred, tuple(pairs))


@dataclass
class EvalReport:
    protocol: str
    tious: tuple
    per_class_ap: dict
    mAP: dict
    avg_mAP: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    aicity_score: float
    aicity_matched: int
    aicity_unmatched_gt: int
    aicity_unmatched_pred: int
    n_videos: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "tious": list(self.tious),
            "per_class_ap": {
                str(lb): {f"{t:.2f}": ap for t, ap in zip(self.tious, aps)}
                for lb, aps in sorted(self.per_class_ap.items())
            },
            "mAP": {f"{t:.2f}": v for t, v in zip(self.tious, self.mAP)},
            "avg_mAP": self.avg_mAP,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "aicity": {
                "score": self.aicity_score,
                "matched": self.aicity_matched,
                "unmatched_gt": self.aicity_unmatched_gt,
                "unmatched_pred": self.aicity_unmatched_pred,
            },
            "n_videos": self.n_videos,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self):
        lines = []
        if self.protocol == "aicity":
            lines.append(f"AI City overlap score: {self.aicity_score:.4f}")
            lines.append(
                f"  matched {self.aicity_matched}, unmatched gt {self.aicity_unmatched_gt}, "
                f"unmatched pred {self.aicity_unmatched_pred}"
            )
            return "\n".join(lines) + "\n"
        header = "class " + " ".join(f"{t:>7.2f}" for t in self.tious)
        lines.append(header)
        for lb, aps in sorted(self.per_class_ap.items()):
            lines.append(f"{lb:>5} " + " ".join(f"{ap:7.4f}" for ap in aps))
        lines.append("mAP   " + " ".join(f"{v:7.4f}" for v in self.mAP))
        lines.append(f"avg mAP: {self.avg_mAP:.4f}")
        lines.append(
            f"P {self.precision:.4f}  R {self.recall:.4f}  F1 {self.f1:.4f}  "
            f"(tp {self.tp}, fp {self.fp}, fn {self.fn})"
        )
        return "\n".join(lines) + "\n"


def evaluate(
    dets,
    gts,
    protocol="map",
    tious=DEFAULT_TIOUS,
    prf_tiou=0.5,
    score_min=0.5,
    count_unmatched_predictions=True,
):
    """Compute every metric; ``protocol`` only selects the headline in text output."""
    if protocol not in ("map", "aicity"):
        raise EvalInputError(f"unknown protocol {protocol!r}")
    m = mean_ap(dets, gts, tious)
    prf = precision_recall_f1(dets, gts, prf_tiou, score_min)
    ov = aicity_overlap_score(dets, gts, count_unmatched_predictions)
    return EvalReport(
        protocol=protocol,
        tious=m.tious,
        per_class_ap=m.per_class,
        mAP=m.mAP,
        avg_mAP=m.avg_mAP,
        precision=prf.precision,
        recall=prf.recall,
        f1=prf.f1,
        tp=prf.tp,
        fp=prf.fp,
        fn=prf.fn,
        aicity_score=ov.score,
        aicity_matched=ov.matched,
        aicity_unmatched_gt=ov.unmatched_gt,
        aicity_unmatched_pred=ov.unmatched_pred,
        n_videos=len({g.video_id for g in gts}),
    )
