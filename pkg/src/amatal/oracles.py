"""Brute-force reference implementations for small inputs.

These deliberately avoid the production code paths: plain loops, Python
floats, exact fractions where it matters. They share nothing with the
production modules beyond plain tuples and arrays.
"""
import math
from fractions import Fraction

import numpy as np


def _iou(l1, r1, l2, r2):
    inter = min(r1, r2) - max(l1, l2)
    if inter < 0.0:
        inter = 0.0
    union = (r1 - l1) + (r2 - l2) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def oracle_nms(segs, thresh):
    """segs: iterable of (left, right, label, score). Returns kept tuples in selection order."""
    remaining = list(segs)
    kept = []
    while remaining:
        best = 0
        for i in range(1, len(remaining)):
            a, b = remaining[i], remaining[best]
            if (-a[3], a[0], a[2], a[1]) < (-b[3], b[0], b[2], b[1]):
                best = i
        top = remaining.pop(best)
        kept.append(top)
        survivors = []
        for s in remaining:
            if s[2] == top[2] and _iou(top[0], top[1], s[0], s[1]) > thresh:
                continue
            survivors.append(s)
        remaining = survivors
    return kept


def oracle_ap(dets, gts, tiou):
    """Exact AP for one class.

    dets: (video_id, start, end, score); gts: (video_id, start, end).
    Returns None when there is no ground truth.
    """
    if not gts:
        return None
    dets = sorted(dets, key=lambda d: (-d[3], d[1], d[2], d[0]))
    gts = sorted(gts, key=lambda g: (g[0], g[1], g[2]))
    used = [False] * len(gts)
    hits = []
    for vid, s, e, _ in dets:
        best, best_iou = None, -1.0
        for j, (gv, gs, ge) in enumerate(gts):
            if used[j] or gv != vid:
                continue
            iou = _iou(s, e, gs, ge)
            if iou > best_iou:
                best, best_iou = j, iou
        if best is not None and best_iou >= tiou:
            used[best] = True
            hits.append(1)
        else:
            hits.append(0)
    n_gt = len(gts)
    prec, rec, tp = [], [], 0
    for k, h in enumerate(hits, start=1):
        tp += h
        prec.append(Fraction(tp, k))
        rec.append(Fraction(tp, n_gt))
    mprec = [Fraction(0)] + prec + [Fraction(0)]
    mrec = [Fraction(0)] + rec + [Fraction(1)]
    for i in range(len(mprec) - 2, -1, -1):
        mprec[i] = max(mprec[i], mprec[i + 1])
    ap = Fraction(0)
    for i in range(1, len(mrec)):
        if mrec[i] != mrec[i - 1]:
            ap += (mrec[i] - mrec[i - 1]) * mprec[i]
    return float(ap)


def oracle_dense_attention(q, k, v):
    q, k, v = (np.asarray(a, dtype=np.float64).tolist() for a in (q, k, v))
    T, D = len(q), len(q[0])
    out = []
    for i in range(T):
        scores = [sum(q[i][d] * k[j][d] for d in range(D)) / math.sqrt(D) for j in range(len(k))]
        m = max(scores)
        ws = [math.exp(s - m) for s in scores]
        z = sum(ws)
        out.append([sum(ws[j] * v[j][c] for j in range(len(v))) / z for c in range(len(v[0]))])
    return np.array(out)


def oracle_conv(x, mask, w, b, stride=1):
    """Direct 1-D convolution with zero padding k // 2; returns (out float32, out_mask)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c_out, c_in, k = w.shape
    T = x.shape[1]
    half = k // 2
    t_out = (T + stride - 1) // stride
    out = np.zeros((c_out, t_out))
    out_mask = np.zeros(t_out, dtype=bool)
    for o in range(t_out):
        centre = o * stride
        out_mask[o] = bool(mask[centre])
        if not out_mask[o]:
            continue
        for co in range(c_out):
            acc = 0.0
            for ci in range(c_in):
                for j in range(k):
                    src = centre + j - half
                    if 0 <= src < T and mask[src]:
                        acc += w[co, ci, j] * x[ci, src]
            out[co, o] = acc + b[co]
    return out.astype(np.float32), out_mask


def oracle_max_pool(x, k):
    x = np.asarray(x, dtype=np.float64)
    C, T = x.shape
    half = k // 2
    out = np.empty_like(x)
    for c in range(C):
        for t in range(T):
            out[c, t] = max(x[c, j] for j in range(max(0, t - half), min(T, t + half + 1)))
    return out
