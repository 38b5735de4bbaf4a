"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same floating point operation order where results must agree
bit-for-bit (NMS and matching decisions).
"""
import numpy as np


def max_pool1d(x, k, valid):
    """Stride-1 max pool over the last axis, invalid steps act as -inf."""
    C, T = x.shape
    half = k // 2
    padded = np.full((C, T + 2 * half), -np.inf)
    padded[:, half:half + T] = np.where(valid.astype(bool)[None, :], x, -np.inf)
    out = padded[:, 0:T].copy()
    for j in range(1, k):
        np.maximum(out, padded[:, j:j + T], out=out)
    out[:, ~valid.astype(bool)] = 0.0
    return out


def window_attention(q, k, v, valid, half, mem_k, mem_v, scale):
    """Local softmax attention with optional memory tokens.

    Returns ``(out, rowsum, count)`` where ``rowsum`` is the sum of the
    softmax weights of every query row and ``count`` the number of tokens it
    attended to. Invalid query rows produce zeros.
    """
    T, D = q.shape
    M = mem_k.shape[0]
    valid = valid.astype(bool)
    out = np.zeros((T, v.shape[1]))
    rowsum = np.zeros(T)
    count = np.zeros(T, dtype=np.int64)
    mem_scores = q @ mem_k.T * scale if M else None
    for t in range(T):
        if not valid[t]:
            continue
        lo = max(0, t - half)
        hi = min(T, t + half + 1)
        idx = np.arange(lo, hi)[valid[lo:hi]]
        s = k[idx] @ q[t] * scale
        vals = v[idx]
        if M:
            s = np.concatenate([mem_scores[t], s])
            vals = np.concatenate([mem_v, vals])
        s = s - s.max()
        w = np.exp(s)
        w /= w.sum()
        out[t] = w @ vals
        rowsum[t] = w.sum()
        count[t] = w.shape[0]
    return out, rowsum, count


def nms_sorted(left, right, label, thresh):
    """Greedy NMS over segments already sorted by priority.

    Returns a uint8 keep mask. A later segment is suppressed when its tIoU
    with a kept segment of the same label is strictly greater than
    ``thresh``.
    """
    n = left.shape[0]
    keep = np.zeros(n, dtype=np.uint8)
    alive = np.ones(n, dtype=bool)
    for i in range(n):
        if not alive[i]:
            continue
        keep[i] = 1
        cand = np.nonzero(alive[i + 1:] & (label[i + 1:] == label[i]))[0] + i + 1
        if cand.size == 0:
            continue
        inter = np.minimum(right[cand], right[i]) - np.maximum(left[cand], left[i])
        inter = np.maximum(inter, 0.0)
        union = (right[i] - left[i]) + (right[cand] - left[cand]) - inter
        iou = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)
        alive[cand[iou > thresh]] = False
    return keep


def greedy_match(d_start, d_end, d_group, g_start, g_end, g_group, thresh):
    """One-to-one matching of score-ordered detections to ground truth.

    Each detection takes the unmatched ground truth of its group with the
    highest tIoU >= ``thresh``; ties go to the lower ground truth index.
    Returns the matched ground truth index per detection, -1 if none.
    """
    n = d_start.shape[0]
    match = np.full(n, -1, dtype=np.int64)
    used = np.zeros(g_start.shape[0], dtype=bool)
    for i in range(n):
        cand = np.nonzero((g_group == d_group[i]) & ~used)[0]
        if cand.size == 0:
            continue
        inter = np.minimum(g_end[cand], d_end[i]) - np.maximum(g_start[cand], d_start[i])
        inter = np.maximum(inter, 0.0)
        union = (d_end[i] - d_start[i]) + (g_end[cand] - g_start[cand]) - inter
        iou = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)
        best = int(np.argmax(iou))
        if iou[best] >= thresh:
            match[i] = cand[best]
            used[cand[best]] = True
    return match
