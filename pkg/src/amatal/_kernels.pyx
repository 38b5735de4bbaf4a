# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def max_pool1d(double[:, ::1] x, Py_ssize_t k, const unsigned char[::1] valid):
    cdef Py_ssize_t C = x.shape[0], T = x.shape[1], half = k // 2
    cdef Py_ssize_t c, t, j, lo, hi
    cdef double m
    out_arr = np.zeros((C, T))
    cdef double[:, ::1] out = out_arr
    for c in range(C):
        for t in range(T):
            if not valid[t]:
                continue
            lo = t - half if t >= half else 0
            hi = t + half + 1 if t + half + 1 <= T else T
            m = -INFINITY
            for j in range(lo, hi):
                if valid[j] and x[c, j] > m:
                    m = x[c, j]
            out[c, t] = m
    return out_arr


def window_attention(double[:, ::1] q, double[:, ::1] k, double[:, ::1] v,
                     const unsigned char[::1] valid, Py_ssize_t half,
                     double[:, ::1] mem_k, double[:, ::1] mem_v, double scale):
    cdef Py_ssize_t T = q.shape[0], D = q.shape[1], Dv = v.shape[1]
    cdef Py_ssize_t M = mem_k.shape[0]
    cdef Py_ssize_t t, j, d, lo, hi, n
    cdef double s, mx, tot
    out_arr = np.zeros((T, Dv))
    rowsum_arr = np.zeros(T)
    count_arr = np.zeros(T, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] rowsum = rowsum_arr
    cdef cnp.int64_t[::1] count = count_arr
    w_arr = np.empty(M + 2 * half + 1)
    cdef double[::1] w = w_arr
    for t in range(T):
        if not valid[t]:
            continue
        lo = t - half if t >= half else 0
        hi = t + half + 1 if t + half + 1 <= T else T
        n = 0
        mx = -INFINITY
        for j in range(M):
            s = 0.0
            for d in range(D):
                s += q[t, d] * mem_k[j, d]
            s *= scale
            w[n] = s
            n += 1
            if s > mx:
                mx = s
        for j in range(lo, hi):
            if not valid[j]:
                continue
            s = 0.0
            for d in range(D):
                s += q[t, d] * k[j, d]
            s *= scale
            w[n] = s
            n += 1
            if s > mx:
                mx = s
        tot = 0.0
        for j in range(n):
            w[j] = exp(w[j] - mx)
            tot += w[j]
        for j in range(n):
            w[j] /= tot
        n = 0
        tot = 0.0
        for j in range(M):
            for d in range(Dv):
                out[t, d] += w[n] * mem_v[j, d]
            tot += w[n]
            n += 1
        for j in range(lo, hi):
            if not valid[j]:
                continue
            for d in range(Dv):
                out[t, d] += w[n] * v[j, d]
            tot += w[n]
            n += 1
        rowsum[t] = tot
        count[t] = n
    return out_arr, rowsum_arr, count_arr


cdef inline double _tiou(double l1, double r1, double l2, double r2) nogil:
    cdef double inter = (r1 if r1 < r2 else r2) - (l1 if l1 > l2 else l2)
    if inter < 0.0:
        inter = 0.0
    cdef double union = (r1 - l1) + (r2 - l2) - inter
    if union > 0.0:
        return inter / union
    return 0.0


def nms_sorted(const double[::1] left, const double[::1] right,
               const cnp.int64_t[::1] label, double thresh):
    cdef Py_ssize_t n = left.shape[0], i, j
    keep_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr
    cdef unsigned char[::1] dead = np.zeros(n, dtype=np.uint8)
    with nogil:
        for i in range(n):
            if dead[i]:
                continue
            keep[i] = 1
            for j in range(i + 1, n):
                if dead[j] or label[j] != label[i]:
                    continue
                if _tiou(left[i], right[i], left[j], right[j]) > thresh:
                    dead[j] = 1
    return keep_arr


def greedy_match(const double[::1] d_start, const double[::1] d_end,
                 const cnp.int64_t[::1] d_group,
                 const double[::1] g_start, const double[::1] g_end,
                 const cnp.int64_t[::1] g_group, double thresh):
    cdef Py_ssize_t n = d_start.shape[0], m = g_start.shape[0], i, j, best
    cdef double iou, best_iou
    match_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] match = match_arr
    cdef unsigned char[::1] used = np.zeros(m, dtype=np.uint8)
    with nogil:
        for i in range(n):
            best = -1
            best_iou = -1.0
            for j in range(m):
                if used[j] or g_group[j] != d_group[i]:
                    continue
                iou = _tiou(d_start[i], d_end[i], g_start[j], g_end[j])
                if iou > best_iou:
                    best_iou = iou
                    best = j
            if best >= 0 and best_iou >= thresh:
                match[i] = best
                used[best] = 1
    return match_arr
