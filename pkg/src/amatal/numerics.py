"""Deterministic numeric kernels the detector is assembled from.

Storage is float32; reductions run in float64 and are rounded back to
float32 on output. Feature maps are channel-major (C x T); attention inputs
are token-major (T x D).
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class MaskedSequence:
    """A C x T feature map with a length-T validity mask."""

    features: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if feats.ndim != 2:
            raise ConfigError(f"features must be 2-D (C x T), got shape {feats.shape}")
        if mask.shape != (feats.shape[1],):
            raise ConfigError(
                f"mask length {mask.shape} does not match T={feats.shape[1]}"
            )
        if not np.isfinite(feats).all():
            raise DataError("features contain non-finite values")
        feats = feats.copy()
        feats[:, ~mask] = 0.0
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, features):
        features = np.asarray(features)
        return cls(features, np.ones(features.shape[1], dtype=bool))

    @property
    def channels(self):
        return self.features.shape[0]

    @property
    def length(self):
        return self.features.shape[1]


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")


def masked_conv1d(x, w, b, stride=1):
    """1-D convolution that ignores invalid steps and zeroes invalid outputs.

    ``w`` has shape (C_out, C_in, k) with odd k; padding is k // 2 zeros on
    both sides, so the output length is ceil(T / stride).
    """
    w = np.asarray(w, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if w.ndim != 3:
        raise ConfigError(f"conv kernel must be 3-D (C_out, C_in, k), got {w.shape}")
    c_out, c_in, k = w.shape
    if k % 2 != 1:
        raise ConfigError(f"conv kernel size must be odd, got {k}")
    if c_in != x.channels:
        raise ConfigError(f"conv expects {c_in} input channels, got {x.channels}")
    if b.shape != (c_out,):
        raise ConfigError(f"conv bias shape {b.shape} does not match ({c_out},)")
    if stride not in (1, 2):
        raise ConfigError(f"stride must be 1 or 2, got {stride}")
    _check_finite("conv weight", w)
    _check_finite("conv bias", b)

    T = x.length
    t_out = -(-T // stride)
    half = k // 2
    xin = np.zeros((c_in, T + 2 * half))
    xin[:, half:half + T] = x.features
    w64 = w.astype(np.float64)
    acc = np.zeros((c_out, t_out))
    span = stride * (t_out - 1) + 1
    for j in range(k):
        acc += w64[:, :, j] @ xin[:, j:j + span:stride]
    acc += b.astype(np.float64)[:, None]
    mask = x.mask[::stride]
    acc[:, ~mask] = 0.0
    return MaskedSequence(acc.astype(np.float32), mask)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize each time step across channels, then scale and shift."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError(f"layer_norm needs a C x T matrix with C > 0, got {x.shape}")
    if eps < 0:
        raise ConfigError(f"layer_norm eps must be >= 0, got {eps}")
    C = x.shape[0]
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ConfigError(f"layer_norm affine params must have shape ({C},)")
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=0, keepdims=True)
    centered = x64 - mu
    var = (centered * centered).mean(axis=0, keepdims=True)
    out = centered / np.sqrt(var + eps)
    out = out * gamma[:, None] + beta[:, None]
    return out.astype(np.float32)


def masked_layer_norm(x, gamma, beta, eps=1e-5):
    out = layer_norm(x.features, gamma, beta, eps)
    return MaskedSequence(out, x.mask)


def max_pool1d_same(x, k, mask=None):
    """Stride-1 max pool that preserves T; padding and invalid steps are -inf."""
    if k < 1 or k % 2 != 1:
        raise ConfigError(f"max-pool kernel size must be odd, got {k}")
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise ConfigError(f"max-pool input must be C x T, got {x.shape}")
    if mask is None:
        valid = np.ones(x.shape[1], dtype=np.uint8)
    else:
        valid = np.ascontiguousarray(mask, dtype=np.uint8)
    out = kernels.max_pool1d(np.ascontiguousarray(x, dtype=np.float64), k, valid)
    return np.asarray(out).astype(np.float32)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0)


def _as_tokens(name, a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ConfigError(f"{name} must be 2-D (T x D), got {a.shape}")
    return a.astype(np.float64)


def dense_attention(q, k, v):
    """softmax(Q K^T / sqrt(D)) V over all positions."""
    q, k, v = _as_tokens("Q", q), _as_tokens("K", k), _as_tokens("V", v)
    D = q.shape[1]
    if D == 0:
        raise ConfigError("attention dimension D must be > 0")
    if k.shape[1] != D or k.shape[0] != v.shape[0]:
        raise ConfigError(f"incompatible Q/K/V shapes {q.shape}, {k.shape}, {v.shape}")
    s = q @ k.T / np.sqrt(D)
    s -= s.max(axis=1, keepdims=True)
    w = np.exp(s)
    w /= w.sum(axis=1, keepdims=True)
    return (w @ v).astype(np.float32)


@dataclass(frozen=True)
class AttentionStats:
    """Per-query softmax diagnostics from :func:`windowed_attention`."""

    row_sums: np.ndarray
    counts: np.ndarray
    weights: Optional[np.ndarray] = None


def _windowed_dense(q, k, v, valid, half, mem_k, mem_v, scale, position_bias):
    T = q.shape[0]
    M = mem_k.shape[0]
    idx = np.arange(T)
    offsets = idx[None, :] - idx[:, None]
    allowed = (np.abs(offsets) <= half) & valid[None, :]
    s = q @ k.T * scale
    if position_bias is not None:
        s = s + np.asarray(position_bias(offsets), dtype=np.float64)
    s = np.where(allowed, s, -np.inf)
    if M:
        s = np.concatenate([q @ mem_k.T * scale, s], axis=1)
        allowed = np.concatenate([np.ones((T, M), dtype=bool), allowed], axis=1)
        v = np.concatenate([mem_v, v])
    out = np.zeros((T, v.shape[1]))
    weights = np.zeros_like(s)
    rows = valid & allowed.any(axis=1)
    sr = s[rows]
    sr = sr - sr.max(axis=1, keepdims=True)
    w = np.exp(sr)
    w /= w.sum(axis=1, keepdims=True)
    weights[rows] = w
    out[rows] = w @ v
    counts = np.where(valid, allowed.sum(axis=1), 0)
    return out, weights, counts


def windowed_attention(
    x,
    window=9,
    memory=None,
    wq=None,
    wk=None,
    wv=None,
    position_bias: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    return_stats=False,
    dense=False,
):
    """Local self-attention over a masked C x T sequence.

    Position t attends to valid positions within +-(window // 2). When
    ``memory`` (M x C cached hidden states from a previous segment) is
    given, its tokens are prepended to every position's key/value set.
    ``wq``/``wk``/``wv`` are optional C x C projections applied as
    ``token @ w``; identity when omitted. ``position_bias`` maps the
    relative-offset matrix (key - query) to additive logits; it is a hook
    and not used by default. Invalid query positions output zeros.

    ``dense=True`` routes through a full masked score matrix instead of the
    windowed kernel, which also fills ``AttentionStats.weights``.
    """
    if window < 1 or window % 2 != 1:
        raise ConfigError(f"attention window must be odd, got {window}")
    tokens = x.features.T.astype(np.float64)
    D = tokens.shape[1]
    if D == 0:
        raise ConfigError("attention dimension D must be > 0")
    mem = np.zeros((0, D)) if memory is None else np.asarray(memory, dtype=np.float64)
    if mem.ndim != 2 or mem.shape[1] != D:
        raise ConfigError(f"memory must be M x {D}, got {mem.shape}")

    def proj(a, w):
        return a if w is None else a @ np.asarray(w, dtype=np.float64)

    q, k, v = proj(tokens, wq), proj(tokens, wk), proj(tokens, wv)
    mem_k, mem_v = proj(mem, wk), proj(mem, wv)
    scale = 1.0 / np.sqrt(q.shape[1])
    half = window // 2
    valid = x.mask

    weights = None
    if position_bias is not None or dense:
        out, weights, counts = _windowed_dense(
            q, k, v, valid, half, mem_k, mem_v, scale, position_bias
        )
        rowsum = weights.sum(axis=1)
    else:
        out, rowsum, counts = kernels.window_attention(
            np.ascontiguousarray(q),
            np.ascontiguousarray(k),
            np.ascontiguousarray(v),
            np.ascontiguousarray(valid, dtype=np.uint8),
            half,
            np.ascontiguousarray(mem_k),
            np.ascontiguousarray(mem_v),
            scale,
        )
    result = MaskedSequence(np.asarray(out).T.astype(np.float32), valid)
    if return_stats:
        stats = AttentionStats(np.asarray(rowsum), np.asarray(counts), weights)
        return result, stats
    return result
