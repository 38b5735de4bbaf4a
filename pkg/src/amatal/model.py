"""The point-based detector: stem, pyramid backbone, neck and heads."""
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .numerics import (
    MaskedSequence,
    masked_conv1d,
    masked_layer_norm,
    max_pool1d_same,
    relu,
    windowed_attention,
)

BACKBONES = ("conv", "convTransformer")
NECKS = ("identity", "sppf")
KNOWN_DIMS = (768, 1408)


def default_reg_ranges(num_levels):
    """Regression ranges in chunks: [0,4], [4,8], [8,16], ... with an open top."""
    if num_levels == 1:
        return [(0, 10000)]
    ranges = [(0, 4)]
    for lvl in range(1, num_levels - 1):
        ranges.append((2 ** (lvl + 1), 2 ** (lvl + 2)))
    ranges.append((2 ** num_levels, 10000))
    return ranges


@dataclass(frozen=True)
class AmaConfig:
    input_dim: int = 768
    channels: int = 256
    num_levels: int = 6
    backbone: str = "conv"
    neck: str = "identity"
    window: int = 9
    sppf_kernel: int = 5
    num_classes: int = 16
    reg_ranges: Optional[tuple] = None
    feat_stride: int = 16
    frames_per_chunk: int = 16
    backbone_kernel: int = 3
    head_kernel: int = 1
    ln_eps: float = 1e-5
    allow_any_dim: bool = False

    def __post_init__(self):
        ranges = self.reg_ranges
        if ranges is None:
            ranges = default_reg_ranges(self.num_levels) if self.num_levels >= 1 else []
        object.__setattr__(self, "reg_ranges", tuple(tuple(r) for r in ranges))
        self.validate()

    def validate(self):
        if self.num_levels < 1:
            raise ConfigError(f"num_levels must be >= 1, got {self.num_levels}")
        if len(self.reg_ranges) != self.num_levels:
            raise ConfigError(
                f"expected {self.num_levels} regression ranges, got {len(self.reg_ranges)}"
            )
        prev_hi = None
        for lo, hi in self.reg_ranges:
            if not lo < hi:
                raise ConfigError(f"regression range ({lo}, {hi}) is empty")
            if prev_hi is not None and lo < prev_hi:
                raise ConfigError("regression ranges must be increasing and non-overlapping")
            prev_hi = hi
        if self.reg_ranges[-1][1] < 10000:
            raise ConfigError("top regression range must reach at least 10000 chunks")
        if not self.allow_any_dim and self.input_dim not in KNOWN_DIMS:
            raise ConfigError(
                f"input_dim must be one of {KNOWN_DIMS} (set allow_any_dim to override), "
                f"got {self.input_dim}"
            )
        if self.input_dim < 1 or self.channels < 1 or self.num_classes < 1:
            raise ConfigError("input_dim, channels and num_classes must be positive")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.neck not in NECKS:
            raise ConfigError(f"neck must be one of {NECKS}, got {self.neck!r}")
        for name in ("window", "sppf_kernel", "backbone_kernel", "head_kernel"):
            val = getattr(self, name)
            if val < 1 or val % 2 != 1:
                raise ConfigError(f"{name} must be odd, got {val}")
        if self.neck == "sppf" and self.channels % 2:
            raise ConfigError(f"SPPF neck needs an even channel count, got {self.channels}")
        if self.feat_stride < 1 or self.frames_per_chunk < 1:
            raise ConfigError("feat_stride and frames_per_chunk must be positive")

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        if "num_levels" in changes and "reg_ranges" not in changes:
            data["reg_ranges"] = None
        return AmaConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data["reg_ranges"] = [list(r) for r in self.reg_ranges]
        return data

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def expected_shapes(cfg):
    """Every tensor name the forward pass reads, with its exact shape."""
    C, D, L = cfg.channels, cfg.input_dim, cfg.num_levels
    hk = cfg.head_kernel
    shapes = {
        "stem.w": (C, D, 1),
        "stem.b": (C,),
        "stem.ln.g": (C,),
        "stem.ln.b": (C,),
    }
    for lvl in range(1, L):
        p = f"backbone.{lvl}"
        shapes[f"{p}.w"] = (C, C, cfg.backbone_kernel)
        shapes[f"{p}.b"] = (C,)
        shapes[f"{p}.ln.g"] = (C,)
        shapes[f"{p}.ln.b"] = (C,)
    if cfg.backbone == "convTransformer":
        for lvl in range(L):
            p = f"attn.{lvl}"
            shapes[f"{p}.ln.g"] = (C,)
            shapes[f"{p}.ln.b"] = (C,)
            for proj in ("wq", "wk", "wv", "wo"):
                shapes[f"{p}.{proj}"] = (C, C)
    for lvl in range(L):
        p = f"neck.{lvl}"
        if cfg.neck == "sppf":
            shapes[f"{p}.conv1.w"] = (C // 2, C, 1)
            shapes[f"{p}.conv1.b"] = (C // 2,)
            shapes[f"{p}.conv2.w"] = (C, 2 * C, 1)
            shapes[f"{p}.conv2.b"] = (C,)
        shapes[f"{p}.ln.g"] = (C,)
        shapes[f"{p}.ln.b"] = (C,)
    for head, n_out in (("cls_head", cfg.num_classes), ("reg_head", 2)):
        shapes[f"{head}.0.w"] = (C, C, hk)
        shapes[f"{head}.0.b"] = (C,)
        shapes[f"{head}.1.w"] = (n_out, C, hk)
        shapes[f"{head}.1.b"] = (n_out,)
    return shapes


@dataclass
class WeightBundle:
    """Named float32 tensors."""

    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return sorted(self.tensors)

    def validate(self, cfg):
        expected = expected_shapes(cfg)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ConfigError(f"missing tensor {name!r}")
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise ConfigError(
                    f"tensor {name!r} has shape {list(got)}, expected {list(shape)}"
                )
            if not np.isfinite(self.tensors[name]).all():
                raise DataError(f"tensor {name!r} contains non-finite values")


@dataclass(frozen=True)
class PyramidLevel:
    features: MaskedSequence
    stride: int
    points: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RawPrediction:
    """Head outputs per pyramid level.

    ``cls_logits[l]`` is T_l x num_classes, ``offsets[l]`` is T_l x 2 in units
    of that level's stride, ``points[l]`` is T_l x 4 rows of
    (t, range_left, range_right, stride) and ``masks[l]`` marks valid steps.
    """

    cls_logits: list
    offsets: list
    points: list
    masks: list
    n_chunks: int


def _feature_matrix(features):
    data = getattr(features, "data", features)
    return np.asarray(data, dtype=np.float32)


def embed_stem(features, cfg, weights, mask=None):
    """Transpose N x D chunk features to D x N and project to C channels."""
    data = _feature_matrix(features)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError("empty sequence")
    if data.shape[1] != cfg.input_dim:
        raise ConfigError(
            f"feature dim {data.shape[1]} does not match config input_dim {cfg.input_dim}"
        )
    if mask is None:
        mask = np.ones(data.shape[0], dtype=bool)
    x = MaskedSequence(data.T, mask)
    x = masked_conv1d(x, weights["stem.w"], weights["stem.b"])
    return masked_layer_norm(x, weights["stem.ln.g"], weights["stem.ln.b"], cfg.ln_eps)


def _attention_block(x, lvl, cfg, weights, memory):
    p = f"attn.{lvl}"
    h = masked_layer_norm(x, weights[f"{p}.ln.g"], weights[f"{p}.ln.b"], cfg.ln_eps)
    a = windowed_attention(
        h,
        cfg.window,
        memory=memory,
        wq=weights[f"{p}.wq"],
        wk=weights[f"{p}.wk"],
        wv=weights[f"{p}.wv"],
    )
    update = np.asarray(weights[f"{p}.wo"], dtype=np.float64).T @ a.features.astype(np.float64)
    return MaskedSequence((x.features + update).astype(np.float32), x.mask)


def build_pyramid(stem, cfg, weights, memory=None):
    """Level 0 is the stem; each further level is a stride-2 conv block.

    With the convTransformer backbone every level passes through a residual
    windowed-attention block before it is downsampled. ``memory`` optionally
    maps level index to cached M x C hidden states.
    """
    L = cfg.num_levels
    if stem.length < 2 ** (L - 1):
        raise ConfigError(
            f"sequence too short for {L} levels: T={stem.length} < {2 ** (L - 1)}"
        )
    memory = memory or {}
    levels = []
    x = stem
    for lvl in range(L):
        if lvl > 0:
            p = f"backbone.{lvl}"
            x = masked_conv1d(x, weights[f"{p}.w"], weights[f"{p}.b"], stride=2)
            x = masked_layer_norm(x, weights[f"{p}.ln.g"], weights[f"{p}.ln.b"], cfg.ln_eps)
            x = MaskedSequence(relu(x.features), x.mask)
        if cfg.backbone == "convTransformer":
            x = _attention_block(x, lvl, cfg, weights, memory.get(lvl))
        levels.append(PyramidLevel(x, 2 ** lvl))
    return levels


def neck_identity(levels, cfg, weights):
    out = []
    for lvl, level in enumerate(levels):
        p = f"neck.{lvl}"
        x = masked_layer_norm(level.features, weights[f"{p}.ln.g"], weights[f"{p}.ln.b"], cfg.ln_eps)
        out.append(PyramidLevel(x, level.stride, level.points))
    return out


def sppf_pool(x, k, mask=None):
    """Three chained stride-1 max pools; returns (y1, y2, y3)."""
    y1 = max_pool1d_same(x, k, mask)
    y2 = max_pool1d_same(y1, k, mask)
    y3 = max_pool1d_same(y2, k, mask)
    return y1, y2, y3


def neck_sppf(levels, cfg, weights):
    """Per level: 1x1 conv C -> C/2, pooled cascade, concat, 1x1 conv 2C -> C, LN."""
    if cfg.channels % 2:
        raise ConfigError(f"SPPF neck needs an even channel count, got {cfg.channels}")
    if cfg.sppf_kernel % 2 != 1:
        raise ConfigError(f"SPPF kernel must be odd, got {cfg.sppf_kernel}")
    out = []
    for lvl, level in enumerate(levels):
        p = f"neck.{lvl}"
        x = masked_conv1d(level.features, weights[f"{p}.conv1.w"], weights[f"{p}.conv1.b"])
        ys = sppf_pool(x.features, cfg.sppf_kernel, x.mask)
        cat = MaskedSequence(np.concatenate([x.features, *ys], axis=0), x.mask)
        z = masked_conv1d(cat, weights[f"{p}.conv2.w"], weights[f"{p}.conv2.b"])
        z = masked_layer_norm(z, weights[f"{p}.ln.g"], weights[f"{p}.ln.b"], cfg.ln_eps)
        out.append(PyramidLevel(z, level.stride, level.points))
    return out


def generate_points(levels, cfg):
    """Anchor rows (t, range_left, range_right, stride) with t = i * stride."""
    if len(cfg.reg_ranges) != len(levels):
        raise ConfigError(
            f"{len(cfg.reg_ranges)} regression ranges for {len(levels)} levels"
        )
    points = []
    for lvl, level in enumerate(levels):
        stride = 2 ** lvl
        n = level.features.length
        pts = np.empty((n, 4))
        pts[:, 0] = np.arange(n) * stride
        pts[:, 1] = cfg.reg_ranges[lvl][0]
        pts[:, 2] = cfg.reg_ranges[lvl][1]
        pts[:, 3] = stride
        points.append(pts)
    return points


def _head(x, weights, name):
    h = masked_conv1d(x, weights[f"{name}.0.w"], weights[f"{name}.0.b"])
    h = MaskedSequence(relu(h.features), h.mask)
    return masked_conv1d(h, weights[f"{name}.1.w"], weights[f"{name}.1.b"])


def heads_forward(levels, cfg, weights):
    """Shared classification and regression heads applied to every level.

    Returns ``(cls_logits, offsets)`` lists; offsets pass through relu.
    """
    logits, offsets = [], []
    for level in levels:
        cls = _head(level.features, weights, "cls_head")
        reg = _head(level.features, weights, "reg_head")
        logits.append(np.ascontiguousarray(cls.features.T))
        offsets.append(np.ascontiguousarray(relu(reg.features).T))
    return logits, offsets


def forward(features, cfg, weights, mask=None, memory=None):
    """Backbone -> neck -> heads for one video."""
    weights.validate(cfg)
    stem = embed_stem(features, cfg, weights, mask)
    levels = build_pyramid(stem, cfg, weights, memory)
    if cfg.neck == "sppf":
        levels = neck_sppf(levels, cfg, weights)
    else:
        levels = neck_identity(levels, cfg, weights)
    points = generate_points(levels, cfg)
    logits, offsets = heads_forward(levels, cfg, weights)
    return RawPrediction(
        cls_logits=logits,
        offsets=offsets,
        points=points,
        masks=[lv.features.mask for lv in levels],
        n_chunks=int(stem.mask.sum()),
    )
