"""Seeded synthetic datasets, random and diagnostic weight bundles.

All randomness comes from numpy's PCG64 bit generator seeded with the
SynthSpec's 64-bit seed. Background features are uniform in [-noise, noise]
(drawn with ``Generator.random``), so generated bytes depend only on the
seed and the PCG64 algorithm.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .formats import FeatureSequence, VideoAnnotation
from .model import AmaConfig, WeightBundle, expected_shapes

SHAPES = ("triangular", "boxcar")
# magnitude of the two constant anchor channels used by diagnostic weights
ANCHOR = 1000.0


@dataclass(frozen=True)
class Plant:
    label: int
    start_chunk: int
    duration_chunks: int

    @property
    def end_chunk(self):
        return self.start_chunk + self.duration_chunks


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_videos: int = 1
    n_chunks: int = 256
    dim: int = 768
    classes: tuple = tuple(range(1, 17))
    plants: Optional[tuple] = None  # per-video tuples of Plant; overrides random placement
    plants_per_video: int = 4
    plant_duration: int = 8
    min_gap: int = 8
    amplitude: float = 4.0
    noise: float = 0.1
    shape: str = "triangular"
    fps: float = 30.0
    frames_per_chunk: int = 16
    video_prefix: str = "video"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"plant shape must be one of {SHAPES}, got {self.shape!r}")
        if self.n_chunks < 1 or self.n_videos < 0:
            raise ConfigError("n_chunks must be >= 1 and n_videos >= 0")
        if self.classes and max(self.classes) > self.dim:
            raise ConfigError("dim must cover every planted class channel")
        if self.plants is not None and len(self.plants) != self.n_videos:
            raise ConfigError(f"plants given for {len(self.plants)} videos, expected {self.n_videos}")


def _check_plants(plants, n_chunks):
    spans = sorted((p.start_chunk, p.end_chunk) for p in plants)
    for p in plants:
        if p.duration_chunks < 1:
            raise ConfigError(f"plant duration must be >= 1, got {p.duration_chunks}")
        if p.start_chunk < 0 or p.end_chunk > n_chunks:
            raise ConfigError(f"plant {p} lies outside 0..{n_chunks}")
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ConfigError(f"overlapping plants [{s0},{e0}) and [{s1},{e1})")


def _place(rng, spec):
    n = spec.plants_per_video
    if n == 0:
        return ()
    d, gap = spec.plant_duration, spec.min_gap
    # lay out n blocks of (gap + d) then distribute the slack randomly
    slack = spec.n_chunks - n * (d + gap) - gap
    if slack < 0:
        raise ConfigError(f"{n} plants of {d} chunks with gap {gap} do not fit in {spec.n_chunks} chunks")
    cuts = np.sort(np.floor(rng.random(n) * (slack + 1)).astype(int))
    replace = n > len(spec.classes)
    order = rng.permutation(len(spec.classes))
    labels = [spec.classes[i] for i in (order[:n] if not replace else order[np.arange(n) % len(order)])]
    return tuple(
        Plant(int(labels[i]), int(gap + i * (d + gap) + cuts[i]), d) for i in range(n)
    )


def plant_profile(plant, n_chunks, amplitude, shape):
    """Signal added to the plant's class channel, length ``n_chunks``."""
    sig = np.zeros(n_chunks)
    s, d = plant.start_chunk, plant.duration_chunks
    if shape == "boxcar":
        sig[s:s + d] = amplitude
        return sig
    center = s + d // 2
    idx = np.arange(s, s + d)
    sig[s:s + d] = amplitude * np.maximum(0.0, 1.0 - np.abs(idx - center) / (d / 2.0))
    return sig


def gen_dataset(spec):
    """Return (feature sequences, annotations, plants per video)."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    seqs, annots, all_plants = [], [], []
    chunk_s = spec.frames_per_chunk / spec.fps
    for vi in range(spec.n_videos):
        plants = tuple(spec.plants[vi]) if spec.plants is not None else _place(rng, spec)
        _check_plants(plants, spec.n_chunks)
        data = spec.noise * (2.0 * rng.random((spec.n_chunks, spec.dim)) - 1.0)
        for p in plants:
            data[:, p.label - 1] += plant_profile(p, spec.n_chunks, spec.amplitude, spec.shape)
        vid = f"{spec.video_prefix}_{vi:04d}"
        seqs.append(FeatureSequence(vid, data.astype(np.float32), spec.fps, spec.frames_per_chunk))
        segments = [
            (p.label, p.start_chunk * chunk_s, p.end_chunk * chunk_s)
            for p in sorted(plants, key=lambda p: p.start_chunk)
        ]
        annots.append(VideoAnnotation(vid, spec.fps, spec.n_chunks * chunk_s, segments))
        all_plants.append(plants)
    return seqs, annots, all_plants


def init_weights(cfg, seed=0, scale=1.0):
    """Random weights: N(0, scale^2 / fan_in) kernels, small random biases, identity norms."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = {}
    for name, shape in sorted(expected_shapes(cfg).items()):
        if name.endswith(".ln.g"):
            arr = np.ones(shape)
        elif name.endswith(".ln.b"):
            arr = np.zeros(shape)
        elif name.endswith(".b"):
            arr = 0.1 * scale * rng.standard_normal(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            arr = rng.standard_normal(shape) * scale / np.sqrt(fan_in)
        tensors[name] = arr.astype(np.float32)
    return WeightBundle(tensors)


def diagnostic_config(spec, **overrides):
    params = dict(
        input_dim=spec.dim,
        channels=64,
        num_levels=6,
        num_classes=16,
        feat_stride=spec.frames_per_chunk,
        frames_per_chunk=spec.frames_per_chunk,
        allow_any_dim=spec.dim not in (768, 1408),
    )
    params.update(overrides)
    return AmaConfig(**params)


def diagnostic_weights(cfg, spec):
    """Hand-built weights under which planted patterns are detected exactly.

    Level 0 carries class channel c straight through to the class-c logit
    ``gain * (x - A/2)``, so scores exceed 0.5 only where the pattern is above
    half amplitude. Two constant anchor channels (+-ANCHOR, from conv biases)
    dominate every layer norm's variance, which makes each norm an
    approximately identity map with gamma = ANCHOR * sqrt(2 / C). Coarser
    levels drop the class channels, so only stride-1 points fire.

    The regression head emits constant offsets of half the plant duration,
    shifted by the half-chunk centering of the timestamp conversion so the
    decoded peak segment lands on the planted chunk boundaries.
    """
    n_cls, C = cfg.num_classes, cfg.channels
    if spec.dim < n_cls:
        raise ConfigError(f"dim {spec.dim} must be >= num_classes {n_cls}")
    need = n_cls + 2
    if C < need or (cfg.neck == "sppf" and C // 2 < need):
        raise ConfigError(f"diagnostic weights need channels >= {need} (per SPPF half)")
    A = spec.amplitude
    gain = 16.0 / A
    a_pos, a_neg = n_cls, n_cls + 1
    ln_gain = ANCHOR * np.sqrt(2.0 / C)
    d = spec.plant_duration
    shift = 0.5 * cfg.frames_per_chunk / cfg.feat_stride
    offsets = (d // 2 + shift, d - d // 2 - shift)

    t = {name: np.zeros(shape) for name, shape in expected_shapes(cfg).items()}
    for name in t:
        if name.endswith(".ln.g"):
            t[name][:] = ln_gain
    for c in range(n_cls):
        t["stem.w"][c, c, 0] = 1.0
    t["stem.b"][a_pos] = ANCHOR
    t["stem.b"][a_neg] = -ANCHOR
    for lvl in range(1, cfg.num_levels):
        t[f"backbone.{lvl}.b"][a_pos] = ANCHOR
        t[f"backbone.{lvl}.b"][a_neg] = -ANCHOR
    if cfg.backbone == "convTransformer":
        for lvl in range(cfg.num_levels):
            t[f"attn.{lvl}.ln.g"][:] = 1.0
    if cfg.neck == "sppf":
        for lvl in range(cfg.num_levels):
            for c in range(need):
                t[f"neck.{lvl}.conv1.w"][c, c, 0] = 1.0
                t[f"neck.{lvl}.conv2.w"][c, c, 0] = 1.0
    mid = cfg.head_kernel // 2
    for c in range(n_cls):
        t["cls_head.0.w"][c, c, mid] = 1.0
        t["cls_head.1.w"][c, c, mid] = gain
    t["cls_head.1.b"][:] = -gain * A / 2.0
    t["reg_head.1.b"][:] = offsets
    return WeightBundle({k: v.astype(np.float32) for k, v in t.items()})
