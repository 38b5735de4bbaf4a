"""Feature file to detections for one or many videos."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from .model import forward
from .postprocess import PostprocessParams, postprocess


def detect_video(seq, cfg, weights, params=None, fps=None):
    params = params or PostprocessParams(feat_stride=cfg.feat_stride)
    params = replace(params, frames_per_chunk=seq.frames_per_chunk)
    raw = forward(seq, cfg, weights)
    return postprocess(raw, fps or seq.fps, params, seq.video_id)


def detect_many(seqs, cfg, weights, params=None, fps=None, workers=1):
    """Detections for every sequence, in input order. Videos run independently."""
    weights.validate(cfg)
    if workers <= 1:
        return [detect_video(s, cfg, weights, params, fps) for s in seqs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: detect_video(s, cfg, weights, params, fps), seqs))
