"""Command-line interface: detect, eval, ensemble, synth, inspect.

Exit codes: 0 ok, 2 format/data error, 3 config/weight mismatch,
4 unusable evaluation input.
"""
import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, kernels
from .ensemble import MODES, ensemble
from .errors import ConfigError, DataError, EvalInputError
from .formats import (
    FEATURE_MAGIC,
    WEIGHT_MAGIC,
    ground_truth,
    read_annotations,
    read_features,
    read_predictions,
    read_weights,
    write_annotations,
    write_features,
    write_predictions,
    write_weights,
    _read_bytes,
    _unpack,
)
from .metrics import DEFAULT_TIOUS, evaluate
from .model import AmaConfig
from .pipeline import detect_many
from .postprocess import PostprocessParams
from .synth import SynthSpec, diagnostic_config, diagnostic_weights, gen_dataset

EXIT_OK, EXIT_FORMAT, EXIT_CONFIG, EXIT_EVAL = 0, 2, 3, 4


def _load_config(path, overrides):
    if path:
        try:
            data = json.loads(_read_bytes(path).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise DataError(f"{path}: config must be a JSON object")
        cfg = AmaConfig.from_dict(data)
    else:
        cfg = AmaConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**changes) if changes else cfg


def _feature_paths(items):
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.amaf")))
        else:
            paths.append(p)
    return paths


def _write_sidecar(args, out):
    if getattr(args, "verbose", False):
        meta = {
            "argv": sys.argv[1:],
            "backend": kernels.BACKEND,
            "finished_unix": time.time(),
            "version": __version__,
        }
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def cmd_detect(args):
    cfg = _load_config(
        args.config,
        {"neck": args.neck, "backbone": args.backbone, "feat_stride": args.feat_stride},
    )
    seqs = [read_features(p) for p in _feature_paths(args.features)]
    weights = read_weights(args.weights, cfg)
    params = PostprocessParams(
        pre_nms_thresh=args.pre_nms_thresh,
        pre_nms_topk=args.pre_nms_topk,
        nms_iou=args.nms_iou,
        min_duration=args.min_duration,
        min_score=args.min_score,
        feat_stride=cfg.feat_stride,
    )
    results = detect_many(seqs, cfg, weights, params, args.fps, args.workers)
    dets = [d for per_video in results for d in per_video]
    write_predictions(args.out, dets, args.format)
    _write_sidecar(args, args.out)
    print(f"{len(dets)} detections from {len(seqs)} videos -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args):
    dets = read_predictions(args.pred)
    gts = ground_truth(read_annotations(args.gt))
    if not gts:
        raise EvalInputError("no ground truth")
    gt_videos = {g.video_id for g in gts}
    pred_videos = {d.video_id for d in dets}
    if dets and not (gt_videos & pred_videos):
        raise EvalInputError("predictions and ground truth share no video_id")
    dropped = pred_videos - gt_videos
    if dropped:
        print(f"ignoring predictions for {len(dropped)} videos without ground truth", file=sys.stderr)
        dets = [d for d in dets if d.video_id in gt_videos]
    report = evaluate(
        dets,
        gts,
        protocol=args.protocol,
        tious=tuple(args.tiou),
        prf_tiou=args.prf_tiou,
        score_min=args.score_min,
        count_unmatched_predictions=not args.aicity_ignore_unmatched_pred,
    )
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_json())
        _write_sidecar(args, args.out)
    return EXIT_OK


def cmd_ensemble(args):
    sources = [read_predictions(p) for p in args.inputs]
    fused = ensemble(sources, args.mode)
    write_predictions(args.out, fused, args.format)
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(
        seed=args.seed,
        n_videos=args.n_videos,
        n_chunks=args.n_chunks,
        dim=args.dim,
        plants_per_video=args.plants_per_video,
        plant_duration=args.plant_duration,
        amplitude=args.amplitude,
        noise=args.noise,
        shape=args.shape,
        fps=args.fps,
    )
    out = Path(args.out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    seqs, annots, _ = gen_dataset(spec)
    for seq in seqs:
        write_features(out / "features" / f"{seq.video_id}.amaf", seq)
    write_annotations(out / "annotations.json", annots)
    cfg = diagnostic_config(spec, channels=args.channels, num_levels=args.num_levels)
    # weights cover both necks and both backbones so --neck/--backbone can switch freely
    full = cfg.replace(neck="sppf", backbone="convTransformer")
    write_weights(out / "weights.amaw", diagnostic_weights(full, spec))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(seqs)} videos to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_inspect(args):
    buf = _read_bytes(args.path)
    magic = buf[:4]
    if magic == FEATURE_MAGIC:
        header, _ = _unpack(buf, FEATURE_MAGIC, str(args.path))
        info = {"format": "AMAF", "header": header}
    elif magic == WEIGHT_MAGIC:
        manifest, _ = _unpack(buf, WEIGHT_MAGIC, str(args.path))
        info = {"format": "AMAW", "manifest": manifest}
    else:
        raise DataError(f"{args.path}: bad magic {magic!r} at offset 0")
    print(json.dumps(info, sort_keys=True, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="amatal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector on feature files")
    p.add_argument("--features", nargs="+", required=True, help="AMAF files or directories")
    p.add_argument("--weights", required=True)
    p.add_argument("--config", help="AmaConfig JSON (defaults when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), help="default: from --out extension")
    p.add_argument("--neck", choices=("identity", "sppf"))
    p.add_argument("--backbone", choices=("conv", "convTransformer"))
    p.add_argument("--pre-nms-thresh", type=float, default=0.2)
    p.add_argument("--pre-nms-topk", type=int, default=5000)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--min-score", type=float, default=0.5)
    p.add_argument("--min-duration", type=float, default=0.0, help="in chunks")
    p.add_argument("--feat-stride", type=int)
    p.add_argument("--fps", type=float, help="override the fps stored in feature headers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--verbose", action="store_true", help="write a <out>.meta.json sidecar")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score predictions against annotations")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--protocol", choices=("map", "aicity"), default="map")
    p.add_argument("--out", help="write the report as JSON")
    p.add_argument("--tiou", type=float, nargs="+", default=list(DEFAULT_TIOUS))
    p.add_argument("--prf-tiou", type=float, default=0.5)
    p.add_argument("--score-min", type=float, default=0.5)
    p.add_argument(
        "--aicity-ignore-unmatched-pred",
        action="store_true",
        help="leave unmatched predictions out of the AI City denominator",
    )
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="fuse predictions from several runs")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--mode", choices=MODES, default="weighted")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("synth", help="write a planted-pattern dataset with diagnostic weights")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-videos", type=int, default=20)
    p.add_argument("--n-chunks", type=int, default=256)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--plants-per-video", type=int, default=4)
    p.add_argument("--plant-duration", type=int, default=8)
    p.add_argument("--amplitude", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--shape", choices=("triangular", "boxcar"), default="triangular")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--num-levels", type=int, default=6)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="dump an AMAF header or AMAW manifest")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvalInputError as exc:
        print(f"eval input error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
