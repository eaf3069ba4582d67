"""Command-line interface.

Subcommands: synth, align, track, eval, quality-train, quality-predict.
Exit codes: 0 on success, 2 on I/O or schema errors, 3 on algorithmic
failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .align import select_candidates
from .chamfer import nominate
from .config import RunConfig, build_run_config, parse_config_file
from .evaluation import evaluate
from .imaging import distance_transform, foreground_mask, read_gray, sobel_edges, write_gray
from .io_utils import (
    SchemaError,
    dump_json,
    frame_result_to_json,
    load_json,
    load_labels,
    predictions_from_records,
    read_results_jsonl,
    write_results_jsonl,
)
from .quality import (
    RegressionModel,
    SvmModel,
    alignment_quality_target,
    detect_tracking_failure,
    predict_alignment_quality,
    svm_margin,
    train_regression,
    train_svm,
)
from .synth import LeafSpec, SynthSpec, render_video
from .templates import Pose, build_library, default_templates, load_templates
from .track import make_frame_result, track_video

FRAME_EXTENSIONS = (".png", ".pgm")


def _add_config_flags(parser):
    parser.add_argument("--config", default=None, help="key=value config file")
    for f in fields(RunConfig):
        parser.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f"cfg_{f.name}",
            default=None,
            metavar="V",
            help=f"override config key {f.name}",
        )


def _run_config(args):
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(RunConfig)}
    return build_run_config(file_values, overrides)


def _load_library(cfg):
    if cfg.templates:
        basic = load_templates(cfg.templates)
    else:
        basic = default_templates(cfg.shapes, cfg.template_half_length)
    return build_library(basic, cfg.scale_list(), cfg.rotation_step)


def _leaf_spec_from_json(item):
    pose = Pose(
        theta=float(item.get("theta", 0.0)),
        r=float(item.get("r", 1.0)),
        tx=float(item["tx"]),
        ty=float(item["ty"]),
    )
    death = item.get("death")
    return LeafSpec(
        pose0=pose,
        half_length=float(item.get("half_length", 10.0)),
        aspect=float(item.get("aspect", 0.4)),
        taper=float(item.get("taper", 0.0)),
        d_theta=float(item.get("d_theta", 0.0)),
        d_r=float(item.get("d_r", 0.0)),
        vx=float(item.get("vx", 0.0)),
        vy=float(item.get("vy", 0.0)),
        birth=int(item.get("birth", 0)),
        death=None if death is None else int(death),
        intensity=float(item.get("intensity", 0.8)),
    )


def _synth_spec_from_json(payload):
    try:
        leaves = [_leaf_spec_from_json(item) for item in payload["leaves"]]
        return SynthSpec(
            width=int(payload["width"]),
            height=int(payload["height"]),
            n_frames=int(payload["n_frames"]),
            leaves=leaves,
            noise=float(payload.get("noise", 0.02)),
            background=float(payload.get("background", 0.05)),
            blur_sigma=float(payload.get("blur_sigma", 1.0)),
            seed=int(payload.get("seed", 0)),
            video_id=str(payload.get("video_id", "synth")),
            min_label_area=int(payload.get("min_label_area", 0)),
        )
    except KeyError as err:
        raise SchemaError(f"synth spec is missing key {err.args[0]!r}") from err


def cmd_synth(args):
    payload = load_json(args.spec)
    spec = _synth_spec_from_json(payload)
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    frames, truth = render_video(spec)
    for i, frame in enumerate(frames):
        write_gray(out / "frames" / f"frame_{i:04d}.png", frame)
    labels = {"video_id": truth["video_id"], "frames": truth["frames"]}
    dump_json(labels, out / "labels.json")
    poses = {
        "video_id": truth["video_id"],
        "frames": [
            [
                None if p is None else {"theta": p.theta, "r": p.r, "tx": p.tx, "ty": p.ty}
                for p in row
            ]
            for row in truth["poses"]
        ],
    }
    dump_json(poses, out / "poses.json")
    return 0


def _render_overlay(img, result, path):
    base = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    rgb = Image.merge("RGB", [Image.fromarray(base)] * 3)
    draw = ImageDraw.Draw(rgb)
    for leaf in result.leaves:
        for tip, color in zip(leaf.tips, ((255, 64, 64), (255, 224, 64))):
            x, y = float(tip[0]), float(tip[1])
            draw.line([(x - 3, y), (x + 3, y)], fill=color)
            draw.line([(x, y - 3), (x, y + 3)], fill=color)
        draw.text((float(leaf.tips[0][0]) + 4, float(leaf.tips[0][1])), str(leaf.leaf_id), fill=(64, 255, 64))
    rgb.save(path)


def cmd_align(args):
    if not os.path.exists(args.frame):
        raise SchemaError(f"cannot read frame: {args.frame}")
    cfg = _run_config(args)
    img = read_gray(args.frame)
    mask = foreground_mask(img)
    edges = sobel_edges(img, mask, cfg.edge_threshold)
    dt = distance_transform(edges)
    library = _load_library(cfg)
    nom = nominate(library, edges, dt, mask, overlap_min=cfg.overlap_min, jobs=cfg.jobs)
    cands = select_candidates(nom, mask.vector().astype(np.float64), cfg.align_config())
    result = make_frame_result(0, cands)
    dump_json(frame_result_to_json(result), args.out)
    if args.overlay:
        _render_overlay(img, result, args.overlay)
    return 0


def _list_frames(video_dir):
    paths = sorted(
        p for p in Path(video_dir).iterdir() if p.suffix.lower() in FRAME_EXTENSIONS
    )
    if not paths:
        raise SchemaError(f"no frames found in {video_dir}")
    return paths


def cmd_track(args):
    cfg = _run_config(args)
    paths = _list_frames(args.video)
    frames = [read_gray(p) for p in paths]
    library = _load_library(cfg)
    results = track_video(frames, library, cfg.align_config(), cfg.track_config(), jobs=cfg.jobs)
    write_results_jsonl(args.out, results)
    if args.overlay_dir:
        overlay_dir = Path(args.overlay_dir)
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for frame, result in zip(frames, results):
            _render_overlay(frame, result, overlay_dir / f"overlay_{result.frame_index:04d}.png")
    return 0


def _label_paths(path):
    p = Path(path)
    if p.is_dir():
        found = sorted(p.glob("*.json"))
        if not found:
            raise SchemaError(f"no label files found in {path}")
        return found
    return [p]


def _prediction_records(pred_path, video_id, n_videos):
    p = Path(pred_path)
    if p.is_dir():
        candidate = p / f"{video_id}.jsonl"
        if not candidate.exists():
            raise SchemaError(f"no prediction file for video {video_id!r} in {pred_path}")
        return read_results_jsonl(candidate)
    if n_videos > 1:
        raise SchemaError("one prediction file given for multiple label videos")
    return read_results_jsonl(p)


def cmd_eval(args):
    label_files = _label_paths(args.labels)
    videos = [load_labels(p) for p in label_files]
    predictions = {}
    for video in videos:
        records = _prediction_records(args.pred, video["video_id"], len(videos))
        predictions[video["video_id"]] = predictions_from_records(records)
    report = evaluate(predictions, videos)
    if args.out_json:
        dump_json(report.to_json(), args.out_json)
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    return 0


def _load_feature_rows(path, dim, target_keys):
    payload = load_json(path)
    if not isinstance(payload, list):
        raise SchemaError(f"{path}: expected a JSON list of samples")
    rows = []
    for idx, item in enumerate(payload):
        feats = item.get("features") if isinstance(item, dict) else None
        if not isinstance(feats, list) or len(feats) != dim:
            raise SchemaError(f"{path}: sample {idx} needs a {dim}-value 'features' list")
        target = None
        for key in target_keys:
            if key in item:
                target = (key, item[key])
                break
        rows.append((np.asarray(feats, dtype=np.float64), target))
    return rows


def _balance_regression(samples):
    bins = [[] for _ in range(10)]
    for sample in samples:
        index = min(int(sample[1] * 10.0), 9)
        bins[index].append(sample)
    top = max(len(b) for b in bins)
    out = []
    for b in bins:
        if not b:
            continue
        reps, extra = divmod(top, len(b))
        out.extend(b * reps + b[:extra])
    return out


def _balance_classes(samples):
    pos = [s for s in samples if s[1] == 1]
    neg = [s for s in samples if s[1] == -1]
    if not pos or not neg:
        return samples
    small, big = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    reps, extra = divmod(len(big), len(small))
    return big + small * reps + small[:extra]


def cmd_quality_train(args):
    if args.kind == "align":
        rows = _load_feature_rows(args.data, 6, ("target", "e_la"))
        samples = []
        for feats, target in rows:
            if target is None:
                raise SchemaError(f"{args.data}: alignment samples need 'target' or 'e_la'")
            key, value = target
            q = float(value) if key == "target" else alignment_quality_target(float(value))
            samples.append((feats, q))
        if args.balance:
            samples = _balance_regression(samples)
        model = train_regression(samples)
    else:
        rows = _load_feature_rows(args.data, 15, ("label",))
        samples = []
        for feats, target in rows:
            if target is None or int(target[1]) not in (-1, 1):
                raise SchemaError(f"{args.data}: tracking samples need 'label' of -1 or 1")
            samples.append((feats, int(target[1])))
        if args.balance:
            samples = _balance_classes(samples)
        model = train_svm(samples, reg_c=args.reg_c)
    dump_json(model.to_json(), args.out)
    return 0


def cmd_quality_predict(args):
    cfg = _run_config(args)
    payload = load_json(args.model)
    if args.kind == "align":
        model = RegressionModel.from_json(payload)
        rows = _load_feature_rows(args.data, 6, ())
        scores = [predict_alignment_quality(model, feats) for feats, _ in rows]
        dump_json({"scores": scores}, args.out)
    else:
        model = SvmModel.from_json(payload)
        rows = _load_feature_rows(args.data, 15, ())
        margins = [svm_margin(model, feats) for feats, _ in rows]
        out = {"margins": margins, "labels": [1 if m >= 0 else -1 for m in margins]}
        if args.detect_failures:
            runs = detect_tracking_failure(margins, sigma=cfg.margin_sigma, min_run=cfg.min_run)
            out["failures"] = [[int(a), int(b)] for a, b in runs]
        dump_json(out, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leaftrack",
        description="Joint multi-leaf segmentation, alignment, and tracking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic video with ground truth")
    p.add_argument("--spec", required=True, help="scene description JSON")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", help="segment and align one frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("track", help="track a frame directory")
    p.add_argument("--video", required=True, help="directory of PNG/PGM frames")
    p.add_argument("--out", required=True, help="results JSONL path")
    p.add_argument("--overlay-dir", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--pred", required=True, help="results JSONL file or directory")
    p.add_argument("--labels", required=True, help="label JSON file or directory")
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quality-train", help="fit a quality model")
    p.add_argument("--kind", required=True, choices=("align", "track"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--balance", action="store_true", help="resample training data")
    p.add_argument("--reg-c", type=float, default=1.0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_quality_train)

    p = sub.add_parser("quality-predict", help="score features with a model")
    p.add_argument("--kind", required=True, choices=("align", "track"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detect-failures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_quality_predict)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
