"""Command-line entry points: simulate, match, shift, link, eval, ablation."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io as _stdio
import sys
from pathlib import Path

from . import io
from .eval import THRESHOLDS, EvalReport, frame_map, threshold_key, video_map
from .matching import compose_to_reference, match_clip
from .shift import POSITIONS, ShiftSpec, apply_shift, parse_fraction
from .simulator import VARIANTS, SceneGenerationError, generate_scene, run_ablation
from .tubes import LinkParams, link_video


class CliError(Exception):
    pass


def _emit(out: io.AtomicOutputs, path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        out.write_text(path, text)


def _load_config(path, seed):
    cfg = io.read_config(path)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def cmd_simulate(args):
    cfg = _load_config(args.config, args.seed)
    out_dir = Path(args.out_dir)
    if not out_dir.is_dir():
        raise CliError(f"output directory {out_dir} does not exist")
    scene = generate_scene(cfg)
    video_id = f"sim-{cfg.seed}"
    det_records = [io.detection_record(video_id, d) for frame in scene.detections for d in frame]
    gt_records = [io.tube_record(video_id, t) for t in scene.gt_tubes]
    perms = {
        "schema_version": io.SCHEMA_VERSION,
        "video_id": video_id,
        "T": cfg.T,
        "N": cfg.N,
        "pair_maps": scene.planted_perms.to_lists() if scene.planted_perms else [],
        "actor_slots": [[int(s) for s in row] for row in scene.actor_slots.T],
        "actor_classes": [int(c) for c in scene.actor_classes],
    }
    with io.AtomicOutputs() as out:
        out.write_bytes(out_dir / "features.qft", io.encode_features(scene.clip))
        out.write_text(out_dir / "detections.jsonl", io.dumps_jsonl(det_records))
        out.write_text(out_dir / "gt_tubes.jsonl", io.dumps_jsonl(gt_records))
        out.write_text(out_dir / "planted_perms.json", io.dumps_json(perms))
        out.write_text(out_dir / "scene.cfg", io.format_config(cfg))


def cmd_match(args):
    clip = io.read_features(args.features)
    if clip.frames < 2:
        raise CliError(f"matching needs at least two frames, file has T={clip.frames}")
    align = match_clip(clip)
    tracks = [compose_to_reference(align, t) for t in range(align.n_frames)]
    with io.AtomicOutputs() as out:
        _emit(out, args.out, io.dumps_json(io.alignment_record(align, tracks)))


def cmd_shift(args):
    clip = io.read_features(args.features)
    if args.alignment == "naive":
        spec = ShiftSpec(args.forward_frac, args.backward_frac, args.position, "index_naive", args.boundary)
        shifted = apply_shift(clip, spec)
    else:
        align = io.read_alignment(args.alignment)
        spec = ShiftSpec(args.forward_frac, args.backward_frac, args.position, "matched", args.boundary)
        shifted = apply_shift(clip, spec, align)
    with io.AtomicOutputs() as out:
        out.write_bytes(args.out, io.encode_features(shifted))


def _num_classes_from_dets(videos, given):
    counts = {d.num_classes for dets in videos.values() for d in dets}
    if len(counts) > 1:
        raise CliError(f"detections disagree on the number of class scores: {sorted(counts)}")
    found = counts.pop() if counts else None
    if given is not None and found is not None and given != found:
        raise CliError(f"--num-classes {given} but detections carry {found} scores")
    return given if given is not None else found


def cmd_link(args):
    params = LinkParams(args.lam, args.min_link_iou, args.score_floor)
    videos = io.read_detections(args.detections)
    num_classes = _num_classes_from_dets(videos, None)
    records = []
    for vid, dets in videos.items():
        start, frames = io.group_by_frame(dets)
        linked = link_video(frames, num_classes, params, start_frame=start)
        for c in range(num_classes):
            records.extend(io.tube_record(vid, t) for t in linked[c])
    with io.AtomicOutputs() as out:
        _emit(out, args.out, io.dumps_jsonl(records))


def _parse_thresholds(text):
    if text is None:
        return THRESHOLDS
    try:
        values = tuple(round(float(x), 10) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise CliError(f"bad --thresholds {text!r}") from exc
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise CliError(f"thresholds must be a non-empty list within [0, 1], got {text!r}")
    return values


def cmd_eval(args):
    thresholds = _parse_thresholds(args.thresholds)
    gts = io.read_tubes(args.gt)
    report = EvalReport()
    if args.metric == "frame":
        dets = io.read_detections(args.pred)
        num_classes = _num_classes_from_dets(dets, args.num_classes)
        if num_classes is None:
            num_classes = 1 + max((t.class_id for v in gts.values() for t in v), default=0)
        report.frame_map = frame_map(dets, gts, num_classes, thresholds, args.eleven_point)
    else:
        tubes = io.read_tubes(args.pred)
        num_classes = args.num_classes
        if num_classes is None:
            ids = [t.class_id for src in (tubes, gts) for v in src.values() for t in v]
            num_classes = 1 + max(ids, default=0)
        report.video_map = video_map(tubes, gts, num_classes, thresholds, args.eleven_point)
    with io.AtomicOutputs() as out:
        _emit(out, args.out, io.dumps_json(report.to_dict()))


def ablation_report(result, fraction) -> dict:
    variants = {}
    for v in VARIANTS:
        variants[v] = {}
        for metric in ("frame", "video"):
            row = result.table_row(v, metric)
            row["thresholds"] = {threshold_key(t): x for t, x in sorted(result.means[v][metric].items())}
            variants[v][f"{metric}_map"] = row
    return {
        "schema_version": io.SCHEMA_VERSION,
        "config": dataclasses.asdict(result.config),
        "fraction": str(fraction),
        "forward_fraction": str(result.spec.forward_fraction),
        "backward_fraction": str(result.spec.backward_fraction),
        "trials": len(result.seeds),
        "seeds": result.seeds,
        "variants": variants,
    }


def ablation_csv(report: dict) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "metric", "threshold", "value"])
    for v, metrics in report["variants"].items():
        for metric, row in metrics.items():
            for col in ("0.5:0.95", "0.5", "0.75"):
                writer.writerow([v, metric, col, repr(row[col])])
    return buf.getvalue()


def cmd_ablation(args):
    cfg = _load_config(args.config, args.seed)
    fraction = parse_fraction(args.fractions)
    spec = ShiftSpec(fraction, fraction, "query", "matched")
    params = LinkParams(args.lam, args.min_link_iou, args.score_floor)
    result = run_ablation(cfg, spec, args.trials, params)
    report = ablation_report(result, fraction)
    with io.AtomicOutputs() as out:
        _emit(out, args.out, io.dumps_json(report))
        if args.csv:
            out.write_text(args.csv, ablation_csv(report))


def _add_link_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=LinkParams.lambda_iou,
                   help="weight of box overlap between consecutive frames (default %(default)s)")
    p.add_argument("--min-link-iou", type=float, default=LinkParams.min_link_iou,
                   help="minimum IoU for two boxes to be linked (default %(default)s)")
    p.add_argument("--score-floor", type=float, default=LinkParams.score_floor,
                   help="stop extracting tubes below this mean score (default %(default)s)")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubematch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("config")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("match", help="match query slots across adjacent frames")
    p.add_argument("features")
    p.add_argument("--out", help="alignment JSON path (default: stdout)")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("shift", help="temporally shift a feature file")
    p.add_argument("features")
    p.add_argument("--forward-frac", type=parse_fraction, default="1/8")
    p.add_argument("--backward-frac", type=parse_fraction, default="1/8")
    p.add_argument("--alignment", default="naive", help="alignment JSON file, or 'naive'")
    p.add_argument("--position", choices=POSITIONS, default="query")
    p.add_argument("--boundary", choices=("zero", "copy"), default="zero")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("link", help="link detections into tubes")
    p.add_argument("detections")
    _add_link_flags(p)
    p.add_argument("--out", help="tubes JSON-lines path (default: stdout)")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", help="frame-mAP or video-mAP")
    p.add_argument("--pred", required=True, help="detections (frame) or tubes (video) JSON-lines")
    p.add_argument("--gt", required=True, help="ground-truth tubes JSON-lines")
    p.add_argument("--metric", choices=("frame", "video"), required=True)
    p.add_argument("--thresholds", help="comma-separated IoU thresholds (default 0.50:0.05:0.95)")
    p.add_argument("--num-classes", type=_positive_int)
    p.add_argument("--eleven-point", action="store_true", help="11-point interpolated AP")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablation", help="no shift vs naive shift vs matched shift")
    p.add_argument("config")
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--fractions", default="1/4", help="channel fraction shifted each way (1/8 or 1/4)")
    p.add_argument("--seed", type=_seed)
    _add_link_flags(p)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--csv", help="also write the 0.5:0.95, 0.5 and 0.75 columns as CSV")
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, SceneGenerationError) as exc:
        print(f"tubematch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
