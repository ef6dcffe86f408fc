"""``pdk`` command line: conversion, evaluation, fusion, rendering, synthesis.

Exit codes: 0 success, 1 I/O or format error, 2 validation / contract error.
Verbosity comes from ``-v`` or the ``PDK_LOG`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import colormap, depth_metrics, panoptic_metrics
from .classes import CITYSCAPES, ClassSet, load_classes
from .dataset_io import (
    DepthMap,
    DisparityMap,
    PanopticMap,
    StereoCamera,
    decode_depth,
    decode_disparity,
    decode_panoptic,
    disparity_to_depth,
    encode_depth,
    encode_disparity,
    encode_panoptic,
    load_camera,
    load_segments_sidecar,
    read_bytes,
    write_png,
)
from .errors import FormatError, PDKError, ValidationError
from .fusion import InstanceDepthRecord, instance_depths
from .synth import Perturbation, SceneSpec, generate_scene

logger = logging.getLogger("pdk")

# Cityscapes-like rig; used only when synth writes disparity maps
DEFAULT_CAMERA = StereoCamera(baseline_m=0.209313, focal_px=2262.52)


_INPUT_ARGS = ("gt", "pred", "classes", "camera", "panoptic", "segments", "depth", "disparity", "instances", "palette", "spec")


@dataclass
class RunConfig:
    subcommand: str
    args: argparse.Namespace

    def validate(self) -> None:
        for name in _INPUT_ARGS:
            value = getattr(self.args, name, None)
            if value and not Path(value).exists():
                raise FormatError(f"--{name}: {value} does not exist")
        if hasattr(self.args, "near") and not self.args.near < self.args.far:
            raise ValidationError(f"--near ({self.args.near}) must be below --far ({self.args.far})")


# ------------------------------------------------------------------ output

class Outputs:
    """Collects output files and commits them together; nothing partial survives an error."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def _tmp(self, final: Path) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(f".{final.name}.partial")
        self._pending.append((tmp, final))
        return tmp

    def write_bytes(self, final, data: bytes) -> None:
        self._tmp(final).write_bytes(data)

    def write_json(self, final, doc) -> None:
        self._tmp(final).write_text(json.dumps(doc, indent=2) + "\n")

    def commit(self) -> None:
        for tmp, final in self._pending:
            os.replace(tmp, final)
        self._pending.clear()

    def discard(self) -> None:
        for tmp, _ in self._pending:
            tmp.unlink(missing_ok=True)
        self._pending.clear()


@contextmanager
def outputs():
    out = Outputs()
    try:
        yield out
    except BaseException:
        out.discard()
        raise
    out.commit()


# ------------------------------------------------------------------ inputs

def _classes(args) -> ClassSet:
    return load_classes(args.classes) if getattr(args, "classes", None) else CITYSCAPES


def _collect(path, suffix: str = ".png") -> dict[str, Path]:
    path = Path(path)
    if path.is_dir():
        return {p.stem: p for p in sorted(path.iterdir()) if p.suffix == suffix and not p.name.startswith(".")}
    if path.is_file():
        return {path.stem: path}
    raise FormatError(f"{path}: no such file or directory")


def _pair(gt_path, pred_path, allow_missing: bool) -> tuple[list[tuple[str, Path, Path | None]], list[str]]:
    gt, pred = _collect(gt_path), _collect(pred_path)
    if Path(gt_path).is_file() and Path(pred_path).is_file():
        (gs, gp), (_, pp) = next(iter(gt.items())), next(iter(pred.items()))
        return [(gs, gp, pp)], []
    shared = sorted(set(gt) & set(pred))
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if not shared:
        raise ValidationError(
            f"no shared basenames between {gt_path} and {pred_path}; "
            f"unmatched gt: {missing}, unmatched pred: {extra}"
        )
    if missing and not allow_missing:
        raise ValidationError(f"predictions missing for: {missing}")
    if extra:
        logger.warning("ignoring predictions without ground truth: %s", extra)
    pairs = [(s, gt[s], pred.get(s)) for s in sorted(gt) if s in pred or allow_missing]
    return pairs, missing


def _load_panoptic(png: Path, encoding: str, classes: ClassSet, segments=None) -> PanopticMap:
    sidecar = None
    if encoding != "cityscape_instance_ids":
        side_path = Path(segments) if segments else png.with_suffix(".json")
        sidecar = load_segments_sidecar(side_path, png.stem)
    try:
        return decode_panoptic(read_bytes(png), sidecar, encoding, classes)
    except PDKError as exc:
        raise type(exc)(f"{png}: {exc}") from exc


def _load_depth(png: Path) -> DepthMap:
    try:
        return decode_depth(read_bytes(png))
    except PDKError as exc:
        raise type(exc)(f"{png}: {exc}") from exc


def _depth_from_args(args) -> DepthMap:
    if getattr(args, "depth", None):
        return _load_depth(Path(args.depth))
    if getattr(args, "disparity", None):
        if not args.camera:
            raise ValidationError("--disparity needs --camera")
        return disparity_to_depth(decode_disparity(read_bytes(args.disparity)), load_camera(args.camera))
    raise ValidationError("one of --depth or --disparity is required")


def _colormap_config(args, classes: ClassSet) -> colormap.ColorMapConfig:
    palette = colormap.load_palette(args.palette) if args.palette else {}
    return colormap.ColorMapConfig.from_classes(
        classes,
        near_m=args.near,
        far_m=args.far,
        stuff_palette=palette,
        draw_boundaries=not args.no_boundaries,
    )


# ------------------------------------------------------------- subcommands

def cmd_convert_disparity(args) -> None:
    cam = load_camera(args.camera)
    src = _collect(args.disparity)
    single = Path(args.disparity).is_file()
    with outputs() as out:
        for stem, path in src.items():
            depth = disparity_to_depth(decode_disparity(read_bytes(path)), cam)
            target = Path(args.out) if single else Path(args.out) / f"{stem}.png"
            out.write_bytes(target, encode_depth(depth))
            logger.info("%s -> %s (%d valid px)", path, target, int(depth.valid.sum()))


def cmd_eval_panoptic(args) -> None:
    classes = _classes(args)
    pairs, missing = _pair(args.gt, args.pred, args.allow_missing_pred)

    def one(item):
        stem, gp, pp = item
        gt = _load_panoptic(gp, args.encoding, classes)
        if pp is None:
            pred = PanopticMap(np.zeros(gt.shape, dtype=np.int64), {})
        else:
            pred = _load_panoptic(pp, args.encoding, classes)
        try:
            return panoptic_metrics.match_segments(gt, pred, classes)
        except PDKError as exc:
            raise type(exc)(f"{stem}: {exc}") from exc

    state = panoptic_metrics.PQState()
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for match in pool.map(one, pairs):
            panoptic_metrics.accumulate(state, match)
    report = panoptic_metrics.finalize(state, classes)
    doc = report.to_json()
    doc["images"] = [s for s, _, _ in pairs]
    doc["missing_predictions"] = missing
    with outputs() as out:
        if args.out:
            out.write_json(args.out, doc)
    print(report.format_table())


def cmd_eval_depth(args) -> None:
    pairs, missing = _pair(args.gt, args.pred, args.allow_missing_pred)

    def one(item):
        stem, gp, pp = item
        gt = _load_depth(gp)
        if pp is None:
            return stem, depth_metrics.DepthAccumulator(gt_valid=int(gt.valid.sum()))
        pred = _load_depth(pp)
        try:
            return stem, depth_metrics.DepthAccumulator.from_maps(pred, gt)
        except PDKError as exc:
            raise type(exc)(f"{stem}: {exc}") from exc

    pooled = depth_metrics.DepthAccumulator()
    per_image = {}
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for stem, acc in pool.map(one, pairs):
            pooled += acc
            if acc.n:
                per_image[stem] = acc.report()
    try:
        total = pooled.report()
    except PDKError as exc:
        raise type(exc)(f"{args.gt}: {exc}") from exc
    doc = {
        "aggregate": total.to_json(),
        "images": {s: r.to_json() for s, r in per_image.items()},
        "missing_predictions": missing,
    }
    with outputs() as out:
        if args.out:
            out.write_json(args.out, doc)
    rows = dict(per_image) if args.per_image else {}
    rows["all (pooled)"] = total
    print(depth_metrics.format_table(rows))


def cmd_fuse(args) -> None:
    classes = _classes(args)
    pan = _load_panoptic(Path(args.panoptic), args.encoding, classes, args.segments)
    records = instance_depths(pan, _depth_from_args(args))
    with outputs() as out:
        out.write_json(args.out, [r.to_json() for r in records])


def _read_records(path) -> list[InstanceDepthRecord]:
    try:
        doc = json.loads(Path(path).read_text())
        return [InstanceDepthRecord.from_json(d) for d in doc]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def cmd_render(args) -> None:
    classes = _classes(args)
    pan = _load_panoptic(Path(args.panoptic), args.encoding, classes, args.segments)
    cfg = _colormap_config(args, classes)
    rgb, ann = colormap.render(pan, _read_records(args.instances), cfg, classes)
    with outputs() as out:
        out.write_bytes(args.out, write_png(rgb))
        out.write_json(args.annotations or Path(args.out).with_suffix(".json"), ann)


def cmd_pipeline(args) -> None:
    classes = _classes(args)
    cfg = _colormap_config(args, classes)
    pan_path = Path(args.panoptic)
    pan = _load_panoptic(pan_path, args.encoding, classes, args.segments)
    depth = _depth_from_args(args)
    records = instance_depths(pan, depth)
    rgb, ann = colormap.render(pan, records, cfg, classes)
    stem = pan_path.stem
    out_dir = Path(args.out_dir)
    with outputs() as out:
        out.write_bytes(out_dir / f"{stem}_depth.png", encode_depth(depth))
        out.write_json(out_dir / f"{stem}_instances.json", [r.to_json() for r in records])
        out.write_bytes(out_dir / f"{stem}_color.png", write_png(rgb))
        out.write_json(out_dir / f"{stem}_annotations.json", ann)
    logger.info("pipeline wrote %d segments for %s", len(records), stem)


def _spec_from_args(args) -> SceneSpec:
    if args.spec:
        try:
            return SceneSpec.from_json(json.loads(Path(args.spec).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise FormatError(f"{args.spec}: {exc}") from exc
    return SceneSpec(
        width=args.width,
        height=args.height,
        num_things=args.num_things,
        num_stuff=args.num_stuff,
        depth_range=(args.min_depth, args.max_depth),
        seed=args.seed,
        crowd_rate=args.crowd_rate,
        void_band_px=args.void_band,
        depth_invalid_rate=args.invalid_rate,
        perturbation=Perturbation(
            boundary_erosion_px=args.erosion,
            class_flip_rate=args.flip_rate,
            drop_rate=args.drop_rate,
            depth_noise_rel=args.depth_noise,
            num_spurious=args.spurious,
        ),
    )


def cmd_synth(args) -> None:
    classes = _classes(args)
    spec = _spec_from_args(args)
    cam = DEFAULT_CAMERA
    root = Path(args.out)
    with outputs() as out:
        out.write_json(root / "spec.json", {**spec.to_json(), "count": args.count})
        out.write_json(root / "classes.json", classes.to_json())
        out.write_json(root / "camera.json", {"baseline_m": cam.baseline_m, "focal_px": cam.focal_px})
        for i in range(args.count):
            scene_spec = SceneSpec.from_json({**spec.to_json(), "seed": spec.seed + i})
            scene = generate_scene(scene_spec, classes)
            stem = f"scene_{i:04d}"
            for split, pan, depth in (("gt", scene.gt, scene.gt_depth), ("pred", scene.pred, scene.pred_depth)):
                png, side = encode_panoptic(pan, "rgb_id", stem)
                out.write_bytes(root / split / "panoptic" / f"{stem}.png", png)
                out.write_json(root / split / "panoptic" / f"{stem}.json", side)
                out.write_bytes(root / split / "depth" / f"{stem}.png", encode_depth(depth))
            out.write_bytes(root / "gt" / "disparity" / f"{stem}.png", encode_disparity(depth_to_disparity(scene.gt_depth, cam)))
    print(f"wrote {args.count} scene(s) to {root}")


def depth_to_disparity(depth: DepthMap, cam: StereoCamera) -> DisparityMap:
    safe = np.where(depth.valid, depth.values, 1.0)
    return DisparityMap(np.where(depth.valid, cam.focal_px * cam.baseline_m / safe, 0.0), depth.valid)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def panoptic_opts(p, seg=True):
        p.add_argument("--classes", help="classes JSON (default: built-in Cityscapes)")
        p.add_argument("--encoding", default="rgb_id", choices=["rgb_id", "id16", "cityscape_instance_ids"])
        if seg:
            p.add_argument("--segments", help="segments sidecar (default: <panoptic stem>.json)")

    def depth_source(p):
        p.add_argument("--depth", help="16-bit depth PNG")
        p.add_argument("--disparity", help="16-bit disparity PNG (with --camera)")
        p.add_argument("--camera", help="camera JSON {baseline_m, focal_px}")

    def color_opts(p):
        p.add_argument("--near", type=float, default=0.0)
        p.add_argument("--far", type=float, default=80.0)
        p.add_argument("--palette", help="JSON category_id -> [r, g, b]")
        p.add_argument("--no-boundaries", action="store_true")

    p = sub.add_parser("convert-disparity", help="disparity PNG(s) -> depth PNG(s)")
    p.add_argument("--disparity", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert_disparity)

    for name, func in (("eval-panoptic", cmd_eval_panoptic), ("eval-depth", cmd_eval_depth)):
        p = sub.add_parser(name)
        p.add_argument("--gt", required=True)
        p.add_argument("--pred", required=True)
        p.add_argument("--out", help="JSON report path")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--allow-missing-pred", action="store_true")
        if name == "eval-panoptic":
            panoptic_opts(p, seg=False)
        else:
            p.add_argument("--per-image", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("fuse", help="instance-level depth per segment")
    p.add_argument("--panoptic", required=True)
    panoptic_opts(p)
    depth_source(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("render", help="panoptic-depth color map")
    p.add_argument("--panoptic", required=True)
    panoptic_opts(p)
    p.add_argument("--instances", required=True)
    color_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--annotations")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="convert -> fuse -> render for one image")
    p.add_argument("--panoptic", required=True)
    panoptic_opts(p)
    depth_source(p)
    color_opts(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", help="write synthetic gt/pred scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="SceneSpec JSON; overrides the flags below")
    p.add_argument("--classes")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--num-things", type=int, default=3)
    p.add_argument("--num-stuff", type=int, default=2)
    p.add_argument("--min-depth", type=float, default=2.0)
    p.add_argument("--max-depth", type=float, default=80.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crowd-rate", type=float, default=0.0)
    p.add_argument("--void-band", type=int, default=0)
    p.add_argument("--invalid-rate", type=float, default=0.0)
    p.add_argument("--erosion", type=int, default=0)
    p.add_argument("--flip-rate", type=float, default=0.0)
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--depth-noise", type=float, default=0.0)
    p.add_argument("--spurious", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging(verbose: int) -> None:
    env = os.environ.get("PDK_LOG", "").upper()
    if verbose:
        level = logging.DEBUG if verbose > 1 else logging.INFO
    else:
        level = getattr(logging, env, logging.WARNING) if env else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    cfg = RunConfig(args.subcommand, args)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg.validate()
        args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PDKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
