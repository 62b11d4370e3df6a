"""Batch command-line frontend.

Exit codes: 0 on success, 1 on usage or input errors, 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io, metrics, synth
from .associate import MultiTracker, TrackOutput, make_detections
from .boxprop import track_sequence
from .config import ConfigError, Settings, dump_settings, load_settings
from .core import DimensionError, FormatError, Mask, Observation, TrackError
from .labelprop import propagate_pose, segment_video
from .similarity import SIMILARITY_MODES

log = logging.getLogger("trackheads")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- shared plumbing ---------------------------------------------------------------

def _settings(args, **overrides) -> Settings:
    flags: dict[str, dict[str, str]] = {"features": {}, "boxprop": {}, "prop": {}, "assoc": {}}
    for section, kv in overrides.items():
        flags[section].update({k: v for k, v in kv.items() if v is not None})
    return load_settings(args.config, flags)


def _feature_maps(args, settings: Settings, n_frames: int | None = None):
    """``(frame_index, FeatureMap, frame_size)`` from UTFM files or built-in extraction."""
    if getattr(args, "features", None):
        src = settings.features.__class__("file", settings.features.stride, settings.features.normalize)
        paths = sorted((p for p in Path(args.features).iterdir() if p.suffix.lower() == ".utfm"),
                       key=io._frame_number)
        if not paths:
            raise InputError(f"no .utfm files in {args.features}")
        for p in paths:
            fm = src(p)
            yield io._frame_number(p), fm, (fm.height * fm.stride, fm.width * fm.stride)
    elif getattr(args, "frames", None):
        for p in io.list_frames(args.frames):
            img = io.read_image(p)
            yield io._frame_number(p), settings.features.from_image(img), img.shape[:2]
    else:
        raise UsageError("either --features or --frames is required")


def _track(args, settings: Settings, observations: dict) -> list[TrackOutput]:
    tracker = MultiTracker(settings.assoc)
    out: list[TrackOutput] = []
    for frame, fm, size in _feature_maps(args, settings):
        obs = observations.get(frame, [])
        out.extend(tracker.step(frame, make_detections(fm, obs, settings.assoc, size)))
    return sorted(out, key=lambda o: (o.frame, o.track_id))


def _assoc_flags(args) -> dict:
    return {
        "similarity": args.similarity,
        "use_motion": "false" if args.no_motion else None,
        "fps": args.fps,
        "history_size": args.history,
        "cost_weight": args.cost_weight,
    }


# --- subcommands -------------------------------------------------------------------

def cmd_sot(args) -> int:
    s = _settings(args, boxprop={"head": args.head})
    frames = io.read_frames(args.frames)
    try:
        init = io.parse_box(args.init)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    boxes = track_sequence(frames, init, s.boxprop)
    io.write_otb(boxes, args.out)
    log.info("wrote %d boxes to %s", len(boxes), args.out)
    return 0


def cmd_vos(args) -> int:
    s = _settings(args)
    frames = io.read_frames(args.frames)
    first = io.read_id_image(args.first_mask)
    if first.shape != frames[0].shape[:2]:
        raise InputError(f"first mask {first.shape} does not match frame {frames[0].shape[:2]}")
    results = segment_video(frames, first, s.prop, resize=not args.native)
    io.write_id_images(results, args.out)
    return 0


def cmd_poseprop(args) -> int:
    s = _settings(args)
    frames = io.read_frames(args.frames)
    table = io.read_pose_table(args.first_pose)
    first_frame = min(table)
    objs = table[first_frame]
    if len(objs) != 1:
        raise InputError("poseprop expects a single pose in the first frame")
    poses = propagate_pose(frames, next(iter(objs.values())), s.prop, resize=not args.native)
    io.write_pose_table(poses, args.out)
    return 0


def cmd_mot(args) -> int:
    s = _settings(args, assoc=_assoc_flags(args))
    dets = io.read_detections(args.dets)
    out = _track(args, s, dets)
    io.write_tracks(((o.frame, o.track_id, o.box, o.observation.confidence) for o in out), args.out)
    return 0


def cmd_mots(args) -> int:
    s = _settings(args, assoc=_assoc_flags(args))
    id_images = io.read_id_images(args.masks)
    out = _track(args, s, io.mask_observations(id_images))
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for f, ids in sorted(id_images.items()):
        canvas = np.zeros(ids.shape, np.int32)
        for o in out:
            if o.frame == f:
                canvas[o.observation.shape.bits] = o.track_id
        io.write_id_image(canvas, Path(args.out) / f"{f:06d}.png")
    if args.boxes:
        io.write_tracks(((o.frame, o.track_id, o.box, 1.0) for o in out), args.boxes)
    return 0


def cmd_posetrack(args) -> int:
    s = _settings(args, assoc=_assoc_flags(args))
    table = io.read_pose_table(args.dets)
    obs = {f: [Observation(f, p) for _, p in sorted(objs.items())] for f, objs in table.items()}
    out = _track(args, s, obs)
    io.write_tracked_poses(((o.frame, o.track_id, o.observation.shape) for o in out), args.out)
    return 0


def cmd_synth(args) -> int:
    if args.scenario == "single":
        sc = synth.Scenario((synth.ObjectSpec((200, 80, 60), (30, 40), (60, 60), (2.0, 1.0)),),
                            args.n_frames, (240, 320), args.seed)
    else:
        occ = (40, 50) if args.scenario == "occlusion" else None
        sc = synth.three_object_scenario(args.n_frames, args.seed, occ)
    seq = synth.render(sc)
    out = Path(args.out)
    io.write_frames(seq.frames, out / "frames")
    io.write_trackset(seq.gt, out / "gt.txt")
    io.write_detections(seq.detections, out / "det.txt")
    io.write_id_images(seq.label_images, out / "masks")
    log.info("wrote %d frames to %s", len(seq.frames), out)
    return 0


def cmd_eval(args) -> int:
    if args.gt_masks or args.pred_masks:
        if not (args.gt_masks and args.pred_masks):
            raise UsageError("--gt-masks and --pred-masks go together")
        gt, pred = _mask_trackset(args.gt_masks), _mask_trackset(args.pred_masks)
    elif args.gt and args.pred:
        gt, pred = io.read_tracks(args.gt), io.read_tracks(args.pred, skip_zero_conf=False)
    else:
        raise UsageError("eval needs --gt and --pred, or --gt-masks and --pred-masks")
    report = metrics.format_report(metrics.evaluate(gt, pred, args.iou))
    if args.out:
        Path(args.out).write_text(report)
    sys.stdout.write(report)
    return 0


def _mask_trackset(directory) -> metrics.TrackSet:
    ts = metrics.TrackSet()
    for f, ids in io.read_id_images(directory).items():
        for k in np.unique(ids):
            if k:
                ts.add(f, int(k), Mask(ids == k))
    return ts


def cmd_config(args) -> int:
    sys.stdout.write(dump_settings(_settings(args)))
    return 0


# --- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trackheads", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, features=True):
        sp.add_argument("--config", help="key = value configuration file")
        if features:
            sp.add_argument("--frames", help="directory of numbered .ppm/.png frames")
            sp.add_argument("--features", help="directory of numbered .utfm feature files")
        return sp

    def assoc(sp):
        sp.add_argument("--similarity", choices=SIMILARITY_MODES)
        sp.add_argument("--no-motion", action="store_true", help="drop the motion cost and gate")
        sp.add_argument("--fps", type=float)
        sp.add_argument("--history", type=int, help="feature history length per tracklet")
        sp.add_argument("--cost-weight", type=float, help="weight of the appearance cost")

    sp = common(sub.add_parser("sot", help="single-object box propagation"), features=False)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--init", required=True, help='first-frame box "x,y,w,h"')
    sp.add_argument("--head", choices=("dcf", "xcorr"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sot)

    sp = common(sub.add_parser("vos", help="mask propagation"), features=False)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--first-mask", required=True, help="indexed PNG of frame-1 object ids")
    sp.add_argument("--native", action="store_true", help="process at the input resolution")
    sp.add_argument("--out", required=True, help="output directory of indexed PNGs")
    sp.set_defaults(func=cmd_vos)

    sp = common(sub.add_parser("poseprop", help="pose propagation"), features=False)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--first-pose", required=True, help="table frame,keypoint_index,x,y,visible")
    sp.add_argument("--native", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_poseprop)

    sp = common(sub.add_parser("mot", help="box association"))
    sp.add_argument("--dets", required=True, help="detections frame,-1,x,y,w,h,conf")
    sp.add_argument("--out", required=True)
    assoc(sp)
    sp.set_defaults(func=cmd_mot)

    sp = common(sub.add_parser("mots", help="mask association"))
    sp.add_argument("--masks", required=True, help="directory of per-frame indexed PNG detections")
    sp.add_argument("--out", required=True, help="output directory of indexed PNGs")
    sp.add_argument("--boxes", help="also write MOTChallenge boxes here")
    assoc(sp)
    sp.set_defaults(func=cmd_mots)

    sp = common(sub.add_parser("posetrack", help="pose association"))
    sp.add_argument("--dets", required=True, help="table frame,det,keypoint_index,x,y,visible")
    sp.add_argument("--out", required=True)
    assoc(sp)
    sp.set_defaults(func=cmd_posetrack)

    sp = sub.add_parser("synth", help="render a synthetic sequence")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scenario", choices=("three", "occlusion", "single"), default="three")
    sp.add_argument("--n-frames", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("eval", help="IDF1 / MOTA / IDs against ground truth")
    sp.add_argument("--gt")
    sp.add_argument("--pred")
    sp.add_argument("--gt-masks")
    sp.add_argument("--pred-masks")
    sp.add_argument("--iou", type=float, default=0.5)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("config", help="print the effective configuration"), features=False)
    sp.set_defaults(func=cmd_config)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if not args.command:
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (InputError, ConfigError, FormatError, DimensionError, FileNotFoundError,
            IsADirectoryError, PermissionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (TrackError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
