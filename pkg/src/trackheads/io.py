"""File formats: frame directories, MOTChallenge text, OTB results, pose tables, palette masks.

Box coordinates in memory are continuous with pixel ``j`` centered at ``j``;
text files store the top-left pixel index, so ``x = u - w/2 + 0.5``.
"""
from __future__ import annotations

import csv
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .core import Box, FormatError, Mask, Observation, Pose
from .metrics import TrackSet

FRAME_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png")
_DIGITS = re.compile(r"(\d+)")


# --- boxes in files ------------------------------------------------------------

def box_from_file(x: float, y: float, w: float, h: float) -> Box:
    return Box(x + w / 2.0 - 0.5, y + h / 2.0 - 0.5, w, h)


def box_to_file(b: Box) -> tuple[float, float, float, float]:
    return (b.u - b.w / 2.0 + 0.5, b.v - b.h / 2.0 + 0.5, b.w, b.h)


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if np.isfinite(x) else str(x)


# --- frames ---------------------------------------------------------------------

def _frame_number(path: Path) -> int:
    nums = _DIGITS.findall(path.stem)
    if not nums:
        raise FormatError(f"frame file {path.name} has no frame number")
    return int(nums[-1])


def list_frames(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory {d} does not exist")
    paths = [p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES]
    if not paths:
        raise FormatError(f"no frames ({', '.join(FRAME_SUFFIXES)}) in {d}")
    return sorted(paths, key=lambda p: (_frame_number(p), p.name))


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def read_frames(directory) -> list[np.ndarray]:
    return [read_image(p) for p in list_frames(directory)]


def write_frames(frames: Sequence[np.ndarray], directory, suffix: str = ".ppm") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, f in enumerate(frames, start=1):
        p = d / f"{k:06d}{suffix}"
        Image.fromarray(np.asarray(f, np.uint8)).save(p)
        paths.append(p)
    return paths


# --- palette masks -----------------------------------------------------------------

def _palette() -> list[int]:
    rng = np.random.default_rng(7)
    colors = rng.integers(40, 256, size=(256, 3))
    colors[0] = 0
    return colors.astype(int).ravel().tolist()


def write_id_image(ids: np.ndarray, path) -> None:
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) > 255:
        raise ValueError("palette images hold ids 0..255")
    im = Image.fromarray(ids.astype(np.uint8), mode="P")
    im.putpalette(_palette())
    im.save(path)


def read_id_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode == "P" or im.mode == "L":
            return np.asarray(im).astype(np.int32)
        raise FormatError(f"{path} is not an indexed or grayscale image (mode {im.mode})")


def read_id_images(directory) -> dict[int, np.ndarray]:
    d = Path(directory)
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FormatError(f"no .png masks in {d}")
    return {_frame_number(p): read_id_image(p) for p in paths}


def write_id_images(id_images: Sequence[np.ndarray], directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, ids in enumerate(id_images, start=1):
        write_id_image(ids, d / f"{k:06d}.png")


# --- MOTChallenge text ---------------------------------------------------------------

def _rows(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or not any(row) or row[0].startswith("#"):
                continue
            yield lineno, row


def read_mot(path, min_columns: int = 6) -> list[tuple[int, int, Box, float]]:
    """``(frame, id, box, conf)`` rows; the id is -1 for detections."""
    out = []
    for lineno, row in _rows(path):
        if len(row) < min_columns:
            raise FormatError(f"{path}:{lineno}: expected at least {min_columns} columns")
        try:
            frame, tid = int(float(row[0])), int(float(row[1]))
            x, y, w, h = (float(v) for v in row[2:6])
            conf = float(row[6]) if len(row) > 6 else 1.0
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite([x, y, w, h, conf])):
            raise FormatError(f"{path}:{lineno}: non-finite value")
        if frame < 1:
            raise FormatError(f"{path}:{lineno}: frames are 1-based")
        if not (w > 0 and h > 0):
            raise FormatError(f"{path}:{lineno}: non-positive box size")
        out.append((frame, tid, box_from_file(x, y, w, h), conf))
    return out


def read_detections(path) -> dict[int, list[Observation]]:
    dets: dict[int, list[Observation]] = defaultdict(list)
    for frame, _, box, conf in read_mot(path):
        dets[frame].append(Observation(frame, box, 1, float(np.clip(conf, 0.0, 1.0))))
    return dict(dets)


def read_tracks(path, skip_zero_conf: bool = True) -> TrackSet:
    """Ground truth or results as a :class:`TrackSet`; rows with conf 0 are ignored
    (the MOTChallenge "do not consider" flag) when ``skip_zero_conf`` is set."""
    ts = TrackSet()
    for frame, tid, box, conf in read_mot(path):
        if skip_zero_conf and conf == 0:
            continue
        ts.add(frame, tid, box)
    return ts


def write_detections(detections: dict[int, Sequence[Observation]], path) -> None:
    with open(path, "w") as fh:
        for f in sorted(detections):
            for o in detections[f]:
                x, y, w, h = box_to_file(o.shape)
                fh.write(f"{f},-1,{_fmt(x)},{_fmt(y)},{_fmt(w)},{_fmt(h)},{_fmt(o.confidence)}\n")


def write_tracks(rows: Iterable[tuple[int, int, Box, float]], path) -> None:
    """Result lines ``frame,id,x,y,w,h,conf,-1,-1,-1`` sorted by frame then id."""
    with open(path, "w") as fh:
        for f, tid, box, conf in sorted(rows, key=lambda r: (r[0], r[1])):
            x, y, w, h = box_to_file(box)
            fh.write(f"{f},{tid},{_fmt(x)},{_fmt(y)},{_fmt(w)},{_fmt(h)},{_fmt(conf)},-1,-1,-1\n")


def write_trackset(ts: TrackSet, path) -> None:
    write_tracks(((f, i, b, 1.0) for f, per in ts.frames.items() for i, b in per.items()), path)


# --- OTB --------------------------------------------------------------------------------

def parse_box(text: str) -> Box:
    """``"x,y,w,h"`` (top-left pixel index, size) into a :class:`Box`."""
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 4:
        raise ValueError(f"expected x,y,w,h but got {text!r}")
    x, y, w, h = (float(p) for p in parts)
    if not (w > 0 and h > 0):
        raise ValueError("box width and height must be positive")
    return box_from_file(x, y, w, h)


def write_otb(boxes: Sequence[Box], path) -> None:
    with open(path, "w") as fh:
        for b in boxes:
            fh.write(",".join(_fmt(v) for v in box_to_file(b)) + "\n")


def read_otb(path) -> list[Box]:
    return [box_from_file(*(float(v) for v in row[:4])) for _, row in _rows(path)]


# --- pose tables --------------------------------------------------------------------------

def read_pose_table(path, n_keypoints: int | None = None) -> dict[int, dict[int, Pose]]:
    """``frame,object,keypoint_index,x,y,visible`` (object optional) into poses per frame and object."""
    raw: dict[int, dict[int, dict[int, tuple[float, float, bool]]]] = defaultdict(lambda: defaultdict(dict))
    for lineno, row in _rows(path):
        try:
            if len(row) == 5:
                f, k, x, y, vis = row
                obj = "1"
            elif len(row) == 6:
                f, obj, k, x, y, vis = row
            else:
                raise FormatError(f"{path}:{lineno}: expected 5 or 6 columns")
            raw[int(f)][int(obj)][int(k)] = (float(x), float(y), bool(int(float(vis))))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    n = n_keypoints or 1 + max(k for objs in raw.values() for kps in objs.values() for k in kps)
    out: dict[int, dict[int, Pose]] = {}
    for f, objs in raw.items():
        out[f] = {}
        for obj, kps in objs.items():
            kp = np.zeros((n, 2))
            vis = np.zeros(n, bool)
            for k, (x, y, v) in kps.items():
                if not 0 <= k < n:
                    raise FormatError(f"{path}: keypoint index {k} out of range")
                kp[k] = (x, y)
                vis[k] = v
            out[f][obj] = Pose(kp, vis)
    return out


def write_pose_table(poses: Sequence[Pose], path, first_frame: int = 1) -> None:
    """Per-video table ``frame,keypoint_index,x,y,visible``."""
    with open(path, "w") as fh:
        for f, p in enumerate(poses, start=first_frame):
            for k, ((x, y), v) in enumerate(zip(p.keypoints, p.visible)):
                fh.write(f"{f},{k},{_fmt(x)},{_fmt(y)},{int(v)}\n")


def write_tracked_poses(rows: Iterable[tuple[int, int, Pose]], path) -> None:
    """Tracked poses ``frame,id,keypoint_index,x,y,visible``."""
    with open(path, "w") as fh:
        for f, tid, p in sorted(rows, key=lambda r: (r[0], r[1])):
            for k, ((x, y), v) in enumerate(zip(p.keypoints, p.visible)):
                fh.write(f"{f},{tid},{k},{_fmt(x)},{_fmt(y)},{int(v)}\n")


def mask_observations(id_images: dict[int, np.ndarray]) -> dict[int, list[Observation]]:
    """One mask observation per nonzero id in each frame's id image."""
    out = {}
    for f, ids in sorted(id_images.items()):
        out[f] = [Observation(f, Mask(ids == k)) for k in np.unique(ids) if k != 0]
    return out
