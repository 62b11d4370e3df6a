"""Deterministic synthetic sequences: textured rectangles on a textured background."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import Box, Mask, Observation, TrackError
from .metrics import TrackSet


class ConfigError(TrackError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    """One moving rectangle. ``start`` is the top-left pixel at frame 1.

    ``color_bottom`` paints the lower half in a second color; ``growth`` scales
    the size multiplicatively per frame about the center.
    """

    color: tuple[int, int, int]
    size: tuple[int, int]                     # (w, h) in pixels
    start: tuple[float, float]                # (x, y) of the top-left pixel
    velocity: tuple[float, float] = (0.0, 0.0)
    occlusions: tuple[tuple[int, int], ...] = ()   # half-open frame windows [a, b)
    color_bottom: tuple[int, int, int] | None = None
    growth: float = 1.0
    class_id: int = 1
    texture_seed: int | None = None


@dataclass(frozen=True)
class Scenario:
    objects: tuple[ObjectSpec, ...] = ()
    n_frames: int = 50
    frame_size: tuple[int, int] = (240, 320)  # (height, width)
    seed: int = 0
    position_sigma: float = 0.0
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    partial_rate: float = 0.0                 # chance a detection keeps only half of its box
    texture_amplitude: float = 0.35
    background_level: int = 110
    background_texture: float = 1.0           # 0 gives a flat background

    def validate(self) -> None:
        h, w = self.frame_size
        if self.n_frames < 1 or h < 8 or w < 8:
            raise ConfigError("need at least one frame of at least 8x8 pixels")
        for r in (self.miss_rate, self.fp_rate, self.partial_rate):
            if not 0.0 <= r <= 1.0:
                raise ConfigError("rates must lie in [0, 1]")
        for o in self.objects:
            if min(o.size) < 1 or o.growth <= 0:
                raise ConfigError("object sizes and growth must be positive")


@dataclass
class Sequence:
    frames: list[np.ndarray]
    gt: TrackSet
    detections: dict[int, list[Observation]]
    label_images: list[np.ndarray]            # per-frame object-id images (0 = background)
    gt_masks: TrackSet = field(default_factory=TrackSet)

    def frame_indices(self) -> range:
        return range(1, len(self.frames) + 1)


def _hash_seed(*parts) -> int:
    return zlib.crc32(repr(parts).encode())


def _block_noise(rng: np.random.Generator, shape: tuple[int, int], block: int) -> np.ndarray:
    h, w = shape
    coarse = rng.random(((h + block - 1) // block, (w + block - 1) // block))
    return np.kron(coarse, np.ones((block, block)))[:h, :w]


def background(sc: Scenario) -> np.ndarray:
    rng = np.random.default_rng(_hash_seed("background", sc.seed))
    h, w = sc.frame_size
    low = _block_noise(rng, (h, w), 16)
    mid = _block_noise(rng, (h, w), 4)
    tint = rng.uniform(0.8, 1.2, size=3)
    base = sc.background_level * (0.8 + sc.background_texture * (0.4 * (low - 0.5) + 0.3 * (mid - 0.5)))
    return np.clip(base[..., None] * tint, 0, 255)


def object_texture(obj: ObjectSpec, index: int, sc: Scenario) -> np.ndarray:
    """Per-object texture on a 64x64 canvas, resampled to the object size when drawn."""
    seed = obj.texture_seed if obj.texture_seed is not None else _hash_seed("object", sc.seed, index)
    rng = np.random.default_rng(seed)
    return 1.0 + sc.texture_amplitude * (2 * _block_noise(rng, (64, 64), 4) - 1)


def _object_geometry(obj: ObjectSpec, t: int) -> tuple[int, int, int, int]:
    """Integer ``(x0, y0, w, h)`` of the rendered rectangle at 0-based time ``t``."""
    g = obj.growth ** t
    w0, h0 = obj.size
    cx = obj.start[0] + (w0 - 1) / 2 + obj.velocity[0] * t
    cy = obj.start[1] + (h0 - 1) / 2 + obj.velocity[1] * t
    w = max(int(round(w0 * g)), 1)
    h = max(int(round(h0 * g)), 1)
    x0 = int(np.floor(cx - (w - 1) / 2 + 0.5))
    y0 = int(np.floor(cy - (h - 1) / 2 + 0.5))
    return x0, y0, w, h


def _paint(frame, labels, obj, tex, x0, y0, w, h, label):
    H, W = labels.shape
    xa, ya = max(x0, 0), max(y0, 0)
    xb, yb = min(x0 + w, W), min(y0 + h, H)
    if xa >= xb or ya >= yb:
        return False
    rows = np.arange(ya, yb) - y0
    cols = np.arange(xa, xb) - x0
    tr = (rows * tex.shape[0]) // h
    tc = (cols * tex.shape[1]) // w
    pattern = tex[np.ix_(tr, tc)]
    color = np.empty((len(rows), len(cols), 3))
    color[:] = np.asarray(obj.color, float)
    if obj.color_bottom is not None:
        color[rows >= h // 2] = np.asarray(obj.color_bottom, float)
    frame[ya:yb, xa:xb] = np.clip(color * pattern[..., None], 0, 255)
    labels[ya:yb, xa:xb] = label
    return True


def render(sc: Scenario) -> Sequence:
    """Frames, ground truth and detections; identical output for identical scenarios."""
    sc.validate()
    H, W = sc.frame_size
    bg = background(sc)
    textures = [object_texture(o, k, sc) for k, o in enumerate(sc.objects)]
    rng = np.random.default_rng(_hash_seed("detections", sc.seed))
    frames, label_images = [], []
    gt, gt_masks = TrackSet(), TrackSet()
    detections: dict[int, list[Observation]] = {}
    for t in range(sc.n_frames):
        f = t + 1
        frame = bg.copy()
        labels = np.zeros((H, W), np.int32)
        dets = []
        for k, (obj, tex) in enumerate(zip(sc.objects, textures)):
            x0, y0, w, h = _object_geometry(obj, t)
            if not _paint(frame, labels, obj, tex, x0, y0, w, h, k + 1):
                continue
            box = Box(x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0, float(w), float(h))
            gt.add(f, k + 1, box)
            if any(a <= f < b for a, b in obj.occlusions):
                continue
            if rng.random() < sc.miss_rate:
                continue
            dbox = box
            if sc.position_sigma > 0:
                du, dv = rng.normal(0, sc.position_sigma, 2)
                dbox = Box(box.u + du, box.v + dv, box.w, box.h)
            if rng.random() < sc.partial_rate:
                dbox = half_box(dbox, int(rng.integers(4)))
            dets.append(Observation(f, dbox, obj.class_id, 1.0))
        for k in range(len(sc.objects)):
            if (labels == k + 1).any():
                gt_masks.add(f, k + 1, Mask(labels == k + 1))
        if sc.fp_rate > 0 and rng.random() < sc.fp_rate:
            hi = [max(min(32, n // 2), 2) for n in (W, H)]
            w, h = (int(rng.integers(min(8, m - 1), m)) for m in hi)
            dets.append(Observation(f, Box(rng.uniform(w, W - w), rng.uniform(h, H - h), float(w), float(h)),
                                    1, 0.5))
        detections[f] = dets
        frames.append(np.round(frame).astype(np.uint8))
        label_images.append(labels)
    return Sequence(frames, gt, detections, label_images, gt_masks)


def half_box(b: Box, side: int) -> Box:
    """Keep the top (0), bottom (1), left (2) or right (3) half of a box."""
    if side == 0:
        return Box(b.u, b.v - b.h / 4, b.w, b.h / 2)
    if side == 1:
        return Box(b.u, b.v + b.h / 4, b.w, b.h / 2)
    if side == 2:
        return Box(b.u - b.w / 4, b.v, b.w / 2, b.h)
    return Box(b.u + b.w / 4, b.v, b.w / 2, b.h)


def three_object_scenario(n_frames: int = 100, seed: int = 0, occlusion=None) -> Scenario:
    """Three well-separated objects moving at constant velocity; optional occlusion
    window ``(a, b)`` on the first object."""
    occ = (tuple(occlusion),) if occlusion else ()
    objs = (
        ObjectSpec((220, 60, 60), (24, 48), (20, 20), (1.2, 0.3), occlusions=occ),
        ObjectSpec((60, 200, 70), (28, 40), (150, 150), (-0.8, 0.5)),
        ObjectSpec((70, 90, 230), (32, 32), (250, 40), (-0.5, 1.0)),
    )
    return Scenario(objs, n_frames, (256, 352), seed)
