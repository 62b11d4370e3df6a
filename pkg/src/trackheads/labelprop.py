"""Label propagation by local attention over a memory of past frames (masks and pose beliefs)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import sparse

from .core import (DegeneratePose, DimensionError, FeatureMap, LabelMap, Pose, TrackError,
                   body_size, cell_center, pixel_to_cell)
from .features import FeatureSource


class EmptyNeighborhood(TrackError):
    pass


@dataclass(frozen=True)
class PropConfig:
    temperature: float = 0.05
    memory_size: int = 6
    radius: int = 12
    topk: int = 10
    gaussian_coeff: float = 0.01
    mask_size: tuple[int, int] = (480, 640)   # processing resolution (height, width)
    pose_size: tuple[int, int] = (320, 320)
    circle: bool = False                      # Euclidean radius instead of the square window
    visibility_threshold: float = 0.1
    tile: int = 8                             # target cells per side of one attention block
    features: FeatureSource = field(default_factory=FeatureSource)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if min(self.memory_size, self.radius, self.topk, self.tile) < 1:
            raise ValueError("memory_size, radius, topk and tile must be >= 1")


@dataclass(frozen=True)
class MemoryBank:
    """Pinned first entry followed by the most recent ones, at most ``capacity`` in total."""

    capacity: int
    entries: tuple[tuple[FeatureMap, LabelMap], ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def grid_shape(self) -> tuple[int, int] | None:
        return self.entries[0][1].grid_shape if self.entries else None


def memory_push(memory: MemoryBank, features: FeatureMap, labels: LabelMap) -> MemoryBank:
    grid = (features.height, features.width)
    if labels.grid_shape != grid:
        raise DimensionError(f"labels {labels.grid_shape} do not match features {grid}")
    if memory.entries:
        ref_f, ref_l = memory.entries[0]
        if grid != (ref_f.height, ref_f.width) or features.channels != ref_f.channels:
            raise DimensionError("memory entries must share grid dims and channels")
        if labels.stacked().shape != ref_l.stacked().shape:
            raise DimensionError("memory entries must share label channels")
    entries = memory.entries + ((features, labels),)
    if len(entries) > memory.capacity:
        keep = memory.capacity - 1
        entries = entries[:1] + (entries[len(entries) - keep:] if keep else ())
    return MemoryBank(memory.capacity, entries)


# --- transition weights ----------------------------------------------------

def _grid_coords(h: int, w: int) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _in_radius(t_pos: np.ndarray, s_pos: np.ndarray, cfg: PropConfig) -> np.ndarray:
    d = np.abs(t_pos[:, None, :] - s_pos[None, :, :])
    if cfg.circle:
        return (d ** 2).sum(axis=2) <= cfg.radius ** 2
    return d.max(axis=2) <= cfg.radius


def _block_weights(targets: np.ndarray, t_pos: np.ndarray, sources: np.ndarray,
                   s_pos: np.ndarray, cfg: PropConfig) -> np.ndarray:
    """Dense ``(len(targets), len(sources))`` row-stochastic weights, zero outside the top-K."""
    inside = _in_radius(t_pos, s_pos, cfg)
    if not inside.any(axis=1).all():
        raise EmptyNeighborhood("a target point has no source point within the radius")
    logits = np.where(inside, targets @ sources.T / cfg.temperature, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    wts = np.exp(logits)
    wts /= wts.sum(axis=1, keepdims=True)
    if cfg.topk < wts.shape[1]:
        drop = np.argpartition(-wts, cfg.topk, axis=1)[:, cfg.topk:]
        np.put_along_axis(wts, drop, 0.0, axis=1)
    return wts / wts.sum(axis=1, keepdims=True)


def _memory_points(memory: MemoryBank) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not memory.entries:
        raise EmptyNeighborhood("memory bank is empty")
    feats = np.concatenate([f.points().astype(np.float64) for f, _ in memory.entries])
    labels = np.concatenate([l.stacked().reshape(-1, l.stacked().shape[-1]) for _, l in memory.entries])
    f0 = memory.entries[0][0]
    pos = np.tile(_grid_coords(f0.height, f0.width), (len(memory.entries), 1))
    return feats, labels, pos


def _check_target(memory: MemoryBank, target: FeatureMap) -> None:
    f0 = memory.entries[0][0] if memory.entries else None
    if f0 is not None and (target.height, target.width, target.channels) != (f0.height, f0.width, f0.channels):
        raise DimensionError("target feature map does not match the memory")


def transition_row(memory: MemoryBank, target: FeatureMap, row: int, col: int,
                   cfg: PropConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero ``(source indices, weights)`` for one target cell.

    Source index ``e * H * W + r * W + c`` addresses cell ``(r, c)`` of memory entry ``e``.
    """
    cfg = cfg or PropConfig()
    _check_target(memory, target)
    feats, _, pos = _memory_points(memory)
    w = _block_weights(target.data[row, col][None].astype(np.float64), np.array([[row, col]]),
                       feats, pos, cfg)[0]
    idx = np.nonzero(w)[0]
    return idx, w[idx]


def _tiles(memory: MemoryBank, target: FeatureMap, cfg: PropConfig):
    """Yield ``(target indices, weights, source indices)`` per square tile of target cells.

    Only memory cells within the radius-expanded tile can receive weight, so each
    block is scored against that window alone.
    """
    _check_target(memory, target)
    feats, _, pos = _memory_points(memory)
    h, w = target.height, target.width
    n_cells = h * w
    tgt = target.points().astype(np.float64)
    t_pos = _grid_coords(h, w)
    r, t = cfg.radius, cfg.tile
    for r0 in range(0, h, t):
        for c0 in range(0, w, t):
            r1, c1 = min(r0 + t, h), min(c0 + t, w)
            rows, cols = np.arange(r0, r1), np.arange(c0, c1)
            t_idx = (rows[:, None] * w + cols[None, :]).ravel()
            sr = np.arange(max(r0 - r, 0), min(r1 + r, h))
            sc = np.arange(max(c0 - r, 0), min(c1 + r, w))
            cell = (sr[:, None] * w + sc[None, :]).ravel()
            s_idx = (np.arange(len(memory.entries))[:, None] * n_cells + cell[None, :]).ravel()
            wts = _block_weights(tgt[t_idx], t_pos[t_idx], feats[s_idx], pos[s_idx], cfg)
            yield t_idx, wts, s_idx


def transition_matrix(memory: MemoryBank, target: FeatureMap, cfg: PropConfig | None = None) -> sparse.csr_matrix:
    """Sparse ``(H*W, M*H*W)`` matrix whose rows are the per-cell transition weights."""
    cfg = cfg or PropConfig()
    n_src = len(memory.entries) * target.height * target.width
    rows, cols, vals = [], [], []
    for t_idx, wts, s_idx in _tiles(memory, target, cfg):
        i, j = np.nonzero(wts)
        rows.append(t_idx[i])
        cols.append(s_idx[j])
        vals.append(wts[i, j])
    shape = (target.height * target.width, n_src)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


def propagate(memory: MemoryBank, target: FeatureMap, cfg: PropConfig | None = None) -> LabelMap:
    """Soft labels of ``target`` as attention-weighted sums of the memory's labels."""
    cfg = cfg or PropConfig()
    _, labels, _ = _memory_points(memory)
    out = np.empty((target.height * target.width, labels.shape[1]))
    for t_idx, wts, s_idx in _tiles(memory, target, cfg):
        out[t_idx] = wts @ labels[s_idx]
    ref = memory.entries[0][1]
    out = out.reshape(target.height, target.width, -1)
    return LabelMap.from_stacked(out, ref.background is not None)


# --- masks -----------------------------------------------------------------

def resize_ids(ids: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of an integer id image to ``(height, width)``."""
    ids = np.asarray(ids)
    if ids.shape == tuple(size):
        return ids.copy()
    h, w = size
    rows = np.minimum((np.arange(h) + 0.5) * ids.shape[0] / h, ids.shape[0] - 1).astype(int)
    cols = np.minimum((np.arange(w) + 0.5) * ids.shape[1] / w, ids.shape[1] - 1).astype(int)
    return ids[np.ix_(rows, cols)]


def mask_to_labels(ids: np.ndarray, n_objects: int, stride: int) -> LabelMap:
    """Soft labels from an id image: object channel ``k`` is the fraction of each cell
    covered by id ``k + 1``; background is ``1 - max`` over objects."""
    ids = np.asarray(ids)
    h, w = ids.shape[0] // stride, ids.shape[1] // stride
    if h == 0 or w == 0:
        raise DimensionError(f"id image {ids.shape} smaller than stride {stride}")
    ids = ids[: h * stride, : w * stride]
    objs = np.stack([(ids == k + 1).reshape(h, stride, w, stride).mean(axis=(1, 3))
                     for k in range(n_objects)]) if n_objects else np.zeros((0, h, w))
    bg = 1.0 - objs.max(axis=0) if n_objects else np.ones((h, w))
    return LabelMap(objs, bg)


def finalize_mask(z: LabelMap, image_size: tuple[int, int] | None = None, stride: int = 8) -> np.ndarray:
    """Per-pixel object id (0 = background) by argmax; ties go to the background,
    then to the lower id. Upsampled by nearest neighbor when ``image_size`` is given."""
    bg = z.background if z.background is not None else np.zeros(z.grid_shape)
    scores = np.concatenate([bg[None], z.objects])
    ids = np.argmax(scores, axis=0).astype(np.int32)
    if image_size is None:
        return ids
    h, w = image_size
    rows = np.minimum(np.arange(h) // stride, ids.shape[0] - 1)
    cols = np.minimum(np.arange(w) // stride, ids.shape[1] - 1)
    return ids[np.ix_(rows, cols)]


# --- poses -----------------------------------------------------------------

def belief_sigma(p: Pose, coeff: float) -> float:
    return max(coeff * body_size(p), 0.5)


def pose_to_beliefs(p: Pose, grid: tuple[int, int], stride: int, coeff: float = 0.01) -> LabelMap:
    """One unit-peak Gaussian channel per keypoint; invisible keypoints get an empty channel."""
    if not p.visible.any():
        raise DegeneratePose("no visible keypoint")
    sigma = belief_sigma(p, coeff)
    h, w = grid
    rr = np.arange(h)[:, None]
    cc = np.arange(w)[None, :]
    maps = np.zeros((len(p), h, w))
    for k, ((x, y), vis) in enumerate(zip(p.keypoints, p.visible)):
        if vis:
            cy, cx = pixel_to_cell(y, stride), pixel_to_cell(x, stride)
            maps[k] = np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2 * sigma ** 2))
    return LabelMap(maps)


def beliefs_to_pose(z: LabelMap, stride: int, threshold: float = 0.1) -> Pose:
    k, h, w = z.objects.shape
    flat = z.objects.reshape(k, -1)
    arg = np.argmax(flat, axis=1)
    peak = flat[np.arange(k), arg]
    rows, cols = np.divmod(arg, w)
    kp = np.stack([cell_center(cols, stride), cell_center(rows, stride)], axis=1).astype(float)
    return Pose(kp, peak >= threshold)


# --- sequence drivers --------------------------------------------------------

def propagate_sequence(features: Iterable[FeatureMap], first: LabelMap,
                       cfg: PropConfig | None = None) -> list[LabelMap]:
    """Labels for every frame: the first is ``first`` itself, each later one is
    propagated from the memory and then pushed into it."""
    cfg = cfg or PropConfig()
    it = iter(features)
    fm0 = next(it)
    memory = memory_push(MemoryBank(cfg.memory_size), fm0, first)
    out = [first]
    for fm in it:
        z = propagate(memory, fm, cfg)
        memory = memory_push(memory, fm, z)
        out.append(z)
    return out


def _resize_rgb(frame: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape[:2] == tuple(size):
        return frame
    h, w = size
    return np.asarray(Image.fromarray(frame.astype(np.uint8)).resize((w, h), Image.BILINEAR))


def segment_video(frames: Sequence[np.ndarray], first_ids: np.ndarray,
                  cfg: PropConfig | None = None, resize: bool = True) -> list[np.ndarray]:
    """Per-frame id images at the input resolution, given the first frame's id image."""
    cfg = cfg or PropConfig()
    size = tuple(cfg.mask_size) if resize else tuple(np.asarray(frames[0]).shape[:2])
    stride = cfg.features.stride
    n_obj = int(np.max(first_ids)) if np.size(first_ids) else 0
    labels0 = mask_to_labels(resize_ids(first_ids, size), n_obj, stride)
    feats = (cfg.features.from_image(_resize_rgb(f, size)) for f in frames)
    out_size = np.asarray(first_ids).shape
    results = []
    for z in propagate_sequence(feats, labels0, cfg):
        ids = finalize_mask(z, size, stride)
        results.append(resize_ids(ids, out_size))
    results[0] = np.asarray(first_ids).astype(np.int32)
    return results


def _scale_pose(p: Pose, sx: float, sy: float) -> Pose:
    kp = p.keypoints.astype(float).copy()
    kp[:, 0] = (kp[:, 0] + 0.5) * sx - 0.5
    kp[:, 1] = (kp[:, 1] + 0.5) * sy - 0.5
    return Pose(kp, p.visible.copy())


def propagate_pose(frames: Sequence[np.ndarray], first: Pose, cfg: PropConfig | None = None,
                   resize: bool = True) -> list[Pose]:
    """Per-frame poses at the input resolution, given the first frame's pose."""
    cfg = cfg or PropConfig()
    in_h, in_w = np.asarray(frames[0]).shape[:2]
    size = tuple(cfg.pose_size) if resize else (in_h, in_w)
    stride = cfg.features.stride
    sx, sy = size[1] / in_w, size[0] / in_h
    scaled = _scale_pose(first, sx, sy)
    grid = (size[0] // stride, size[1] // stride)
    beliefs = pose_to_beliefs(scaled, grid, stride, cfg.gaussian_coeff)
    feats = (cfg.features.from_image(_resize_rgb(f, size)) for f in frames)
    poses = [first]
    for z in propagate_sequence(feats, beliefs, cfg)[1:]:
        p = beliefs_to_pose(z, stride, cfg.visibility_threshold)
        poses.append(_scale_pose(p, 1 / sx, 1 / sy))
    return poses
