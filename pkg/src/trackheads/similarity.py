"""Object-level features and appearance similarity between tracklets and detections."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.special import softmax

from .core import Box, FeatureMap, Mask, TrackError, cell_center, pixel_to_cell

SIMILARITY_MODES = ("rsm", "cf", "gpf", "gf")


class EmptyFeature(TrackError):
    pass


class ShapeMismatch(TrackError):
    pass


@dataclass(frozen=True)
class ObjectFeature:
    """Point vectors ``(s, C)`` of one observation, its center-of-mass vector, and grid shape.

    ``shape`` is ``None`` for irregular (mask) supports.
    """

    points: np.ndarray
    center: np.ndarray
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim != 2 or len(pts) == 0:
            raise EmptyFeature("object feature needs at least one point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", np.asarray(self.center, float))


def _cell_index(fm: FeatureMap, x: float, y: float) -> tuple[int, int]:
    col = int(np.clip(np.round(pixel_to_cell(x, fm.stride)), 0, fm.width - 1))
    row = int(np.clip(np.round(pixel_to_cell(y, fm.stride)), 0, fm.height - 1))
    return row, col


def crop_box_features(fm: FeatureMap, box: Box, fixed_size: tuple[int, int] | None = None) -> ObjectFeature:
    """Point vectors of the cells whose centers fall inside ``box``.

    With ``fixed_size=(rows, cols)`` the box is instead resampled bilinearly on
    a fixed grid, which makes sizes comparable across observations.
    """
    r, c = _cell_index(fm, box.u, box.v)
    center = fm.data[r, c]
    if fixed_size is not None:
        rows, cols = fixed_size
        x0, y0, _, _ = box.tlwh()
        ys = pixel_to_cell(y0 + (np.arange(rows) + 0.5) * box.h / rows, fm.stride)
        xs = pixel_to_cell(x0 + (np.arange(cols) + 0.5) * box.w / cols, fm.stride)
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        pts = np.stack([map_coordinates(fm.data[..., k], [yy, xx], order=1, mode="nearest")
                        for k in range(fm.channels)], axis=-1)
        return ObjectFeature(pts.reshape(-1, fm.channels), center, (rows, cols))
    x0, y0, x1, y1 = box.tlbr()
    cx = cell_center(np.arange(fm.width), fm.stride)
    cy = cell_center(np.arange(fm.height), fm.stride)
    cols = np.nonzero((cx >= x0) & (cx < x1))[0]
    rows = np.nonzero((cy >= y0) & (cy < y1))[0]
    if len(cols) == 0 or len(rows) == 0:
        return ObjectFeature(center[None], center, (1, 1))
    block = fm.data[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return ObjectFeature(block.reshape(-1, fm.channels), center, block.shape[:2])


def mask_coverage(fm: FeatureMap, mask: Mask) -> np.ndarray:
    """Fraction of each feature cell covered by the mask, shape ``(H, W)``."""
    s = fm.stride
    bits = np.zeros((fm.height * s, fm.width * s))
    h = min(mask.height, bits.shape[0])
    w = min(mask.width, bits.shape[1])
    bits[:h, :w] = mask.bits[:h, :w]
    return bits.reshape(fm.height, s, fm.width, s).mean(axis=(1, 3))


def crop_mask_features(fm: FeatureMap, mask: Mask, min_cover: float = 0.5) -> ObjectFeature:
    cover = mask_coverage(fm, mask)
    sel = cover >= min_cover
    if not sel.any():
        if cover.max() <= 0:
            raise EmptyFeature("mask does not cover any feature cell")
        sel = cover == cover.max()
    ys, xs = np.nonzero(mask.bits)
    r, c = _cell_index(fm, xs.mean(), ys.mean())
    return ObjectFeature(fm.data[sel], fm.data[r, c], None)


def cosine(a, b) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _offsets(sizes: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(sizes)])


def rsm(tracklets: Sequence[np.ndarray], detections: Sequence[np.ndarray]) -> np.ndarray:
    """Reconstruction similarity between every tracklet and detection point set.

    Each tracklet's points are rebuilt from a detection's points with the
    matching block of the row-softmaxed global affinity ``softmax(T D^T)``, and
    vice versa; the score averages the two reconstruction cosines.
    """
    if any(len(t) == 0 for t in tracklets) or any(len(d) == 0 for d in detections):
        raise EmptyFeature("every object needs at least one point")
    n, m = len(tracklets), len(detections)
    out = np.zeros((n, m))
    if n == 0 or m == 0:
        return out
    T = np.concatenate(tracklets, axis=0)
    D = np.concatenate(detections, axis=0)
    logits = T @ D.T
    fwd = softmax(logits, axis=1)
    bwd = softmax(logits.T, axis=1)
    to = _offsets([len(t) for t in tracklets])
    do = _offsets([len(d) for d in detections])
    for i, t in enumerate(tracklets):
        ri = slice(to[i], to[i + 1])
        for j, d in enumerate(detections):
            cj = slice(do[j], do[j + 1])
            t_hat = fwd[ri, cj] @ d
            d_hat = bwd[cj, ri] @ t
            out[i, j] = 0.5 * (cosine(t, t_hat) + cosine(d, d_hat))
    return out


def baseline_similarity(mode: str, tracklets: Sequence[ObjectFeature],
                        detections: Sequence[ObjectFeature]) -> np.ndarray:
    """Cosine similarity of center (``cf``), mean-pooled (``gpf``) or flattened (``gf``) features."""
    out = np.zeros((len(tracklets), len(detections)))
    for i, t in enumerate(tracklets):
        for j, d in enumerate(detections):
            if mode == "cf":
                out[i, j] = cosine(t.center, d.center)
            elif mode == "gpf":
                out[i, j] = cosine(t.points.mean(axis=0), d.points.mean(axis=0))
            elif mode == "gf":
                if t.shape is None or d.shape is None or t.points.shape != d.points.shape:
                    raise ShapeMismatch("global features need equal, fixed point counts")
                out[i, j] = cosine(t.points, d.points)
            else:
                raise ValueError(f"unknown baseline mode {mode!r}")
    return out


def similarity_matrix(mode: str, histories: Sequence[Sequence[ObjectFeature]],
                      detections: Sequence[ObjectFeature]) -> np.ndarray:
    """Tracklet-by-detection similarity; each tracklet is given by its feature history.

    RSM stacks all history points of a tracklet; GPF pools them; CF and GF use
    the latest observation.
    """
    if mode == "rsm":
        return rsm([np.concatenate([f.points for f in h]) for h in histories],
                   [d.points for d in detections])
    if mode == "gpf":
        pooled = [ObjectFeature(np.concatenate([f.points for f in h]), h[-1].center, None)
                  for h in histories]
        return baseline_similarity("gpf", pooled, detections)
    return baseline_similarity(mode, [h[-1] for h in histories], detections)
