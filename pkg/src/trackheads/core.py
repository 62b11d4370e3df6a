"""Shared value types and pixel/grid conversions.

Coordinates follow the image convention: ``x``/``u`` along columns, ``y``/``v``
along rows, origin at the top-left pixel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import networkx as nx
import numpy as np
from PIL import Image, ImageDraw


class TrackError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TrackError):
    pass


class FormatError(TrackError):
    pass


class EmptyMask(TrackError):
    pass


class DegeneratePose(TrackError):
    pass


MIN_BOX_SIZE = 1.0
POSE_WIDTH_COEFF = 0.05

# PoseTrack joint order: r-ankle, r-knee, r-hip, l-hip, l-knee, l-ankle,
# r-wrist, r-elbow, r-shoulder, l-shoulder, l-elbow, l-wrist, neck, nose, head-top
SKELETON_15 = (
    (0, 1), (1, 2), (5, 4), (4, 3), (2, 3),
    (6, 7), (7, 8), (11, 10), (10, 9), (8, 9),
    (8, 2), (9, 3),
    (12, 8), (12, 9), (12, 13), (13, 14),
)


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Dense ``H x W x C`` grid of point vectors at ``stride`` pixels per cell."""

    data: np.ndarray
    stride: int = 8

    def __post_init__(self):
        data = _frozen(self.data, np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionError(f"feature map must be H x W x C with positive dims, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        if self.stride < 1:
            raise DimensionError("stride must be >= 1")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def points(self) -> np.ndarray:
        """Point vectors flattened row-major, shape ``(H*W, C)``."""
        return self.data.reshape(-1, self.channels)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: center ``(u, v)`` and size ``(w, h)`` in pixels."""

    u: float
    v: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_tlwh(cls, x, y, w, h) -> "Box":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def tlwh(self) -> tuple[float, float, float, float]:
        return (self.u - self.w / 2.0, self.v - self.h / 2.0, self.w, self.h)

    def tlbr(self) -> tuple[float, float, float, float]:
        return (self.u - self.w / 2.0, self.v - self.h / 2.0,
                self.u + self.w / 2.0, self.v + self.h / 2.0)

    def to_xyah(self) -> np.ndarray:
        """Measurement vector ``(u, v, gamma, h)`` with ``gamma = h / w``."""
        return np.array([self.u, self.v, self.h / self.w, self.h], dtype=float)

    @classmethod
    def from_xyah(cls, m) -> "Box":
        u, v, gamma, h = (float(x) for x in m[:4])
        h = max(h, MIN_BOX_SIZE)
        w = max(h / gamma, MIN_BOX_SIZE) if gamma > 0 else MIN_BOX_SIZE
        return cls(u, v, w, h)

    def scaled(self, factor: float) -> "Box":
        return Box(self.u, self.v, self.w * factor, self.h * factor)


@dataclass(frozen=True)
class Mask:
    """Binary mask with the dimensions of its source frame."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _frozen(self.bits, bool)
        if bits.ndim != 2:
            raise DimensionError("mask must be 2-D")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, height: int, width: int) -> "Mask":
        return cls(np.zeros((height, width), bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class Pose:
    """Ordered keypoints ``(x, y)`` in pixels with per-point visibility."""

    keypoints: np.ndarray
    visible: np.ndarray = None

    def __post_init__(self):
        kp = _frozen(self.keypoints, float).reshape(-1, 2)
        vis = np.ones(len(kp), bool) if self.visible is None else self.visible
        vis = _frozen(vis, bool)
        if vis.shape != (len(kp),):
            raise DimensionError("visibility must have one flag per keypoint")
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "visible", vis)

    def __len__(self):
        return len(self.keypoints)

    def visible_points(self) -> np.ndarray:
        return self.keypoints[self.visible]


Shape = Union[Box, Mask, Pose]


@dataclass(frozen=True)
class Observation:
    frame: int
    shape: Shape
    class_id: int = 1
    confidence: float = 1.0

    def __post_init__(self):
        if not isinstance(self.shape, (Box, Mask, Pose)):
            raise TypeError(f"unsupported observation shape {type(self.shape).__name__}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class LabelMap:
    """Soft per-object label grids ``(K, H, W)`` plus an optional background grid."""

    objects: np.ndarray
    background: np.ndarray | None = None

    def __post_init__(self):
        obj = _frozen(self.objects, np.float64)
        if obj.ndim != 3:
            raise DimensionError("objects must have shape (K, H, W)")
        if np.any(obj < -1e-9) or np.any(obj > 1 + 1e-9):
            raise ValueError("label values must lie in [0, 1]")
        object.__setattr__(self, "objects", obj)
        if self.background is not None:
            bg = _frozen(self.background, np.float64)
            if bg.shape != obj.shape[1:]:
                raise DimensionError("background grid must match object grids")
            object.__setattr__(self, "background", bg)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.objects.shape[1:]

    def stacked(self) -> np.ndarray:
        """All channels as ``(H, W, K[+1])``, background last if present."""
        chans = [self.objects]
        if self.background is not None:
            chans.append(self.background[None])
        return np.moveaxis(np.concatenate(chans, axis=0), 0, -1)

    @classmethod
    def from_stacked(cls, arr: np.ndarray, with_background: bool) -> "LabelMap":
        arr = np.clip(np.moveaxis(arr, -1, 0), 0.0, 1.0)
        if with_background:
            return cls(arr[:-1], arr[-1])
        return cls(arr)


# --- conversions -----------------------------------------------------------

def cell_center(index, stride: int):
    """Pixel coordinate of the center of feature cell ``index``."""
    return np.asarray(index) * stride + (stride - 1) / 2.0


def pixel_to_cell(coord, stride: int):
    """Continuous feature-grid coordinate of a pixel coordinate (inverse of :func:`cell_center`)."""
    return (np.asarray(coord, float) - (stride - 1) / 2.0) / stride


def box_to_grid(b: Box, stride: float) -> Box:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return Box(b.u / stride, b.v / stride, b.w / stride, b.h / stride)


def box_from_grid(b: Box, stride: float) -> Box:
    return Box(b.u * stride, b.v * stride, b.w * stride, b.h * stride)


def mask_to_box(m: Mask) -> Box:
    """Moment-style box estimate: mean pixel position and mean absolute deviation.

    A filled ``W x H`` rectangle has mean absolute deviation ``W/4`` along x,
    hence the factor 4.
    """
    ys, xs = np.nonzero(m.bits)
    n = len(xs)
    if n == 0:
        raise EmptyMask("cannot estimate a box from an empty mask")
    u, v = xs.mean(), ys.mean()
    w = 4.0 / n * np.abs(xs - u).sum()
    h = 4.0 / n * np.abs(ys - v).sum()
    return Box(float(u), float(v), max(float(w), MIN_BOX_SIZE), max(float(h), MIN_BOX_SIZE))


def box_to_mask(b: Box, height: int, width: int) -> Mask:
    """Rasterize the pixels whose centers fall inside the box (pixel ``j`` is centered at ``j``)."""
    x0, y0, x1, y1 = b.tlbr()
    xs = np.arange(width)
    ys = np.arange(height)
    cols = (xs >= x0) & (xs < x1)
    rows = (ys >= y0) & (ys < y1)
    return Mask(rows[:, None] & cols[None, :])


def body_size(p: Pose) -> float:
    pts = p.visible_points()
    if len(pts) == 0:
        raise DegeneratePose("no visible keypoints")
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(max(ext[0], ext[1]))


def default_edges(n_keypoints: int) -> Sequence[tuple[int, int]]:
    if n_keypoints == 15:
        return SKELETON_15
    return tuple((i, i + 1) for i in range(n_keypoints - 1))


def _cycle_polygons(graph: nx.Graph) -> list[list[int]]:
    polys = []
    for cycle in nx.cycle_basis(graph):
        nodes = set(cycle)
        sub = graph.subgraph(nodes)
        start = cycle[0]
        order, prev, cur = [start], None, start
        while True:
            nxt = [n for n in sorted(sub.neighbors(cur)) if n != prev]
            if not nxt or nxt[0] == start:
                break
            prev, cur = cur, nxt[0]
            order.append(cur)
            if len(order) > len(nodes):
                break
        polys.append(order)
    return polys


def pose_to_mask(p: Pose, frame_size: tuple[int, int], edges=None,
                 width_coeff: float = POSE_WIDTH_COEFF) -> Mask:
    """Rasterize a pose skeleton and fill the closed polygons it forms.

    ``frame_size`` is ``(height, width)``. Segment thickness is
    ``max(1, width_coeff * body_size)`` pixels.
    """
    height, width = frame_size
    if int(p.visible.sum()) < 2:
        raise DegeneratePose("need at least two visible keypoints")
    edges = default_edges(len(p)) if edges is None else edges
    thickness = max(1, int(round(width_coeff * body_size(p))))

    canvas = Image.new("1", (width, height), 0)
    draw = ImageDraw.Draw(canvas)
    kp = p.keypoints
    vis = p.visible
    graph = nx.Graph()
    for a, b in edges:
        if vis[a] and vis[b]:
            graph.add_edge(a, b)
            draw.line([tuple(kp[a]), tuple(kp[b])], fill=1, width=thickness)
    for poly in _cycle_polygons(graph):
        if len(poly) >= 3:
            draw.polygon([tuple(kp[i]) for i in poly], fill=1, outline=1)
    bits = np.array(canvas, dtype=bool)
    if not bits.any():
        # coincident or off-frame keypoints: fall back to a single dot
        x, y = np.clip(np.round(p.visible_points()[0]), 0, [width - 1, height - 1]).astype(int)
        bits[y, x] = True
    return Mask(bits)


def box_iou(a: Box, b: Box) -> float:
    ax0, ay0, ax1, ay1 = a.tlbr()
    bx0, by0, bx1, by1 = b.tlbr()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a: Sequence[Box], boxes_b: Sequence[Box]) -> np.ndarray:
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = box_iou(a, b)
    return out


def shape_box(shape: Shape, frame_size: tuple[int, int] | None = None, edges=None) -> Box:
    """Box summary for any observation shape (poses go through a mask)."""
    if isinstance(shape, Box):
        return shape
    if isinstance(shape, Mask):
        return mask_to_box(shape)
    if frame_size is None:
        raise ValueError("pose observations need the frame size")
    return mask_to_box(pose_to_mask(shape, frame_size, edges))
