"""Appearance-model boundary: feature files and the built-in extractor."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DimensionError, FeatureMap, FormatError

UTFM_MAGIC = b"UTFM"
UTFM_VERSION = 1
_HEADER = struct.Struct("<4s5I")

N_ORIENT_BINS = 8
BUILTIN_CHANNELS = 3 + N_ORIENT_BINS + 4


def save_feature_map(fm: FeatureMap, path) -> None:
    Path(path).write_bytes(encode_feature_map(fm))


def encode_feature_map(fm: FeatureMap) -> bytes:
    header = _HEADER.pack(UTFM_MAGIC, UTFM_VERSION, fm.height, fm.width, fm.channels, fm.stride)
    return header + np.ascontiguousarray(fm.data, dtype="<f4").tobytes()


def decode_feature_map(raw: bytes) -> FeatureMap:
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, h, w, c, stride = _HEADER.unpack_from(raw)
    if magic != UTFM_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != UTFM_VERSION:
        raise FormatError(f"unsupported version {version}")
    if min(h, w, c) == 0:
        raise DimensionError("zero-sized feature map")
    n = h * w * c
    payload = raw[_HEADER.size:]
    if len(payload) != 4 * n:
        raise FormatError(f"payload has {len(payload)} bytes, header implies {4 * n}")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return FeatureMap(data, stride=stride)


def load_feature_map(path) -> FeatureMap:
    return decode_feature_map(Path(path).read_bytes())


def _as_float_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected an RGB image, got shape {img.shape}")
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def _cell_mean(a: np.ndarray, cell: int) -> np.ndarray:
    h, w = a.shape[0] // cell, a.shape[1] // cell
    a = a[: h * cell, : w * cell]
    return a.reshape(h, cell, w, cell, *a.shape[2:]).mean(axis=(1, 3))


def extract_builtin(image, stride: int = 8) -> FeatureMap:
    """Hand-crafted 15-channel point features, one vector per ``stride x stride`` cell.

    Channels: mean RGB, an 8-bin signed gradient-orientation histogram
    (magnitude-weighted, averaged over the cell, bin 0 centered on +x), and the
    mean gray level of the four quadrants of the cell.
    """
    img = _as_float_image(image)
    if img.shape[0] < stride or img.shape[1] < stride:
        raise DimensionError(f"image {img.shape[:2]} smaller than stride {stride}")
    h, w = img.shape[0] // stride, img.shape[1] // stride
    img = img[: h * stride, : w * stride]
    gray = img.mean(axis=2)

    rgb = _cell_mean(img, stride)

    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    bins = np.round(theta / (2 * np.pi / N_ORIENT_BINS)).astype(int) % N_ORIENT_BINS
    cell_id = (np.arange(h * stride)[:, None] // stride) * w + np.arange(w * stride)[None, :] // stride
    hist = np.bincount((cell_id * N_ORIENT_BINS + bins).ravel(), weights=mag.ravel(),
                       minlength=h * w * N_ORIENT_BINS)
    hist = hist.reshape(h, w, N_ORIENT_BINS) / (stride * stride)

    half = max(stride // 2, 1)
    if stride >= 2:
        quads = _cell_mean(gray, half).reshape(h, 2, w, 2).transpose(0, 2, 1, 3).reshape(h, w, 4)
    else:
        quads = np.repeat(gray[..., None], 4, axis=2)

    return FeatureMap(np.concatenate([rgb, hist, quads], axis=2), stride=stride)


def l2_normalize_points(fm: FeatureMap, eps: float = 1e-12) -> FeatureMap:
    norms = np.linalg.norm(fm.data.astype(np.float64), axis=2, keepdims=True)
    safe = np.where(norms > eps, norms, 1.0)
    return FeatureMap(np.where(norms > eps, fm.data / safe, 0.0), stride=fm.stride)


def standardize_channels(fm: FeatureMap, eps: float = 1e-8) -> FeatureMap:
    """Zero-mean, unit-variance channels over the map; constant channels become 0."""
    data = fm.data.astype(np.float64)
    mu = data.mean(axis=(0, 1), keepdims=True)
    sd = data.std(axis=(0, 1), keepdims=True)
    return FeatureMap(np.where(sd > eps, (data - mu) / np.maximum(sd, eps), 0.0), stride=fm.stride)


@dataclass(frozen=True)
class FeatureSource:
    """Where point features come from.

    ``builtin`` computes features from pixels; ``file`` reads UTFM files. With
    ``normalize`` on, built-in channels are standardized per map before the
    per-point L2 normalization (raw built-in channels are all non-negative and
    would make every cosine close to 1); file features are only L2-normalized.
    """

    mode: str = "builtin"
    stride: int = 8
    normalize: bool = True

    def __post_init__(self):
        if self.mode not in ("builtin", "file"):
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def check_resolution(self, height: int, width: int) -> None:
        if height % self.stride or width % self.stride:
            raise DimensionError(f"stride {self.stride} does not divide {height}x{width}")

    def from_image(self, image) -> FeatureMap:
        fm = extract_builtin(image, self.stride)
        if self.normalize:
            fm = l2_normalize_points(standardize_channels(fm))
        return fm

    def from_file(self, path) -> FeatureMap:
        fm = load_feature_map(path)
        return l2_normalize_points(fm) if self.normalize else fm

    def __call__(self, source) -> FeatureMap:
        if self.mode == "file":
            return self.from_file(source)
        return self.from_image(source)
