"""Single-object box propagation with a cross-correlation or correlation-filter head."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .core import Box, DimensionError, MIN_BOX_SIZE, TrackError
from .features import FeatureSource, _as_float_image, extract_builtin, standardize_channels
from .spectral import circular_xcorr, dft2, xcorr_fft

log = logging.getLogger(__name__)


class SingularError(TrackError):
    pass


class NotInitialized(TrackError):
    pass


@dataclass(frozen=True)
class BoxPropConfig:
    context_factor: float = 4.5
    patch_size: int = 520
    num_scales: int = 3
    scale_step: float = 1.0275
    scale_penalty: float = 0.985
    ridge: float = 1e-4
    momentum: float = 1e-2
    head: str = "dcf"
    response_upsample: int = 16
    sigma: float | None = None  # ideal-response width in cells; None -> 1/10 of the target extent
    window: bool = False        # cosine window on the response map
    feature_window: str = "object"  # DCF feature taper: "object" (Gaussian over the box), "hann", "none"
    features: FeatureSource = field(default_factory=FeatureSource)

    def __post_init__(self):
        if self.num_scales < 1 or self.num_scales % 2 == 0:
            raise ValueError("num_scales must be odd")
        if self.scale_step <= 1:
            raise ValueError("scale_step must exceed 1")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if not 0 <= self.momentum <= 1:
            raise ValueError("momentum must lie in [0, 1]")
        if self.head not in ("xcorr", "dcf"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.feature_window not in ("object", "hann", "none"):
            raise ValueError(f"unknown feature window {self.feature_window!r}")
        if self.patch_size % self.features.stride:
            raise ValueError("stride must divide patch_size")

    @property
    def response_size(self) -> int:
        return self.patch_size // self.features.stride

    @property
    def scale_factors(self) -> np.ndarray:
        k = np.arange(self.num_scales) - self.num_scales // 2
        return self.scale_step ** k

    @property
    def scale_penalties(self) -> np.ndarray:
        k = np.abs(np.arange(self.num_scales) - self.num_scales // 2)
        return self.scale_penalty ** k

    @property
    def response_sigma(self) -> float:
        if self.sigma is not None:
            return self.sigma
        return 0.1 * self.response_size / self.context_factor


def crop_side(box: Box, cfg: BoxPropConfig, scale: float = 1.0) -> float:
    return cfg.context_factor * max(box.w, box.h) * scale


def _interp_matrix(coords: np.ndarray, n: int) -> np.ndarray:
    """Linear-interpolation weights ``(len(coords), n)``; samples beyond the edge get zero weight."""
    m = np.zeros((len(coords), n))
    i0 = np.floor(coords).astype(int)
    frac = coords - i0
    rows = np.arange(len(coords))
    for idx, wgt in ((i0, 1.0 - frac), (i0 + 1, frac)):
        ok = (idx >= 0) & (idx < n)
        m[rows[ok], idx[ok]] += wgt[ok]
    return m


def crop_patch(image, box: Box, cfg: BoxPropConfig, scale: float = 1.0) -> np.ndarray:
    """Square context crop centered on ``box``, resampled bilinearly to ``patch_size``.

    Samples outside the frame take the frame's per-channel mean.
    """
    img = _as_float_image(image)
    if not (box.w > 0 and box.h > 0):
        raise DimensionError("box must have positive size")
    p = cfg.patch_size
    step = crop_side(box, cfg, scale) / p
    offs = (np.arange(p) + 0.5 - p / 2.0) * step
    wy = _interp_matrix(box.v + offs, img.shape[0])
    wx = _interp_matrix(box.u + offs, img.shape[1])
    fill = img.reshape(-1, 3).mean(axis=0)
    centered = img - fill
    out = np.einsum("ph,hwc,qw->pqc", wy, centered, wx, optimize=True)
    return out + fill


def gaussian_response(size: int, sigma: float) -> np.ndarray:
    """Gaussian peaked (value 1) at cell ``size // 2``."""
    d = np.arange(size) - size // 2
    g = np.exp(-0.5 * (d / sigma) ** 2)
    return np.outer(g, g)


@dataclass(frozen=True)
class DcfTemplate:
    numerator: np.ndarray     # (H, W, C): x_hat * conj(y_hat)
    denominator: np.ndarray   # (H, W): sum_c |x_hat_c|^2 + ridge
    ideal: np.ndarray         # (H, W): y_hat
    ridge: float

    @property
    def filter_spectrum(self) -> np.ndarray:
        return self.numerator / self.denominator[..., None]


def _hwc(x) -> np.ndarray:
    x = np.asarray(x, float)
    return x[..., None] if x.ndim == 2 else x


def dcf_solve(x, y, ridge: float) -> DcfTemplate:
    """Closed-form multi-channel ridge regression of ``w * x ~ y`` in the Fourier domain."""
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    x = _hwc(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return _solve_spectra(dft2(x), dft2(np.asarray(y, float)), ridge)


def _solve_spectra(x_hat: np.ndarray, y_hat: np.ndarray, ridge: float) -> DcfTemplate:
    den = np.sum(np.abs(x_hat) ** 2, axis=2) + ridge
    if np.any(den == 0):
        raise SingularError("zero spectral energy with ridge = 0")
    return DcfTemplate(x_hat * np.conj(y_hat)[..., None], den, y_hat, ridge)


def dcf_update(tmpl: DcfTemplate, x_t, momentum: float) -> DcfTemplate:
    """Moving average of numerator and denominator with weight ``momentum`` on the new patch."""
    x_t = _hwc(x_t)
    if x_t.shape != tmpl.numerator.shape:
        raise DimensionError(f"feature shape {x_t.shape} != template {tmpl.numerator.shape}")
    fresh = _solve_spectra(dft2(x_t), tmpl.ideal, tmpl.ridge)
    a = momentum
    return DcfTemplate(a * fresh.numerator + (1 - a) * tmpl.numerator,
                       a * fresh.denominator + (1 - a) * tmpl.denominator,
                       tmpl.ideal, tmpl.ridge)


def dcf_response(tmpl: DcfTemplate, z) -> np.ndarray:
    return circular_xcorr(tmpl.filter_spectrum, dft2(_hwc(z)))


def peak_location(resp: np.ndarray, factor: int, radius: int = 2) -> tuple[float, float, float]:
    """Sub-cell ``(row, col, value)`` of the response maximum.

    The response is resampled ``factor`` times finer with a cubic spline in a
    ``radius``-cell window around the coarse argmax (a bilinear interpolant
    peaks on a grid node, so it cannot refine the location).
    """
    r0, c0 = np.unravel_index(int(np.argmax(resp)), resp.shape)
    if factor <= 1 or min(resp.shape) < 4:
        return float(r0), float(c0), float(resp[r0, c0])
    h, w = resp.shape
    ys = np.arange(max(r0 - radius, 0) * factor, min(r0 + radius, h - 1) * factor + 1) / factor
    xs = np.arange(max(c0 - radius, 0) * factor, min(c0 + radius, w - 1) * factor + 1) / factor
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    fine = map_coordinates(resp, [yy, xx], order=3, mode="nearest")
    i, j = np.unravel_index(int(np.argmax(fine)), fine.shape)
    return float(ys[i]), float(xs[j]), float(fine[i, j])


@dataclass
class BoxPropState:
    box: Box
    dcf: DcfTemplate | None = None
    exemplar: np.ndarray | None = None  # xcorr template cells
    frame: int = 0
    last_scale: int = 0


class BoxTracker:
    """Propagates one box through a video from its first-frame ground truth."""

    def __init__(self, cfg: BoxPropConfig | None = None):
        self.cfg = cfg or BoxPropConfig()
        self.state: BoxPropState | None = None
        n = self.cfg.response_size
        self._ideal = gaussian_response(n, self.cfg.response_sigma)
        self._window = np.outer(np.hanning(n), np.hanning(n)) if self.cfg.window else None
        self._feature_window: np.ndarray | None = None

    def _make_feature_window(self, box: Box) -> np.ndarray | None:
        """Taper applied to DCF features so the static context does not dominate the filter.

        The ``object`` window is a Gaussian whose standard deviation is half the
        box extent in cells; the crop side scales with the box, so it is fixed
        for the whole sequence.
        """
        kind, n = self.cfg.feature_window, self.cfg.response_size
        if self.cfg.head != "dcf" or kind == "none":
            return None
        if kind == "hann":
            return np.outer(np.hanning(n), np.hanning(n))[..., None]
        cells = n / crop_side(box, self.cfg)
        d = np.arange(n) - n // 2
        gy = np.exp(-0.5 * (d / max(box.h * cells / 2, 0.5)) ** 2)
        gx = np.exp(-0.5 * (d / max(box.w * cells / 2, 0.5)) ** 2)
        return np.outer(gy, gx)[..., None]

    def features(self, image, box: Box, scale: float = 1.0) -> np.ndarray:
        """Patch features; the DCF head skips per-point L2 normalization so that
        low-contrast context stays quiet instead of being lifted to unit norm."""
        patch = crop_patch(image, box, self.cfg, scale)
        src = self.cfg.features
        if self.cfg.head == "dcf":
            fm = extract_builtin(patch, src.stride)
            feats = (standardize_channels(fm) if src.normalize else fm).data.astype(np.float64)
        else:
            feats = src.from_image(patch).data.astype(np.float64)
        if self._feature_window is not None and feats.shape[:2] == self._feature_window.shape[:2]:
            feats = feats * self._feature_window
        return feats

    def _exemplar(self, feats: np.ndarray, box: Box) -> np.ndarray:
        n = self.cfg.response_size
        c = n // 2
        cells_per_px = self.cfg.patch_size / crop_side(box, self.cfg) / self.cfg.features.stride
        eh = max(int(np.ceil(box.h * cells_per_px / 2)), 1)
        ew = max(int(np.ceil(box.w * cells_per_px / 2)), 1)
        eh, ew = min(eh, c), min(ew, c)
        return feats[c - eh:c + eh + 1, c - ew:c + ew + 1]

    def init(self, image, box: Box) -> None:
        self._feature_window = self._make_feature_window(box)
        feats = self.features(image, box)
        st = BoxPropState(box=box)
        if self.cfg.head == "dcf":
            st.dcf = dcf_solve(feats, self._ideal, self.cfg.ridge)
        else:
            st.exemplar = self._exemplar(feats, box)
        self.state = st

    def _response(self, feats: np.ndarray) -> np.ndarray:
        if self.cfg.head == "dcf":
            return dcf_response(self.state.dcf, feats)
        return xcorr_fft(self.state.exemplar, feats)

    def _offset(self) -> tuple[float, float]:
        """Search cell corresponding to response index ``(0, 0)``."""
        if self.cfg.head == "dcf":
            return 0.0, 0.0
        ex = self.state.exemplar
        return (ex.shape[0] - 1) / 2.0, (ex.shape[1] - 1) / 2.0

    def search(self, image) -> list[tuple[float, float, float]]:
        """Per-scale ``(penalized peak, row, col)`` in search-grid cells."""
        st = self.state
        out = []
        for s, pen in zip(self.cfg.scale_factors, self.cfg.scale_penalties):
            resp = self._response(self.features(image, st.box, s))
            if self._window is not None and resp.shape == self._window.shape:
                resp = resp * self._window
            r, c, val = peak_location(resp, self.cfg.response_upsample)
            out.append((val * pen, r, c))
        return out

    def step(self, image) -> Box:
        if self.state is None:
            raise NotInitialized("call init() with the first-frame box before step()")
        st, cfg = self.state, self.cfg
        results = self.search(image)
        best = int(np.argmax([r[0] for r in results]))
        _, r, c = results[best]
        scale = float(cfg.scale_factors[best])
        oy, ox = self._offset()
        centre = cfg.response_size // 2
        px_per_cell = cfg.features.stride * crop_side(st.box, cfg, scale) / cfg.patch_size
        dy = (r + oy - centre) * px_per_cell
        dx = (c + ox - centre) * px_per_cell
        box = Box(st.box.u + dx, st.box.v + dy,
                  max(st.box.w * scale, MIN_BOX_SIZE), max(st.box.h * scale, MIN_BOX_SIZE))
        st.box = box
        st.frame += 1
        st.last_scale = best
        if cfg.head == "dcf" and cfg.momentum > 0:
            st.dcf = dcf_update(st.dcf, self.features(image, box), cfg.momentum)
        return box


def track_sequence(frames, init_box: Box, cfg: BoxPropConfig | None = None) -> list[Box]:
    """Boxes for every frame; the first is ``init_box`` itself."""
    frames = iter(frames)
    tracker = BoxTracker(cfg)
    tracker.init(next(frames), init_box)
    boxes = [init_box]
    for img in frames:
        boxes.append(tracker.step(img))
    return boxes
