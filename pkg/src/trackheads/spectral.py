"""2-D DFT and cross-correlation.

The forward transform is unnormalized; the inverse carries ``1/(H*W)``.
Correlation is ``g[n] = sum_m t[m] * s[m + n]``, i.e. the template spectrum is
conjugated.
"""
from __future__ import annotations

import numpy as np

from .core import DimensionError


def dft2(grid) -> np.ndarray:
    """Forward 2-D DFT over the first two axes (any trailing axes are batched)."""
    g = np.asarray(grid)
    if g.ndim < 2 or min(g.shape[:2]) < 1:
        raise DimensionError("dft2 needs a grid with H, W >= 1")
    return np.fft.fft2(g, axes=(0, 1))


def idft2(spectrum) -> np.ndarray:
    return np.fft.ifft2(np.asarray(spectrum), axes=(0, 1))


def _as_hwc(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise DimensionError(f"expected H x W x C, got {a.shape}")
    return a


def _check_fit(t: np.ndarray, s: np.ndarray) -> None:
    if t.shape[2] != s.shape[2]:
        raise DimensionError("template and search channel counts differ")
    if t.shape[0] > s.shape[0] or t.shape[1] > s.shape[1]:
        raise DimensionError(f"template {t.shape[:2]} does not fit in search {s.shape[:2]}")


def xcorr_spatial(template, search) -> np.ndarray:
    """Valid-mode cross-correlation summed over channels, by direct summation."""
    t, s = _as_hwc(template), _as_hwc(search)
    _check_fit(t, s)
    th, tw = t.shape[:2]
    oh, ow = s.shape[0] - th + 1, s.shape[1] - tw + 1
    out = np.zeros((oh, ow))
    for dy in range(th):
        for dx in range(tw):
            out += s[dy:dy + oh, dx:dx + ow, :] @ t[dy, dx, :]
    return out


def xcorr_fft(template, search) -> np.ndarray:
    """Same as :func:`xcorr_spatial`, via zero-padded DFTs."""
    t, s = _as_hwc(template), _as_hwc(search)
    _check_fit(t, s)
    sh, sw = s.shape[:2]
    th, tw = t.shape[:2]
    tpad = np.zeros_like(s)
    tpad[:th, :tw] = t
    spec = np.conj(dft2(tpad)) * dft2(s)
    full = np.real(idft2(spec.sum(axis=2)))
    return full[: sh - th + 1, : sw - tw + 1]


def circular_xcorr(filt_spectrum, search_spectrum) -> np.ndarray:
    """Circular correlation of per-channel spectra ``(H, W, C)``, summed over channels."""
    return np.real(idft2((np.conj(filt_spectrum) * search_spectrum).sum(axis=2)))
