"""Classical fusion references: bicubic upsampling and SFIM.

Bicubic is the no-fusion lower bound (PAN is never consulted). SFIM
modulates each upsampled MS band by the ratio of the PAN image to its
low-pass (box-filtered) version, which injects PAN detail while exactly
preserving per-pixel band ratios.
"""

from __future__ import annotations

import numpy as np

from .raster import RasterStack, bicubic_resize

EPS_FLAT = 1e-6


def bicubic_baseline(ms_low: RasterStack, ratio: int) -> RasterStack:
    if ratio < 2:
        raise ValueError("ratio must be >= 2")
    return bicubic_resize(ms_low, ms_low.height * ratio, ms_low.width * ratio)


def box_filter(plane: np.ndarray, side: int) -> np.ndarray:
    """Separable side x side mean filter with edge-clamped taps."""
    if side < 1 or side % 2 == 0:
        raise ValueError(f"box side must be odd and positive, got {side}")
    half = side // 2
    out = plane.astype(np.float64)
    for axis in (0, 1):
        moved = np.moveaxis(out, axis, 0)
        idx = np.clip(
            np.arange(moved.shape[0])[:, None] + np.arange(-half, half + 1)[None, :],
            0, moved.shape[0] - 1,
        )
        moved = moved[idx].mean(axis=1)
        out = np.moveaxis(moved, 0, axis)
    return out


def sfim(ms_up: RasterStack, pan: RasterStack, smooth_side: int = 7) -> RasterStack:
    """fused_i = ms_up_i * pan / boxfilter(pan, smooth_side).

    Pixels where the smoothed PAN is below 1e-6 fall back to the unfused
    band (bounded output, no NaN propagation). The default side 7 matches
    2*ratio - 1 for a resolution ratio of 4.
    """
    if (ms_up.height, ms_up.width) != (pan.height, pan.width):
        raise ValueError(
            f"geometry mismatch: ms {ms_up.height}x{ms_up.width} vs "
            f"pan {pan.height}x{pan.width}"
        )
    if pan.bands != 1:
        raise ValueError("pan must be single-band")
    p = pan.band(0).astype(np.float64)
    smooth = box_filter(p, smooth_side)
    flat = smooth < EPS_FLAT
    smooth_safe = np.where(flat, 1.0, smooth)
    modulation = np.where(flat, 1.0, p / smooth_safe)
    fused = ms_up.data.astype(np.float64) * modulation[:, :, None]
    return ms_up.with_data(fused.astype(np.float32))
