"""Fusion quality assessment.

Full-reference: PSNR (peak 1.0, normalized domain), the universal image
quality index Q on non-overlapping windows, ERGAS, the spectral angle
mapper in degrees, and the hypercomplex generalization Q2^n. No-reference:
the spectral/spatial distortion pair (D_lambda, D_s) and their product
index QNR with unit exponents.

Conventions (recorded in every JSON report): Q/Q2^n windows default to
32x32 with stride 32, trailing partial windows dropped; windows with a
zero Q denominator are skipped; D_lambda/D_s use exponent 1; QNR uses
alpha = beta = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import RasterStack, patch_grid

DEFAULT_WINDOW = 32


@dataclass(frozen=True)
class FullRefReport:
    psnr: float
    q: float
    ergas: float
    sam: float
    q2n: float

    def as_dict(self) -> dict:
        return {
            "psnr": "infinite" if math.isinf(self.psnr) else self.psnr,
            "q": self.q,
            "ergas": self.ergas,
            "sam": self.sam,
            "q2n": self.q2n,
        }


@dataclass(frozen=True)
class NoRefReport:
    qnr: float
    d_lambda: float
    d_s: float

    def as_dict(self) -> dict:
        return {"qnr": self.qnr, "d_lambda": self.d_lambda, "d_s": self.d_s}


def _check_same_geometry(a: RasterStack, b: RasterStack, what: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{what}: geometry mismatch {a.data.shape} vs {b.data.shape}")


def psnr(fused: RasterStack, truth: RasterStack) -> float:
    """10*log10(1/MSE) with MSE over all pixels and bands; peak is 1.0.
    Identical images return the infinite sentinel."""
    _check_same_geometry(fused, truth, "psnr")
    diff = fused.data.astype(np.float64) - truth.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _block_views(plane: np.ndarray, window: int) -> np.ndarray:
    """Non-overlapping window x window blocks as (n_blocks, window*window)."""
    h, w = plane.shape
    ys = patch_grid(h, window, window)
    xs = patch_grid(w, window, window)
    blocks = [plane[y : y + window, x : x + window].reshape(-1) for y in ys for x in xs]
    return np.asarray(blocks, dtype=np.float64)


def _q_blocks(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Wang-Bovik Q per block; NaN where the denominator vanishes.

    x, y: (n_blocks, n_pixels) float64.
    """
    n = x.shape[1]
    mx = x.mean(axis=1)
    my = y.mean(axis=1)
    xc = x - mx[:, None]
    yc = y - my[:, None]
    vx = np.sum(xc * xc, axis=1) / (n - 1)
    vy = np.sum(yc * yc, axis=1) / (n - 1)
    cxy = np.sum(xc * yc, axis=1) / (n - 1)
    denom = (vx + vy) * (mx * mx + my * my)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (4.0 * cxy * mx * my) / denom
    q[denom == 0.0] = np.nan
    return q


def _uiqi_band(x2d: np.ndarray, y2d: np.ndarray, window: int, what: str) -> float:
    if min(x2d.shape) < window:
        raise ValueError(f"{what}: image {x2d.shape} smaller than window {window}")
    q = _q_blocks(_block_views(x2d, window), _block_views(y2d, window))
    valid = q[~np.isnan(q)]
    if valid.size == 0:
        raise ValueError(f"{what}: every window is degenerate (constant blocks)")
    return float(valid.mean())


def uiqi_q(fused: RasterStack, truth: RasterStack, window: int = DEFAULT_WINDOW) -> float:
    """Universal image quality index, averaged over windows then bands."""
    _check_same_geometry(fused, truth, "uiqi_q")
    per_band = [
        _uiqi_band(fused.band(i).astype(np.float64), truth.band(i).astype(np.float64),
                   window, f"uiqi_q band {i}")
        for i in range(fused.bands)
    ]
    return float(np.mean(per_band))


def ergas(fused: RasterStack, truth: RasterStack, ratio: int) -> float:
    """100/ratio * sqrt(mean over bands of (RMSE_i / mean(truth_i))^2)."""
    _check_same_geometry(fused, truth, "ergas")
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    f = fused.data.astype(np.float64)
    t = truth.data.astype(np.float64)
    means = t.mean(axis=(0, 1))
    if np.any(means == 0.0):
        raise ValueError("ergas undefined: some truth band has zero mean")
    rmse = np.sqrt(np.mean((f - t) ** 2, axis=(0, 1)))
    return float(100.0 / ratio * math.sqrt(np.mean((rmse / means) ** 2)))


def sam(fused: RasterStack, truth: RasterStack) -> float:
    """Mean per-pixel spectral angle in degrees.

    Pixels where either spectral vector has norm <= 1e-12 are skipped;
    with no measurable pixel at all the angle is reported as 0.
    """
    _check_same_geometry(fused, truth, "sam")
    if fused.bands < 2:
        raise ValueError("sam needs at least two bands")
    f = fused.data.astype(np.float64).reshape(-1, fused.bands)
    t = truth.data.astype(np.float64).reshape(-1, truth.bands)
    dot = np.sum(f * t, axis=1)
    sf = np.sum(f * f, axis=1)
    st = np.sum(t * t, axis=1)
    valid = (sf > 1e-24) & (st > 1e-24)
    if not np.any(valid):
        return 0.0
    # cos via dot^2/(|f|^2 |t|^2): identical or exactly collinear vectors
    # give a ratio of exactly 1, so their angle is exactly zero
    ratio = np.clip(dot[valid] ** 2 / (sf[valid] * st[valid]), 0.0, 1.0)
    angles = np.arccos(np.sign(dot[valid]) * np.sqrt(ratio))
    return float(np.degrees(angles.mean()))


# ---------------------------------------------------------------------------
# hypercomplex Q2^n


def cd_conj(z: np.ndarray) -> np.ndarray:
    """Cayley-Dickson conjugate: negate every non-leading component."""
    out = z.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def cd_mult(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cayley-Dickson product on trailing axes of length 2^n.

    (a1, a2)(b1, b2) = (a1 b1 - conj(b2) a2, b2 a1 + a2 conj(b1));
    for length 1 this is plain multiplication, for 2 complex numbers,
    for 4 quaternions (Hamilton product).
    """
    m = a.shape[-1]
    if b.shape[-1] != m:
        raise ValueError("hypercomplex operand lengths differ")
    if m == 1:
        return a * b
    h = m // 2
    a1, a2 = a[..., :h], a[..., h:]
    b1, b2 = b[..., :h], b[..., h:]
    lo = cd_mult(a1, b1) - cd_mult(cd_conj(b2), a2)
    hi = cd_mult(b2, a1) + cd_mult(a2, cd_conj(b1))
    return np.concatenate([lo, hi], axis=-1)


def _hyper_pad(stack: RasterStack) -> np.ndarray:
    """(H, W, m) float64 view with channels zero-padded to the next 2^n."""
    s = stack.bands
    m = 1 << max(0, (s - 1).bit_length())
    data = stack.data.astype(np.float64)
    if m == s:
        return data
    pad = np.zeros((stack.height, stack.width, m - s))
    return np.concatenate([data, pad], axis=2)


def _q2n_block(z1: np.ndarray, z2: np.ndarray) -> float | None:
    """Hypercomplex Q of one block; None when the denominator vanishes.

    z1, z2: (n_pixels, m). Uses hypercomplex means, scalar variances and
    the modulus of the hypercomplex covariance sum((z1-u1) * conj(z2-u2)).
    """
    npix = z1.shape[0]
    u1 = z1.mean(axis=0)
    u2 = z2.mean(axis=0)
    c1 = z1 - u1
    c2 = z2 - u2
    v1 = float(np.sum(c1 * c1)) / (npix - 1)
    v2 = float(np.sum(c2 * c2)) / (npix - 1)
    m1 = float(np.linalg.norm(u1))
    m2 = float(np.linalg.norm(u2))
    denom = (v1 + v2) * (m1 * m1 + m2 * m2)
    if denom == 0.0:
        return None
    cov = cd_mult(c1, cd_conj(c2)).sum(axis=0) / (npix - 1)
    return 4.0 * float(np.linalg.norm(cov)) * m1 * m2 / denom


def q2n(fused: RasterStack, truth: RasterStack, block: int = DEFAULT_WINDOW) -> float:
    """Hypercomplex Q2^n: pixels as 2^n-component numbers, averaged over
    non-overlapping block x block windows. Degenerate windows are skipped;
    if every window degenerates the metric errors."""
    _check_same_geometry(fused, truth, "q2n")
    if min(fused.height, fused.width) < block:
        raise ValueError(f"q2n: image smaller than block {block}")
    zf = _hyper_pad(fused)
    zt = _hyper_pad(truth)
    values = []
    for y in patch_grid(fused.height, block, block):
        for x in patch_grid(fused.width, block, block):
            b1 = zt[y : y + block, x : x + block].reshape(-1, zt.shape[2])
            b2 = zf[y : y + block, x : x + block].reshape(-1, zf.shape[2])
            q = _q2n_block(b1, b2)
            if q is not None:
                values.append(q)
    if not values:
        raise ValueError("q2n: every window is degenerate (constant blocks)")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# no-reference suite


def d_lambda(fused: RasterStack, ms_low: RasterStack, window: int = DEFAULT_WINDOW) -> float:
    """Spectral distortion: mean absolute difference between the inter-band
    Q matrices of the fused image and of the low-resolution MS original."""
    if fused.bands != ms_low.bands:
        raise ValueError("d_lambda: band counts differ")
    s = fused.bands
    if s < 2:
        raise ValueError("d_lambda needs at least two bands")
    total = 0.0
    for i in range(s):
        for j in range(i + 1, s):
            qf = _uiqi_band(fused.band(i).astype(np.float64), fused.band(j).astype(np.float64),
                            window, f"d_lambda fused bands {i},{j}")
            qm = _uiqi_band(ms_low.band(i).astype(np.float64), ms_low.band(j).astype(np.float64),
                            window, f"d_lambda ms bands {i},{j}")
            total += 2.0 * abs(qf - qm)  # (i, j) and (j, i)
    return total / (s * (s - 1))


def d_s(
    fused: RasterStack,
    ms_low: RasterStack,
    pan: RasterStack,
    pan_low: RasterStack,
    window: int = DEFAULT_WINDOW,
) -> float:
    """Spatial distortion: mean absolute difference between each band's Q
    against PAN at full scale and against the degraded PAN at low scale."""
    if pan.bands != 1 or pan_low.bands != 1:
        raise ValueError("d_s: pan inputs must be single-band")
    if fused.bands != ms_low.bands:
        raise ValueError("d_s: band counts differ")
    if (pan.height, pan.width) != (fused.height, fused.width):
        raise ValueError("d_s: pan geometry must match fused")
    if (pan_low.height, pan_low.width) != (ms_low.height, ms_low.width):
        raise ValueError("d_s: pan_low geometry must match ms_low")
    p = pan.band(0).astype(np.float64)
    pl = pan_low.band(0).astype(np.float64)
    total = 0.0
    for i in range(fused.bands):
        qf = _uiqi_band(fused.band(i).astype(np.float64), p, window, f"d_s fused band {i}")
        qm = _uiqi_band(ms_low.band(i).astype(np.float64), pl, window, f"d_s ms band {i}")
        total += abs(qf - qm)
    return total / fused.bands


def qnr(d_lambda_value: float, d_s_value: float) -> float:
    """(1 - D_lambda) * (1 - D_s), exponents alpha = beta = 1."""
    for name, v in (("d_lambda", d_lambda_value), ("d_s", d_s_value)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return (1.0 - d_lambda_value) * (1.0 - d_s_value)


# ---------------------------------------------------------------------------
# report helpers


def full_reference(
    fused: RasterStack,
    truth: RasterStack,
    ratio: int,
    window: int = DEFAULT_WINDOW,
) -> FullRefReport:
    return FullRefReport(
        psnr=psnr(fused, truth),
        q=uiqi_q(fused, truth, window),
        ergas=ergas(fused, truth, ratio),
        sam=sam(fused, truth) if fused.bands >= 2 else 0.0,
        q2n=q2n(fused, truth, window),
    )


def no_reference(
    fused: RasterStack,
    ms_low: RasterStack,
    pan: RasterStack,
    pan_low: RasterStack,
    window: int = DEFAULT_WINDOW,
) -> NoRefReport:
    dl = d_lambda(fused, ms_low, window)
    ds = d_s(fused, ms_low, pan, pan_low, window)
    return NoRefReport(qnr=qnr(dl, ds), d_lambda=dl, d_s=ds)


def conventions(window: int = DEFAULT_WINDOW) -> dict:
    """Metric conventions embedded in every JSON report."""
    return {
        "q_window": window,
        "q_stride": window,
        "q2n_block": window,
        "psnr_peak": 1.0,
        "sam_units": "degrees",
        "d_lambda_exponent": 1,
        "d_s_exponent": 1,
        "qnr_alpha": 1,
        "qnr_beta": 1,
    }
