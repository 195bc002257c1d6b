"""Multi-band rasters: representation, file I/O, resampling, data simulation.

The on-disk format is PSR1, a tiny bit-exact container: one ASCII header
line ``PSR1 <height> <width> <bands> <bit_depth>\\n`` followed by
bands x height x width little-endian float32 values, band-major,
row-major within each band. Files written by :func:`save_raster` hold
normalized values in [0, 1] and round-trip bit-for-bit; files holding raw
digital numbers (any value above 1) are normalized on load by
1 / (2^bit_depth - 1).

8-bit PNG import/export is supported for visualization only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

PSR1_MAGIC = "PSR1"


@dataclass(frozen=True)
class RasterStack:
    """An immutable height x width x bands stack of float32 samples.

    ``bit_depth`` records the original radiometric depth of the sensor
    data (used to denormalize for PNG export); ``sensor_tag`` is free
    text carried along for reporting.
    """

    data: np.ndarray
    bit_depth: int = 11
    sensor_tag: str = ""

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float32)
        if a.ndim != 3:
            raise ValueError(f"raster data must be (height, width, bands), got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"raster dimensions must be positive, got {a.shape[:2]}")
        if a.shape[2] < 1:
            raise ValueError("raster needs at least one band")
        if not np.all(np.isfinite(a)):
            raise ValueError("raster data contains non-finite values")
        if self.bit_depth < 1 or self.bit_depth > 32:
            raise ValueError(f"bit_depth out of range: {self.bit_depth}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def band(self, i: int) -> np.ndarray:
        return self.data[:, :, i]

    def with_data(self, data: np.ndarray) -> "RasterStack":
        return RasterStack(data, bit_depth=self.bit_depth, sensor_tag=self.sensor_tag)


@dataclass(frozen=True)
class PatchPair:
    """One training sample: stacked (MS-upsampled + PAN) input and MS target."""

    input: RasterStack
    target: RasterStack

    def __post_init__(self):
        if self.input.bands != self.target.bands + 1:
            raise ValueError(
                f"input bands {self.input.bands} must be target bands {self.target.bands} + 1"
            )
        if (
            self.input.height != self.input.width
            or self.input.height != self.target.height
            or self.input.width != self.target.width
        ):
            raise ValueError("input and target must be square patches of equal size")

    @property
    def size(self) -> int:
        return self.input.height


def load_raster(path: str) -> RasterStack:
    """Read a PSR1 (or 8-bit PNG) file into a normalized stack.

    PSR1 payloads whose maximum exceeds 1 are treated as raw digital
    numbers and divided by (2^bit_depth - 1); payloads already in [0, 1]
    are returned verbatim, which keeps save/load round trips bit-exact.
    """
    p = str(path)
    if p.lower().endswith(".png"):
        return _load_png(p)
    with open(p, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 5 or parts[0] != PSR1_MAGIC:
            raise ValueError(f"{p}: not a PSR1 file (header {header!r})")
        try:
            height, width, bands, bit_depth = (int(v) for v in parts[1:])
        except ValueError:
            raise ValueError(f"{p}: malformed PSR1 header {header!r}") from None
        if bands < 1:
            raise ValueError(f"{p}: unsupported band count {bands}")
        n = height * width * bands
        raw = np.frombuffer(f.read(), dtype="<f4")
        if raw.size != n:
            raise ValueError(f"{p}: payload holds {raw.size} floats, header promises {n}")
    planes = raw.reshape(bands, height, width)
    data = np.ascontiguousarray(planes.transpose(1, 2, 0))
    if data.size and np.nanmax(data) > 1.0:
        scale = float(2**bit_depth - 1)
        data = (data.astype(np.float64) / scale).astype(np.float32)
    return RasterStack(np.clip(data, 0.0, 1.0), bit_depth=bit_depth)


def save_raster(stack: RasterStack, path: str) -> None:
    """Write a stack as PSR1 (normalized payload, bit-exact round trip)."""
    p = str(path)
    if p.lower().endswith(".png"):
        export_png(stack, p)
        return
    header = f"{PSR1_MAGIC} {stack.height} {stack.width} {stack.bands} {stack.bit_depth}\n"
    planes = np.ascontiguousarray(stack.data.transpose(2, 0, 1), dtype="<f4")
    with open(p, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(planes.tobytes())


def _load_png(path: str) -> RasterStack:
    img = Image.open(path)
    a = np.asarray(img)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.dtype != np.uint8:
        raise ValueError(f"{path}: only 8-bit PNG import is supported")
    data = (a.astype(np.float32) / 255.0).astype(np.float32)
    return RasterStack(data, bit_depth=8)


def export_png(stack: RasterStack, path: str, bands: tuple[int, ...] | None = None) -> None:
    """8-bit PNG preview of up to three bands (denormalized). Visualization only."""
    if bands is None:
        bands = tuple(range(min(3, stack.bands)))
    for b in bands:
        if b < 0 or b >= stack.bands:
            raise ValueError(f"band index {b} out of range for {stack.bands}-band stack")
    sel = stack.data[:, :, list(bands)]
    arr = np.clip(np.rint(sel * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    elif arr.shape[2] == 2:
        pad = np.concatenate([arr, np.zeros_like(arr[:, :, :1])], axis=2)
        Image.fromarray(pad, mode="RGB").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom (a = -0.5) weights for taps at offsets -1, 0, 1, 2.

    t is the fractional position in [0, 1); returns shape (len(t), 4).
    At t == 0 the weights are exactly (0, 1, 0, 0), so identity resizes
    are bit-exact.
    """
    a = -0.5
    d = np.stack([t + 1.0, t, 1.0 - t, 2.0 - t], axis=1)  # |distance| to each tap
    w = np.empty_like(d)
    near = d[:, 1:3]
    w[:, 1:3] = (a + 2.0) * near**3 - (a + 3.0) * near**2 + 1.0
    far = d[:, [0, 3]]
    w[:, [0, 3]] = a * (far**3 - 5.0 * far**2 + 8.0 * far - 4.0)
    return w


def _resample_axis(plane: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    """Cubic resampling of one axis with clamped (edge-replicated) taps."""
    old_len = plane.shape[axis]
    # pixel-center alignment: dst pixel i samples src coordinate (i+0.5)*scale-0.5
    src = (np.arange(new_len, dtype=np.float64) + 0.5) * (old_len / new_len) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    w = _cubic_weights(frac)  # (new_len, 4)
    taps = np.clip(base[:, None] + np.arange(-1, 3)[None, :], 0, old_len - 1)  # (new_len, 4)
    moved = np.moveaxis(plane, axis, 0)
    gathered = moved[taps]  # (new_len, 4, ...)
    out = np.einsum("nt...,nt->n...", gathered, w)
    return np.moveaxis(out, 0, axis)


def bicubic_resize(stack: RasterStack, new_height: int, new_width: int) -> RasterStack:
    """Band-wise Catmull-Rom bicubic resize with clamped edges."""
    if new_height < 1 or new_width < 1:
        raise ValueError("target dimensions must be >= 1")
    data = stack.data.astype(np.float64)
    if new_height != stack.height:
        data = _resample_axis(data, new_height, axis=0)
    if new_width != stack.width:
        data = _resample_axis(data, new_width, axis=1)
    return stack.with_data(data.astype(np.float32))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    half = math.ceil(2.0 * sigma)
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _blur_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    half = len(kernel) // 2
    moved = np.moveaxis(data, axis, 0)
    idx = np.clip(np.arange(moved.shape[0])[:, None] + np.arange(-half, half + 1)[None, :],
                  0, moved.shape[0] - 1)
    out = np.einsum("nt...,t->n...", moved[idx], kernel)
    return np.moveaxis(out, 0, axis)


def decimate(stack: RasterStack, ratio: int) -> RasterStack:
    """Gaussian anti-alias (sigma = ratio/2, clamped edges) then point-sample
    every ratio-th pixel starting at index 0."""
    if ratio < 2:
        raise ValueError(f"ratio must be >= 2, got {ratio}")
    if stack.height % ratio or stack.width % ratio:
        raise ValueError(
            f"dimensions {stack.height}x{stack.width} not divisible by ratio {ratio}"
        )
    kernel = _gaussian_kernel(ratio / 2.0)
    data = stack.data.astype(np.float64)
    data = _blur_axis(data, kernel, axis=0)
    data = _blur_axis(data, kernel, axis=1)
    return stack.with_data(data[::ratio, ::ratio].astype(np.float32))


def wald_simulate(
    ms_truth: RasterStack, pan_full: RasterStack, ratio: int
) -> tuple[RasterStack, RasterStack, RasterStack]:
    """Reduced-scale simulation: degrade both inputs by ``ratio`` so the
    original MS image becomes the ground truth on the output grid.

    Returns (ms_up, pan_sim, truth): the blurred/decimated/re-upsampled MS,
    the decimated PAN on the truth grid, and the untouched truth.
    """
    if pan_full.bands != 1:
        raise ValueError(f"pan must be single-band, got {pan_full.bands}")
    if (pan_full.height, pan_full.width) != (ms_truth.height * ratio, ms_truth.width * ratio):
        raise ValueError(
            f"pan {pan_full.height}x{pan_full.width} must be exactly ratio x MS "
            f"({ms_truth.height}x{ms_truth.width} at ratio {ratio})"
        )
    ms_low = decimate(ms_truth, ratio)
    ms_up = bicubic_resize(ms_low, ms_truth.height, ms_truth.width)
    pan_sim = decimate(pan_full, ratio)
    return ms_up, pan_sim, ms_truth


def patch_grid(length: int, patch: int, stride: int) -> list[int]:
    """Window start offsets along one axis; windows that would overrun are dropped."""
    if patch > length:
        raise ValueError(f"patch {patch} larger than image side {length}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return list(range(0, length - patch + 1, stride))


def extract_patches(
    ms_up: RasterStack,
    pan: RasterStack,
    truth: RasterStack,
    patch: int = 41,
    stride: int = 41,
) -> list[PatchPair]:
    """Sliding-window crops; the input of each pair is the channel-concat of
    the MS-upsampled crop and the PAN crop, the target is the truth crop."""
    if (ms_up.height, ms_up.width) != (pan.height, pan.width) or (
        ms_up.height,
        ms_up.width,
    ) != (truth.height, truth.width):
        raise ValueError("ms_up, pan and truth must share height/width")
    if pan.bands != 1:
        raise ValueError("pan must be single-band")
    if truth.bands != ms_up.bands:
        raise ValueError("truth and ms_up band counts differ")
    ys = patch_grid(ms_up.height, patch, stride)
    xs = patch_grid(ms_up.width, patch, stride)
    pairs = []
    for y in ys:
        for x in xs:
            inp = np.concatenate(
                [ms_up.data[y : y + patch, x : x + patch],
                 pan.data[y : y + patch, x : x + patch]],
                axis=2,
            )
            tgt = truth.data[y : y + patch, x : x + patch]
            pairs.append(
                PatchPair(
                    input=RasterStack(inp, bit_depth=ms_up.bit_depth, sensor_tag=ms_up.sensor_tag),
                    target=RasterStack(tgt, bit_depth=truth.bit_depth, sensor_tag=truth.sensor_tag),
                )
            )
    return pairs
