"""Convolution, activation and merge primitives with analytic backward passes.

Tensors are plain numpy arrays of shape (height, width, channels),
channel-last, float32 in normal operation. Every operation preserves the
input dtype, so running the same graph in float64 gives the "shadow"
precision needed for finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Tensor = np.ndarray


def as_tensor(values, dtype=np.float32) -> Tensor:
    a = np.asarray(values, dtype=dtype)
    if a.ndim != 3:
        raise ValueError(f"tensor must be (height, width, channels), got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ConvKernel:
    """Weights (kh, kw, c_in, c_out) and bias (c_out,) of one conv layer.

    Odd kernel sides are required so "same" padding is symmetric.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 4:
            raise ValueError(f"weights must be (kh, kw, c_in, c_out), got shape {w.shape}")
        if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise ValueError(f"kernel sides must be odd, got {w.shape[0]}x{w.shape[1]}")
        if b.shape != (w.shape[3],):
            raise ValueError(f"bias shape {b.shape} does not match c_out {w.shape[3]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def kh(self) -> int:
        return self.weights.shape[0]

    @property
    def kw(self) -> int:
        return self.weights.shape[1]

    @property
    def c_in(self) -> int:
        return self.weights.shape[2]

    @property
    def c_out(self) -> int:
        return self.weights.shape[3]

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def astype(self, dtype) -> "ConvKernel":
        return ConvKernel(self.weights.astype(dtype), self.bias.astype(dtype))

    def zeros_like(self) -> "ConvKernel":
        return ConvKernel(np.zeros_like(self.weights), np.zeros_like(self.bias))


def _windows(x: Tensor, kh: int, kw: int) -> np.ndarray:
    """Zero-padded sliding windows, shape (H, W, c_in, kh, kw)."""
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    return np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))


def conv2d_same(x: Tensor, k: ConvKernel, stable: bool = False) -> Tensor:
    """"Same" zero-padded cross-correlation plus bias.

    out[y, x, o] = b[o] + sum_{u,v,i} w[u, v, i, o] * x[y+u-kh//2, x+v-kw//2, i]
    with out-of-image reads taken as zero. Output is (H, W, c_out).

    ``stable`` selects a contraction whose per-pixel summation order does
    not depend on the image extent, so a pixel computed inside a cropped
    tile is bit-identical to the same pixel in a whole-image pass (the
    BLAS-backed default may reorder sums for some shapes). Slower; meant
    for seamless tiled inference, not training.
    """
    if x.ndim != 3 or x.shape[2] != k.c_in:
        raise ValueError(
            f"input channels {x.shape[2] if x.ndim == 3 else '?'} != kernel c_in {k.c_in}"
        )
    dtype = np.result_type(x.dtype, k.weights.dtype)
    win = _windows(x.astype(dtype, copy=False), k.kh, k.kw)
    w = k.weights.astype(dtype, copy=False)
    # (H, W, c_in, kh, kw) x (kh, kw, c_in, c_out) -> (H, W, c_out)
    if stable:
        out = np.einsum("hwcuv,uvco->hwo", win, w, optimize=False)
    else:
        out = np.tensordot(win, w, axes=([3, 4, 2], [0, 1, 2]))
    out += k.bias.astype(dtype, copy=False)
    return out


def conv2d_same_backward(x: Tensor, k: ConvKernel, grad_out: Tensor):
    """Gradients of conv2d_same wrt input, weights and bias.

    grad_out must have the forward output's shape (H, W, c_out). Returns
    (grad_x, grad_w, grad_b). grad_x is the "same" correlation of grad_out
    with the spatially flipped kernel, channels transposed.
    """
    if x.ndim != 3 or x.shape[2] != k.c_in:
        raise ValueError("input shape inconsistent with kernel")
    if grad_out.shape != (x.shape[0], x.shape[1], k.c_out):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match forward output")
    dtype = np.result_type(x.dtype, k.weights.dtype, grad_out.dtype)
    go = grad_out.astype(dtype, copy=False)

    grad_b = go.sum(axis=(0, 1))

    win = _windows(x.astype(dtype, copy=False), k.kh, k.kw)
    # sum over pixels: (H, W, c_in, kh, kw) x (H, W, c_out) -> (c_in, kh, kw, c_out)
    grad_w = np.tensordot(win, go, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)

    w_flip = k.weights[::-1, ::-1].transpose(0, 1, 3, 2)  # (kh, kw, c_out, c_in)
    gwin = _windows(go, k.kh, k.kw)
    grad_x = np.tensordot(gwin, w_flip.astype(dtype, copy=False), axes=([3, 4, 2], [0, 1, 2]))
    return grad_x, grad_w, grad_b


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    """grad_out masked by x > 0; the subgradient at exactly 0 is 0."""
    if x.shape != grad_out.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0)


def concat_channels(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    hw = parts[0].shape[:2]
    for p in parts[1:]:
        if p.shape[:2] != hw:
            raise ValueError(f"spatial mismatch {p.shape[:2]} vs {hw}")
    return np.concatenate(parts, axis=2)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a + b
