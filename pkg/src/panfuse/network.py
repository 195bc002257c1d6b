"""Two-branch fusion network: declarative specs, forward pass, backprop.

A network is two ordered branches of layers (a short plain-conv branch and
a deeper branch with multi-scale blocks); both consume the stacked
(MS + PAN) input and their outputs are summed. A multi-scale block runs
3x3, 5x5 and 7x7 convolutions in parallel, ReLUs each, concatenates along
channels and optionally adds the block input back (skip connection).

Parameters live in a flat tuple of ConvKernel in deterministic order
(shallow branch first, then deep; each block contributes its 3x3, 5x5,
7x7 kernels in that order), which is also the checkpoint serialization
order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ConvKernel, Tensor
from .rng import SplitMix64

SCALES = (3, 5, 7)

ParamSet = tuple[ConvKernel, ...]


@dataclass(frozen=True)
class LayerSpec:
    """One layer: a plain convolution or a multi-scale block.

    conv: kh, kw, c_out, activation ("relu" or "none").
    multi_scale_block: n_per_scale kernels per scale (output 3*n channels),
    skip adds the input back and requires c_in == 3*n_per_scale.
    """

    kind: str
    kh: int = 0
    kw: int = 0
    c_out: int = 0
    activation: str = "none"
    n_per_scale: int = 0
    skip: bool = False

    def __post_init__(self):
        if self.kind == "conv":
            if self.kh < 1 or self.kh % 2 == 0 or self.kw < 1 or self.kw % 2 == 0:
                raise ValueError(f"conv kernel sides must be odd, got {self.kh}x{self.kw}")
            if self.c_out < 1:
                raise ValueError("conv c_out must be >= 1")
            if self.activation not in ("relu", "none"):
                raise ValueError(f"unknown activation {self.activation!r}")
        elif self.kind == "multi_scale_block":
            if self.n_per_scale < 1:
                raise ValueError("n_per_scale must be >= 1")
        else:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def out_channels(self, c_in: int) -> int:
        if self.kind == "conv":
            return self.c_out
        return 3 * self.n_per_scale


def conv(kh: int, kw: int, c_out: int, activation: str = "relu") -> LayerSpec:
    return LayerSpec(kind="conv", kh=kh, kw=kw, c_out=c_out, activation=activation)


def multi_scale_block(n_per_scale: int, skip: bool = True) -> LayerSpec:
    return LayerSpec(kind="multi_scale_block", n_per_scale=n_per_scale, skip=skip)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer graph of both branches for an S-band output.

    Each non-empty branch takes S+1 input channels and must end with a
    plain conv producing S channels and no activation. A branch may be
    empty (single-branch networks), but not both.
    """

    bands: int
    shallow: tuple[LayerSpec, ...]
    deep: tuple[LayerSpec, ...]

    def __post_init__(self):
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        object.__setattr__(self, "shallow", tuple(self.shallow))
        object.__setattr__(self, "deep", tuple(self.deep))
        if not self.shallow and not self.deep:
            raise ValueError("network needs at least one branch")
        for name, branch in (("shallow", self.shallow), ("deep", self.deep)):
            if not branch:
                continue
            c = self.bands + 1
            for layer in branch:
                if layer.kind == "multi_scale_block" and layer.skip:
                    if c != 3 * layer.n_per_scale:
                        raise ValueError(
                            f"{name}: skip block needs c_in == 3*n "
                            f"({3 * layer.n_per_scale}), got {c}"
                        )
                c = layer.out_channels(c)
            last = branch[-1]
            if last.kind != "conv" or last.activation != "none" or last.c_out != self.bands:
                raise ValueError(
                    f"{name}: branch must end with a linear conv producing {self.bands} channels"
                )

    def input_channels(self) -> int:
        return self.bands + 1


def branch_channel_chain(spec: NetworkSpec, branch: tuple[LayerSpec, ...]) -> list[int]:
    chain = [spec.input_channels()]
    for layer in branch:
        chain.append(layer.out_channels(chain[-1]))
    return chain


def _layer_kernel_shapes(layer: LayerSpec, c_in: int) -> list[tuple[int, int, int, int]]:
    if layer.kind == "conv":
        return [(layer.kh, layer.kw, c_in, layer.c_out)]
    return [(s, s, c_in, layer.n_per_scale) for s in SCALES]


def kernel_shapes(spec: NetworkSpec) -> list[tuple[int, int, int, int]]:
    """Shapes of every kernel in flat (serialization) order."""
    shapes = []
    for branch in (spec.shallow, spec.deep):
        c = spec.input_channels()
        for layer in branch:
            shapes.extend(_layer_kernel_shapes(layer, c))
            c = layer.out_channels(c)
    return shapes


def param_count(spec: NetworkSpec) -> int:
    return sum(kh * kw * ci * co + co for kh, kw, ci, co in kernel_shapes(spec))


def build_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> ParamSet:
    """He-style init: weights ~ N(0, 2/(kh*kw*c_in)), biases zero.

    Draws come from one SplitMix64 stream in flat kernel order, so equal
    seeds give bit-identical parameter sets.
    """
    rng = SplitMix64(seed)
    kernels = []
    for kh, kw, ci, co in kernel_shapes(spec):
        std = np.sqrt(2.0 / (kh * kw * ci))
        w = (rng.normals(kh * kw * ci * co) * std).reshape(kh, kw, ci, co)
        kernels.append(ConvKernel(w.astype(dtype), np.zeros(co, dtype=dtype)))
    params = tuple(kernels)
    total = sum(k.size for k in params)
    expected = param_count(spec)
    if total != expected:
        raise AssertionError(f"parameter count {total} != closed-form {expected}")
    return params


def default_spec(bands: int) -> NetworkSpec:
    """The stock two-branch architecture for S output bands."""
    if bands < 1:
        raise ValueError("bands must be >= 1")
    return NetworkSpec(
        bands=bands,
        shallow=(conv(9, 9, 64), conv(5, 5, 32), conv(5, 5, bands, "none")),
        deep=(
            conv(7, 7, 60),
            multi_scale_block(20, skip=True),
            conv(3, 3, 30),
            multi_scale_block(10, skip=True),
            conv(5, 5, bands, "none"),
        ),
    )


def tiny_spec(bands: int) -> NetworkSpec:
    """Scaled-down variant for desk-scale experiments and gradient checks."""
    return NetworkSpec(
        bands=bands,
        shallow=(conv(9, 9, 8), conv(5, 5, 4), conv(5, 5, bands, "none")),
        deep=(
            conv(7, 7, 12),
            multi_scale_block(4, skip=True),
            conv(3, 3, 6),
            multi_scale_block(2, skip=True),
            conv(5, 5, bands, "none"),
        ),
    )


def preset_spec(name: str, bands: int) -> NetworkSpec:
    """Named architectures usable from configs and the CLI."""
    if name == "msdcnn-default":
        return default_spec(bands)
    if name == "msdcnn-tiny":
        return tiny_spec(bands)
    if name == "pnn-shallow":
        return NetworkSpec(
            bands=bands,
            shallow=(conv(9, 9, 64), conv(5, 5, 32), conv(5, 5, bands, "none")),
            deep=(),
        )
    if name == "block2":
        # two multi-scale layers per block stage
        return NetworkSpec(
            bands=bands,
            shallow=(conv(9, 9, 64), conv(5, 5, 32), conv(5, 5, bands, "none")),
            deep=(
                conv(7, 7, 60),
                multi_scale_block(20, skip=True),
                multi_scale_block(20, skip=True),
                conv(3, 3, 30),
                multi_scale_block(10, skip=True),
                multi_scale_block(10, skip=True),
                conv(5, 5, bands, "none"),
            ),
        )
    if name == "block3":
        # extra skip stage, no channel-reduction layer in between
        return NetworkSpec(
            bands=bands,
            shallow=(conv(9, 9, 64), conv(5, 5, 32), conv(5, 5, bands, "none")),
            deep=(
                conv(7, 7, 60),
                multi_scale_block(20, skip=True),
                multi_scale_block(20, skip=True),
                conv(5, 5, bands, "none"),
            ),
        )
    raise ValueError(f"unknown network preset {name!r}")


PRESET_NAMES = ("msdcnn-default", "msdcnn-tiny", "pnn-shallow", "block2", "block3")


def multi_scale_block_forward(
    x: Tensor, k3: ConvKernel, k5: ConvKernel, k7: ConvKernel, skip: bool
) -> Tensor:
    branches = [nn.relu(nn.conv2d_same(x, k)) for k in (k3, k5, k7)]
    out = nn.concat_channels(branches)
    return nn.add(x, out) if skip else out


def _forward_branch(x: Tensor, branch, kernels, record, stable: bool = False):
    """Run one branch; if record is not None, stash per-layer caches."""
    ki = 0
    for layer in branch:
        if layer.kind == "conv":
            k = kernels[ki]
            ki += 1
            pre = nn.conv2d_same(x, k, stable=stable)
            out = nn.relu(pre) if layer.activation == "relu" else pre
            if record is not None:
                record.append((x, pre))
            x = out
        else:
            ks = kernels[ki : ki + 3]
            ki += 3
            pres = [nn.conv2d_same(x, k, stable=stable) for k in ks]
            acts = [nn.relu(p) for p in pres]
            out = nn.concat_channels(acts)
            if layer.skip:
                out = nn.add(x, out)
            if record is not None:
                record.append((x, pres))
            x = out
    return x


def split_kernels(spec: NetworkSpec, params: ParamSet) -> tuple[ParamSet, ParamSet]:
    n_shallow = sum(1 if l.kind == "conv" else 3 for l in spec.shallow)
    return params[:n_shallow], params[n_shallow:]


def forward(G: Tensor, spec: NetworkSpec, params: ParamSet, stable: bool = False) -> Tensor:
    """Joint output: sum of both branch outputs, shape (H, W, bands).

    ``stable`` requests the crop-invariant convolution order (see
    :func:`panfuse.nn.conv2d_same`); required for seamless tiling.
    """
    if G.ndim != 3 or G.shape[2] != spec.input_channels():
        raise ValueError(
            f"input needs {spec.input_channels()} channels, got "
            f"{G.shape[2] if G.ndim == 3 else '?'}"
        )
    shallow_k, deep_k = split_kernels(spec, params)
    parts = []
    if spec.shallow:
        parts.append(_forward_branch(G, spec.shallow, shallow_k, None, stable=stable))
    if spec.deep:
        parts.append(_forward_branch(G, spec.deep, deep_k, None, stable=stable))
    return parts[0] if len(parts) == 1 else nn.add(parts[0], parts[1])


def _backward_branch(branch, kernels, caches, grad_out):
    """Reverse traversal of one branch. Returns per-kernel (gw, gb) grads."""
    grads = [None] * len(kernels)
    ki = len(kernels)
    g = grad_out
    for li in range(len(branch) - 1, -1, -1):
        layer = branch[li]
        if layer.kind == "conv":
            ki -= 1
            x, pre = caches[li]
            if layer.activation == "relu":
                g = nn.relu_backward(pre, g)
            g, gw, gb = nn.conv2d_same_backward(x, kernels[ki], g)
            grads[ki] = (gw, gb)
        else:
            ki -= 3
            x, pres = caches[li]
            n = layer.n_per_scale
            gx = g if layer.skip else np.zeros_like(x)
            for s in range(3):
                g_slice = g[:, :, s * n : (s + 1) * n]
                g_pre = nn.relu_backward(pres[s], g_slice)
                gxi, gw, gb = nn.conv2d_same_backward(x, kernels[ki + s], g_pre)
                gx = gx + gxi
                grads[ki + s] = (gw, gb)
            g = gx
    return grads, g


def loss_and_grad(out: Tensor, target: Tensor, normalized: bool = False):
    """Summed squared error over all pixels and bands (optionally divided
    by the element count) and its gradient wrt the network output."""
    if out.shape != target.shape:
        raise ValueError(f"output shape {out.shape} != target shape {target.shape}")
    r = out.astype(np.float64) - target.astype(np.float64)
    loss = float(np.sum(r * r))
    grad = 2.0 * r
    if normalized:
        loss /= r.size
        grad /= r.size
    return loss, grad.astype(out.dtype)


def backward(
    G: Tensor, target: Tensor, spec: NetworkSpec, params: ParamSet, normalized: bool = False
):
    """Loss and exact parameter gradients for one sample.

    Returns (loss, grads) with grads as a ParamSet-shaped tuple of
    ConvKernel containers holding dLoss/dW and dLoss/db.
    """
    if target.shape != (G.shape[0], G.shape[1], spec.bands):
        raise ValueError(f"target shape {target.shape} inconsistent with input/spec")
    shallow_k, deep_k = split_kernels(spec, params)
    caches_s, caches_d = [], []
    parts = []
    if spec.shallow:
        parts.append(_forward_branch(G, spec.shallow, shallow_k, caches_s))
    if spec.deep:
        parts.append(_forward_branch(G, spec.deep, deep_k, caches_d))
    out = parts[0] if len(parts) == 1 else nn.add(parts[0], parts[1])

    loss, g = loss_and_grad(out, target, normalized)
    # the branch sum routes the output gradient to both branches unchanged
    grads_s = grads_d = []
    if spec.shallow:
        grads_s, _ = _backward_branch(spec.shallow, shallow_k, caches_s, g)
    if spec.deep:
        grads_d, _ = _backward_branch(spec.deep, deep_k, caches_d, g)
    grads = tuple(
        ConvKernel(gw, gb) for gw, gb in list(grads_s) + list(grads_d)
    )
    return loss, grads


def spec_to_dict(spec: NetworkSpec) -> dict:
    def layer_dict(l: LayerSpec) -> dict:
        if l.kind == "conv":
            return {"kind": "conv", "kh": l.kh, "kw": l.kw,
                    "c_out": l.c_out, "activation": l.activation}
        return {"kind": "multi_scale_block", "n_per_scale": l.n_per_scale, "skip": l.skip}

    return {
        "bands": spec.bands,
        "shallow": [layer_dict(l) for l in spec.shallow],
        "deep": [layer_dict(l) for l in spec.deep],
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    def layer_from(ld: dict) -> LayerSpec:
        kind = ld.get("kind")
        if kind == "conv":
            allowed = {"kind", "kh", "kw", "c_out", "activation"}
        elif kind == "multi_scale_block":
            allowed = {"kind", "n_per_scale", "skip"}
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        unknown = set(ld) - allowed
        if unknown:
            raise ValueError(f"unknown layer keys: {sorted(unknown)}")
        if kind == "conv":
            return LayerSpec(kind="conv", kh=ld["kh"], kw=ld["kw"], c_out=ld["c_out"],
                             activation=ld.get("activation", "none"))
        return LayerSpec(kind="multi_scale_block", n_per_scale=ld["n_per_scale"],
                         skip=bool(ld.get("skip", False)))

    unknown = set(d) - {"bands", "shallow", "deep"}
    if unknown:
        raise ValueError(f"unknown network keys: {sorted(unknown)}")
    return NetworkSpec(
        bands=d["bands"],
        shallow=tuple(layer_from(l) for l in d.get("shallow", [])),
        deep=tuple(layer_from(l) for l in d.get("deep", [])),
    )


def spec_hash(spec: NetworkSpec) -> str:
    canonical = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("ascii")).hexdigest()


def flatten_params(params: ParamSet) -> np.ndarray:
    chunks = []
    for k in params:
        chunks.append(np.asarray(k.weights, dtype="<f4").ravel())
        chunks.append(np.asarray(k.bias, dtype="<f4").ravel())
    return np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f4")


def unflatten_params(spec: NetworkSpec, flat: np.ndarray, dtype=np.float32) -> ParamSet:
    kernels = []
    pos = 0
    for kh, kw, ci, co in kernel_shapes(spec):
        nw = kh * kw * ci * co
        w = flat[pos : pos + nw].reshape(kh, kw, ci, co).astype(dtype)
        pos += nw
        b = flat[pos : pos + co].astype(dtype)
        pos += co
        kernels.append(ConvKernel(w, b))
    if pos != flat.size:
        raise ValueError(f"parameter payload holds {flat.size} floats, spec needs {pos}")
    return tuple(kernels)


CHECKPOINT_MAGIC = "MSDP1"


def save_checkpoint(path: str, spec: NetworkSpec, params: ParamSet) -> None:
    """Write ``MSDP1 <spec-hash> <param-count>`` + float32 payload; the
    network spec goes to ``<path>.json`` alongside."""
    flat = flatten_params(params)
    header = f"{CHECKPOINT_MAGIC} {spec_hash(spec)} {flat.size}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(flat.tobytes())
    with open(str(path) + ".json", "w") as f:
        json.dump(spec_to_dict(spec), f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path: str) -> tuple[NetworkSpec, ParamSet]:
    with open(str(path) + ".json") as f:
        spec = spec_from_dict(json.load(f))
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip().split()
        if len(header) != 3 or header[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
        digest, count = header[1], int(header[2])
        if digest != spec_hash(spec):
            raise ValueError(f"{path}: checkpoint spec hash mismatch")
        flat = np.frombuffer(f.read(), dtype="<f4")
    if flat.size != count:
        raise ValueError(f"{path}: payload holds {flat.size} floats, header promises {count}")
    return spec, unflatten_params(spec, flat)


def receptive_radius(spec: NetworkSpec) -> int:
    """Upper bound on the input radius influencing one output pixel."""
    def branch_radius(branch) -> int:
        r = 0
        for layer in branch:
            if layer.kind == "conv":
                r += max(layer.kh, layer.kw) // 2
            else:
                r += max(SCALES) // 2
        return r

    return max(branch_radius(spec.shallow), branch_radius(spec.deep))
