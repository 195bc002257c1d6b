"""Mini-batch SGD with classical momentum, gradient clipping and step decay.

The training loop is deterministic for a fixed seed: epoch shuffles and
sample picks come from per-epoch SplitMix64 sub-streams, so a run resumed
from an epoch-boundary checkpoint continues the exact trajectory of an
uninterrupted run.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import network
from .nn import ConvKernel
from .network import NetworkSpec, ParamSet
from .raster import PatchPair
from .rng import stream_for


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, iteration: int = -1):
        super().__init__(f"{message} (iteration {iteration})" if iteration >= 0 else message)
        self.iteration = iteration


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 300
    momentum: float = 0.9
    learning_rate: float = 0.1
    decay_factor: float = 0.5
    decay_interval: int = 60
    clip_threshold: float = 0.1
    grad_mode: str = "batch_mean"  # or "single_sample"
    seed: int = 0
    loss_normalized: bool = False
    exact_eq17: bool = False
    checkpoint_interval: int = 10

    def __post_init__(self):
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        if not (0.0 < self.decay_factor <= 1.0):
            raise ValueError("decay factor must be in (0, 1]")
        if self.clip_threshold <= 0.0:
            raise ValueError("clip threshold must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.decay_interval < 1:
            raise ValueError("batch_size/epochs/decay_interval out of range")
        if self.grad_mode not in ("batch_mean", "single_sample"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")


@dataclass
class TrainState:
    params: ParamSet
    velocity: ParamSet
    epoch: int = 0
    iteration: int = 0
    lr: float = 0.0
    loss_history: list = field(default_factory=list)


def init_state(spec: NetworkSpec, config: TrainConfig, dtype=np.float32) -> TrainState:
    params = network.build_params(spec, config.seed, dtype=dtype)
    velocity = tuple(k.zeros_like() for k in params)
    return TrainState(params=params, velocity=velocity, lr=config.learning_rate)


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Step decay: initial rate times decay_factor^(epoch // interval)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.learning_rate * config.decay_factor ** (epoch // config.decay_interval)


def sample_loss(output, target, normalized: bool = False) -> float:
    loss, _ = network.loss_and_grad(output, target, normalized)
    return loss


def batch_loss(outputs: list, targets: list, normalized: bool = False) -> float:
    """Mean of the per-sample summed-squared-error losses."""
    if len(outputs) != len(targets):
        raise ValueError(f"batch length mismatch {len(outputs)} vs {len(targets)}")
    if not outputs:
        raise ValueError("empty batch")
    return sum(sample_loss(o, t, normalized) for o, t in zip(outputs, targets)) / len(outputs)


def global_grad_norm(grads: ParamSet) -> float:
    """Joint L2 norm over every weight and bias gradient."""
    total = 0.0
    for g in grads:
        w = g.weights.astype(np.float64, copy=False)
        b = g.bias.astype(np.float64, copy=False)
        total += float(np.sum(w * w)) + float(np.sum(b * b))
    return math.sqrt(total)


def clip_gradients(grads: ParamSet, threshold: float, exact_eq17: bool = False) -> ParamSet:
    """Cap the joint gradient norm at ``threshold``.

    Default: rescale by threshold/norm only when the joint norm exceeds the
    threshold. With ``exact_eq17`` the weight and bias gradients are instead
    rescaled unconditionally (and separately) to exactly ``threshold``,
    which amplifies small gradients; kept for fidelity experiments.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    for g in grads:
        if not (np.all(np.isfinite(g.weights)) and np.all(np.isfinite(g.bias))):
            raise DivergenceError("non-finite gradient")
    if exact_eq17:
        wn = math.sqrt(sum(float(np.sum(g.weights.astype(np.float64) ** 2)) for g in grads))
        bn = math.sqrt(sum(float(np.sum(g.bias.astype(np.float64) ** 2)) for g in grads))
        ws = threshold / wn if wn > 0.0 else 1.0
        bs = threshold / bn if bn > 0.0 else 1.0
        return tuple(ConvKernel(g.weights * ws, g.bias * bs) for g in grads)
    norm = global_grad_norm(grads)
    if norm <= threshold:
        return grads
    scale = threshold / norm
    return tuple(ConvKernel(g.weights * scale, g.bias * scale) for g in grads)


def cm_update(state: TrainState, grads: ParamSet, config: TrainConfig) -> TrainState:
    """Classical momentum step: v <- mu*v - lr*g; theta <- theta + v."""
    mu = config.momentum
    lr = state.lr
    for p, v, g in zip(state.params, state.velocity, grads):
        for vv, pp, gg in ((v.weights, p.weights, g.weights), (v.bias, p.bias, g.bias)):
            vv *= mu
            vv -= lr * gg.astype(vv.dtype, copy=False)
            pp += vv
    state.iteration += 1
    return state


def _mean_grads(per_sample: list[ParamSet]) -> ParamSet:
    n = len(per_sample)
    out = []
    for i in range(len(per_sample[0])):
        w = per_sample[0][i].weights.copy()
        b = per_sample[0][i].bias.copy()
        for s in per_sample[1:]:
            w += s[i].weights
            b += s[i].bias
        out.append(ConvKernel(w / n, b / n))
    return tuple(out)


def planned_iterations(n_samples: int, config: TrainConfig) -> int:
    """Total update count: one pass per epoch, final short batch kept."""
    return config.epochs * math.ceil(n_samples / config.batch_size)


def save_train_state(directory: str, tag: str, spec: NetworkSpec, state: TrainState) -> str:
    """Checkpoint params (MSDP1) plus velocity and counters for resuming."""
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(directory, tag)
    network.save_checkpoint(base + ".msdp", spec, state.params)
    vel_flat = network.flatten_params(state.velocity)
    with open(base + ".vel", "wb") as f:
        f.write(f"{network.CHECKPOINT_MAGIC} {network.spec_hash(spec)} {vel_flat.size}\n".encode())
        f.write(vel_flat.tobytes())
    with open(base + ".state.json", "w") as f:
        json.dump({"epoch": state.epoch, "iteration": state.iteration, "lr": state.lr}, f)
        f.write("\n")
    return base + ".msdp"


def load_train_state(directory: str, tag: str) -> tuple[NetworkSpec, TrainState]:
    base = os.path.join(directory, tag)
    spec, params = network.load_checkpoint(base + ".msdp")
    with open(base + ".vel", "rb") as f:
        f.readline()
        vel = network.unflatten_params(spec, np.frombuffer(f.read(), dtype="<f4"))
    with open(base + ".state.json") as f:
        meta = json.load(f)
    return spec, TrainState(
        params=params,
        velocity=vel,
        epoch=meta["epoch"],
        iteration=meta["iteration"],
        lr=meta["lr"],
    )


def train(
    dataset: list[PatchPair],
    spec: NetworkSpec,
    config: TrainConfig,
    state: TrainState | None = None,
    log_path: str | None = None,
    checkpoint_dir: str | None = None,
    step_callback=None,
) -> TrainState:
    """Run (or resume) the full training schedule over ``dataset``.

    Per batch: forward every sample, average the per-sample losses, form
    gradients per ``config.grad_mode`` (mean of per-sample gradients, or
    the gradients of one uniformly picked batch member), clip, and apply
    the momentum update. The learning rate follows :func:`lr_at` at epoch
    boundaries. Checkpoints are written every ``checkpoint_interval``
    epochs when ``checkpoint_dir`` is given.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    inputs = [p.input.data for p in dataset]
    targets = [p.target.data for p in dataset]
    if state is None:
        state = init_state(spec, config)

    log = open(log_path, "a") if log_path else None
    if log and log.tell() == 0:
        log.write("iteration,epoch,lr,batch_loss,grad_norm_preclip,clipped\n")
    try:
        for epoch in range(state.epoch, config.epochs):
            state.lr = lr_at(epoch, config)
            rng = stream_for(config.seed, epoch)
            order = list(range(len(dataset)))
            rng.shuffle(order)
            for start in range(0, len(order), config.batch_size):
                idx = order[start : start + config.batch_size]
                if config.grad_mode == "batch_mean":
                    per_sample = []
                    losses = []
                    for i in idx:
                        loss_i, grads_i = network.backward(
                            inputs[i], targets[i], spec, state.params,
                            normalized=config.loss_normalized,
                        )
                        losses.append(loss_i)
                        per_sample.append(grads_i)
                    grads = _mean_grads(per_sample)
                    loss = sum(losses) / len(losses)
                else:
                    losses = []
                    for i in idx:
                        out = network.forward(inputs[i], spec, state.params)
                        losses.append(sample_loss(out, targets[i], config.loss_normalized))
                    loss = sum(losses) / len(losses)
                    picked = idx[rng.below(len(idx))]
                    _, grads = network.backward(
                        inputs[picked], targets[picked], spec, state.params,
                        normalized=config.loss_normalized,
                    )
                if not math.isfinite(loss):
                    raise DivergenceError("non-finite batch loss", iteration=state.iteration)
                pre_norm = global_grad_norm(grads)
                if not math.isfinite(pre_norm):
                    raise DivergenceError("non-finite gradient norm", iteration=state.iteration)
                clipped = (not config.exact_eq17) and pre_norm > config.clip_threshold
                grads = clip_gradients(grads, config.clip_threshold, config.exact_eq17)
                cm_update(state, grads, config)
                state.loss_history.append(loss)
                if log:
                    log.write(
                        f"{state.iteration},{epoch},{state.lr!r},{loss!r},"
                        f"{pre_norm!r},{int(clipped)}\n"
                    )
                if step_callback is not None:
                    step_callback(state, grads, pre_norm)
            state.epoch = epoch + 1
            if checkpoint_dir and config.checkpoint_interval > 0:
                if state.epoch % config.checkpoint_interval == 0 or state.epoch == config.epochs:
                    save_train_state(checkpoint_dir, f"epoch_{state.epoch:05d}", spec, state)
    finally:
        if log:
            log.close()
    return state
