import numpy as np
import pytest

from panfuse.raster import RasterStack


def synthetic_world(size: int, bands: int, seed: int) -> np.ndarray:
    """Procedural scene: smooth gradients + two checkerboard scales +
    Gaussian blobs, per-band mixing weights. Values in [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    check = (np.floor(yy * size / 8) + np.floor(xx * size / 8)) % 2
    fine = (np.floor(yy * size / 3) + np.floor(xx * size / 3)) % 2
    blobs = np.zeros((size, size))
    for _ in range(12):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        s = rng.uniform(0.02, 0.08)
        blobs += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    blobs /= max(blobs.max(), 1e-9)
    layers = []
    for _ in range(bands):
        a = rng.uniform(0.2, 0.8)
        grad = a * yy + (1 - a) * xx
        w_check = rng.uniform(0.2, 0.5)
        w_fine = rng.uniform(0.15, 0.4)
        w_blob = rng.uniform(0.3, 0.7)
        img = 0.35 * grad + 0.35 * w_check * check + 0.25 * w_fine * fine + 0.4 * w_blob * blobs
        img /= max(img.max(), 1e-9)
        layers.append(0.05 + 0.9 * img)
    return np.stack(layers, axis=2)


def world_scene(size: int = 1024, bands: int = 4, ratio: int = 4, seed: int = 42):
    """(truth, pan_full): truth is the decimated world, pan_full the
    band-mean of the world at the full grid, so PAN genuinely carries
    high-frequency detail that the decimated MS has lost."""
    from panfuse.raster import decimate

    world = synthetic_world(size, bands, seed)
    truth = decimate(RasterStack(world.astype(np.float32)), ratio)
    pan_full = RasterStack(world.mean(axis=2, keepdims=True).astype(np.float32))
    return truth, pan_full


def random_stack(rng, h, w, c, lo=0.0, hi=1.0) -> RasterStack:
    return RasterStack(rng.uniform(lo, hi, (h, w, c)).astype(np.float32))


@pytest.fixture
def nprng():
    return np.random.default_rng(20240915)
