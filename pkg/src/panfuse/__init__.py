"""panfuse: pan-sharpening with a hand-rolled two-branch multi-scale CNN.

Library layout:

  raster     multi-band stacks, PSR1 I/O, resampling, reduced-scale simulation
  nn         conv/ReLU/concat/add primitives with analytic backward passes
  network    layer specs, parameter init, joint forward/backprop, checkpoints
  trainer    SGD with classical momentum, clipping, step decay
  metrics    full-reference and no-reference fusion quality scores
  baselines  bicubic and SFIM references
  cli        batch experiment front end (`panfuse` command)
"""

from .raster import PatchPair, RasterStack

__all__ = ["RasterStack", "PatchPair"]
__version__ = "0.1.0"
