"""
Disparity maps, disparity/depth conversion and disparity-guided warping.

Disparities are non-negative magnitudes. For the left view the match of
pixel (x, y) lies at (x - d, y) in the right view; for the right view it
lies at (x + d, y) in the left view.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core.errors import DimensionError
from ..tensor import ops
from ..tensor.tensor import Tensor, make_result
from .camera import CameraRig, View

DISPARITY_EPS = 1e-4


@dataclass
class DisparityMap:
    """Per-pixel horizontal correspondence for one view."""

    values: Tensor
    view: View
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != 1:
            raise DimensionError("disparity must be a (1, H, W) tensor",
                                 details={"shape": self.values.shape})
        if self.valid is None:
            self.valid = np.isfinite(self.values.data[0]) & (self.values.data[0] >= 0)

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def numpy(self) -> np.ndarray:
        return self.values.data[0]


def disparity_to_depth(d: DisparityMap, rig: CameraRig) -> Tuple[Tensor, np.ndarray]:
    """Z = fx * b / d on valid pixels; depth 0 and an invalid flag elsewhere.

    Returns:
        (depth tensor (1, H, W), valid mask (H, W))
    """
    values = d.values.data
    valid = d.valid & (values[0] >= DISPARITY_EPS)
    fb = rig.focal_baseline
    safe = np.where(valid[None], values, 1.0)
    out = np.where(valid[None], fb / safe, 0.0).astype(d.values.dtype)

    def backward(g: np.ndarray) -> None:
        d.values.accumulate(np.where(valid[None], -g * fb / (safe * safe), 0.0))

    return make_result(out, (d.values,), backward), valid


def depth_to_disparity(depth: Tensor, valid: np.ndarray, rig: CameraRig, view: View) -> DisparityMap:
    """Inverse of ``disparity_to_depth`` on valid pixels."""
    fb = rig.focal_baseline
    valid = valid & (depth.data[0] > 0)
    safe = np.where(valid[None], depth.data, 1.0)
    out = np.where(valid[None], fb / safe, 0.0).astype(depth.dtype)

    def backward(g: np.ndarray) -> None:
        depth.accumulate(np.where(valid[None], -g * fb / (safe * safe), 0.0))

    return DisparityMap(make_result(out, (depth,), backward), view, valid)


def pool_disparity(d: DisparityMap, factor: int) -> DisparityMap:
    """Average-pool a full-resolution map and rescale it to pooled pixel units."""
    if factor == 1:
        return d
    pooled = ops.mul_const(ops.avg_pool(d.values, factor), 1.0 / factor)
    h, w = d.valid.shape
    valid = d.valid.reshape(h // factor, factor, w // factor, factor).all(axis=(1, 3))
    return DisparityMap(pooled, d.view, valid)


def warp(src: Tensor, d: DisparityMap) -> Tensor:
    """Resample the opposite view's tensor into the view that owns ``d``."""
    if src.shape[1:] != d.values.shape[1:]:
        raise DimensionError("warp: source and disparity resolutions differ",
                             details={"source": src.shape, "disparity": d.values.shape})
    _, h, w = src.shape
    grid_y, grid_x = np.meshgrid(np.arange(h, dtype=np.float64),
                                 np.arange(w, dtype=np.float64), indexing="ij")
    shift = ops.reshape(d.values, (h, w))
    base = Tensor(grid_x, dtype=src.dtype)
    xs = ops.sub(base, shift) if d.view is View.LEFT else ops.add(base, shift)
    return ops.bilinear_sample(src, xs, grid_y)
