"""
Pinhole projection and pixel unprojection.
"""

from typing import Tuple

import numpy as np

from ..core.errors import DimensionError
from ..tensor.tensor import Tensor, make_result
from .camera import CameraModel

NEAR_PLANE = 1e-6


def pixel_rays(cam: CameraModel, pixels: np.ndarray) -> np.ndarray:
    """Camera-frame rays with unit z for (N, 2) pixel coordinates (x, y)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    rays = np.ones((pixels.shape[0], 3), dtype=np.float64)
    rays[:, 0] = (pixels[:, 0] - cam.cx) / cam.fx
    rays[:, 1] = (pixels[:, 1] - cam.cy) / cam.fy
    return rays


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(H*W, 2) pixel coordinates in raster order."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1).astype(np.float64)


def to_world(cam: CameraModel, points_cam: np.ndarray) -> np.ndarray:
    return (points_cam - cam.translation) @ cam.rotation


def to_camera(cam: CameraModel, points_world: np.ndarray) -> np.ndarray:
    return points_world @ cam.rotation.T + cam.translation


def unproject(depth: np.ndarray, cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Lift a (1, H, W) or (H, W) depth map to world points.

    Returns:
        (points (H*W, 3), valid (H*W,)); zero-depth pixels map to the camera
        center and are flagged invalid
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim == 3:
        depth = depth[0]
    if depth.shape != (cam.height, cam.width):
        raise DimensionError("depth map does not match camera size",
                             details={"depth": depth.shape, "camera": cam.size})
    z = depth.reshape(-1)
    rays = pixel_rays(cam, pixel_grid(cam.height, cam.width))
    points = to_world(cam, rays * z[:, None])
    return points, z > 0


def project(points: np.ndarray, cam: CameraModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points.

    Returns:
        (pixels (N, 2), view-space depth (N,), behind (N,) flags for z <= 0)
    """
    pc = to_camera(cam, np.asarray(points, dtype=np.float64).reshape(-1, 3))
    z = pc[:, 2]
    behind = z <= 0
    safe = np.where(behind, 1.0, z)
    pixels = np.stack([cam.fx * pc[:, 0] / safe + cam.cx,
                       cam.fy * pc[:, 1] / safe + cam.cy], axis=1)
    return pixels, z, behind


def unproject_pixels(depth: Tensor, pixels: np.ndarray, cam: CameraModel) -> Tensor:
    """Differentiable unprojection of per-pixel depths (N,) at ``pixels`` (N, 2).

    World point = depth * R^T ray - R^T t, so the gradient is linear in depth.
    """
    if depth.ndim != 1 or depth.shape[0] != len(pixels):
        raise DimensionError("depth vector does not match pixel list",
                             details={"depth": depth.shape, "pixels": np.shape(pixels)})
    directions = pixel_rays(cam, pixels) @ cam.rotation
    origin = -cam.rotation.T @ cam.translation
    out = depth.data.astype(np.float64)[:, None] * directions + origin

    def backward(g: np.ndarray) -> None:
        depth.accumulate(np.sum(g * directions, axis=1))

    return make_result(out.astype(depth.dtype), (depth,), backward)
