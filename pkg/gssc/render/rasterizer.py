"""
CPU Gaussian splatting.

Gaussians are projected with the EWA approximation, sorted once globally by
(depth, index), binned into 16x16 tiles and alpha-composited front to back.
Every pixel walks its fragments in global sort order through the same
shading routine the brute-force oracle uses, so the tiled image and the
oracle image are bit-identical.

All kernels run in float64.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numba
import numpy as np
from numba import njit, prange

from ..core.errors import ValidationError
from ..geometry.camera import CameraModel
from ..gaussians.cloud import ATTRIBUTES, GaussianCloud
from ..tensor.tensor import Tensor, make_result

logger = logging.getLogger(__name__)

THREADS_ENV = "GSSC_THREADS"


@dataclass
class RenderSettings:
    tile: int = 16
    alpha_min: float = 1.0 / 255.0
    alpha_max: float = 0.99
    dilation: float = 0.3
    near: float = 0.01


@dataclass
class SplatFragment:
    """A projected Gaussian."""

    mean: np.ndarray
    covariance: np.ndarray
    depth: float
    opacity: float
    color: np.ndarray
    index: int


@dataclass
class RenderState:
    """Everything the backward pass reuses from the forward pass."""

    image: np.ndarray
    final_transmittance: np.ndarray
    means: np.ndarray
    conics: np.ndarray
    depths: np.ndarray
    visible: np.ndarray
    order: np.ndarray
    offsets: np.ndarray
    ids: np.ndarray
    tiles_x: int
    tiles_y: int


def apply_thread_limit(threads: Optional[int] = None) -> int:
    """Cap numba's worker threads from an explicit value or GSSC_THREADS."""
    if threads is None:
        value = os.environ.get(THREADS_ENV)
        if not value:
            return numba.get_num_threads()
        try:
            threads = int(value)
        except ValueError as e:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got '{value}'") from e
    threads = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(threads)
    return threads


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rotation(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    r = np.empty((3, 3))
    r[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[0, 1] = 2.0 * (x * y - w * z)
    r[0, 2] = 2.0 * (x * z + w * y)
    r[1, 0] = 2.0 * (x * y + w * z)
    r[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[1, 2] = 2.0 * (y * z - w * x)
    r[2, 0] = 2.0 * (x * z - w * y)
    r[2, 1] = 2.0 * (y * z + w * x)
    r[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r


@njit(cache=True)
def _jacobian(t, fx, fy):
    z = t[2]
    j = np.zeros((2, 3))
    j[0, 0] = fx / z
    j[0, 2] = -fx * t[0] / (z * z)
    j[1, 1] = fy / z
    j[1, 2] = -fy * t[1] / (z * z)
    return j


@njit(cache=True)
def _project_all(centers, scales, rotations, opacities, w2c_r, w2c_t, fx, fy, cx, cy,
                 width, height, near, dilation, alpha_min):
    n = centers.shape[0]
    means = np.zeros((n, 2))
    conics = np.zeros((n, 3))
    covs = np.zeros((n, 3))
    depths = np.zeros(n)
    rects = np.zeros((n, 4), dtype=np.int64)
    visible = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        t = w2c_r @ centers[i] + w2c_t
        if t[2] <= near:
            continue
        rot = _rotation(rotations[i])
        m = rot * scales[i]
        sigma = m @ m.T
        tr = _jacobian(t, fx, fy) @ w2c_r
        cov = tr @ sigma @ tr.T
        a = cov[0, 0] + dilation
        b = cov[0, 1]
        c = cov[1, 1] + dilation
        det = a * c - b * b
        if det <= 0.0:
            continue
        u = fx * t[0] / t[2] + cx
        v = fy * t[1] / t[2] + cy
        mid = 0.5 * (a + c)
        lam = mid + math.sqrt(max(0.0, mid * mid - det))
        r3 = 3.0 * math.sqrt(lam)
        if u + r3 < 0.0 or u - r3 > width - 1 or v + r3 < 0.0 or v - r3 > height - 1:
            continue
        o = opacities[i, 0]
        if o <= alpha_min:
            continue
        rb = math.sqrt(2.0 * math.log(o / alpha_min) * lam) + 1.0
        x0 = max(0, int(math.floor(u - rb)))
        x1 = min(width - 1, int(math.ceil(u + rb)))
        y0 = max(0, int(math.floor(v - rb)))
        y1 = min(height - 1, int(math.ceil(v + rb)))
        if x0 > x1 or y0 > y1:
            continue
        means[i, 0] = u
        means[i, 1] = v
        conics[i, 0] = c / det
        conics[i, 1] = -b / det
        conics[i, 2] = a / det
        covs[i, 0] = a
        covs[i, 1] = b
        covs[i, 2] = c
        depths[i] = t[2]
        rects[i, 0] = x0
        rects[i, 1] = y0
        rects[i, 2] = x1
        rects[i, 3] = y1
        visible[i] = True
    return means, conics, covs, depths, rects, visible


@njit(cache=True)
def _bin_fragments(order, rects, tile, tiles_x, tiles_y):
    n_tiles = tiles_x * tiles_y
    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    for k in range(order.shape[0]):
        i = order[k]
        for ty in range(rects[i, 1] // tile, rects[i, 3] // tile + 1):
            for tx in range(rects[i, 0] // tile, rects[i, 2] // tile + 1):
                counts[ty * tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    ids = np.empty(offsets[-1], dtype=np.int64)
    fill = offsets[:-1].copy()
    for k in range(order.shape[0]):
        i = order[k]
        for ty in range(rects[i, 1] // tile, rects[i, 3] // tile + 1):
            for tx in range(rects[i, 0] // tile, rects[i, 2] // tile + 1):
                t = ty * tiles_x + tx
                ids[fill[t]] = i
                fill[t] += 1
    return offsets, ids


@njit(cache=True)
def _alpha_at(i, px, py, means, conics, opacities, alpha_max):
    dx = px - means[i, 0]
    dy = py - means[i, 1]
    power = -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) - conics[i, 1] * dx * dy
    g = math.exp(power)
    raw = opacities[i, 0] * g
    return min(alpha_max, raw), raw, g, dx, dy


@njit(cache=True)
def _shade(px, py, ids, start, stop, means, conics, opacities, colors, background,
           alpha_min, alpha_max, pixel):
    transmittance = 1.0
    for k in range(start, stop):
        i = ids[k]
        alpha, _, _, _, _ = _alpha_at(i, px, py, means, conics, opacities, alpha_max)
        if alpha < alpha_min:
            continue
        weight = alpha * transmittance
        for ch in range(3):
            pixel[ch] += weight * colors[i, ch]
        transmittance = transmittance * (1.0 - alpha)
    for ch in range(3):
        pixel[ch] += transmittance * background[ch]
    return transmittance


@njit(parallel=True, cache=True)
def _render_tiles(offsets, ids, means, conics, opacities, colors, background, width, height,
                  tile, tiles_x, tiles_y, alpha_min, alpha_max):
    image = np.zeros((3, height, width))
    final_t = np.ones((height, width))
    for t in prange(tiles_x * tiles_y):
        ty = t // tiles_x
        tx = t - ty * tiles_x
        pixel = np.zeros(3)
        for y in range(ty * tile, min(height, (ty + 1) * tile)):
            for x in range(tx * tile, min(width, (tx + 1) * tile)):
                pixel[:] = 0.0
                final_t[y, x] = _shade(float(x), float(y), ids, offsets[t], offsets[t + 1],
                                       means, conics, opacities, colors, background,
                                       alpha_min, alpha_max, pixel)
                for ch in range(3):
                    image[ch, y, x] = pixel[ch]
    return image, final_t


@njit(cache=True)
def _render_oracle(order, means, conics, opacities, colors, background, width, height,
                   alpha_min, alpha_max):
    image = np.zeros((3, height, width))
    pixel = np.zeros(3)
    for y in range(height):
        for x in range(width):
            pixel[:] = 0.0
            _shade(float(x), float(y), order, 0, order.shape[0], means, conics, opacities,
                   colors, background, alpha_min, alpha_max, pixel)
            for ch in range(3):
                image[ch, y, x] = pixel[ch]
    return image


@njit(cache=True)
def _backward_pixels(grad_image, final_t, offsets, ids, means, conics, opacities, colors,
                     background, width, height, tile, tiles_x, alpha_min, alpha_max):
    n = means.shape[0]
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_opacity = np.zeros((n, 1))
    g_color = np.zeros((n, 3))
    behind = np.zeros(3)
    for y in range(height):
        for x in range(width):
            t = (y // tile) * tiles_x + (x // tile)
            transmittance = final_t[y, x]
            for ch in range(3):
                behind[ch] = transmittance * background[ch]
            gx = grad_image[0, y, x]
            gy = grad_image[1, y, x]
            gz = grad_image[2, y, x]
            for k in range(offsets[t + 1] - 1, offsets[t] - 1, -1):
                i = ids[k]
                alpha, raw, g, dx, dy = _alpha_at(i, float(x), float(y), means, conics,
                                                  opacities, alpha_max)
                if alpha < alpha_min:
                    continue
                t_before = transmittance / (1.0 - alpha)
                weight = alpha * t_before
                g_color[i, 0] += weight * gx
                g_color[i, 1] += weight * gy
                g_color[i, 2] += weight * gz
                keep = 1.0 - alpha
                g_alpha = (gx * (t_before * colors[i, 0] - behind[0] / keep)
                           + gy * (t_before * colors[i, 1] - behind[1] / keep)
                           + gz * (t_before * colors[i, 2] - behind[2] / keep))
                for ch in range(3):
                    behind[ch] += weight * colors[i, ch]
                transmittance = t_before
                if raw >= alpha_max:
                    continue
                g_opacity[i, 0] += g * g_alpha
                g_power = opacities[i, 0] * g * g_alpha
                a = conics[i, 0]
                b = conics[i, 1]
                c = conics[i, 2]
                g_mean[i, 0] += g_power * (a * dx + b * dy)
                g_mean[i, 1] += g_power * (b * dx + c * dy)
                g_conic[i, 0] += -0.5 * g_power * dx * dx
                g_conic[i, 1] += -g_power * dx * dy
                g_conic[i, 2] += -0.5 * g_power * dy * dy
    return g_mean, g_conic, g_opacity, g_color


@njit(cache=True)
def _backward_geometry(visible, centers, scales, rotations, conics, g_mean, g_conic,
                       w2c_r, w2c_t, fx, fy):
    n = centers.shape[0]
    g_center = np.zeros((n, 3))
    g_scale = np.zeros((n, 3))
    g_rotation = np.zeros((n, 4))
    for i in range(n):
        if not visible[i]:
            continue
        t = w2c_r @ centers[i] + w2c_t
        z = t[2]
        rot = _rotation(rotations[i])
        m = rot * scales[i]
        sigma = m @ m.T
        jac = _jacobian(t, fx, fy)
        tr = jac @ w2c_r

        q = np.empty((2, 2))
        q[0, 0] = conics[i, 0]
        q[0, 1] = conics[i, 1]
        q[1, 0] = conics[i, 1]
        q[1, 1] = conics[i, 2]
        gq = np.empty((2, 2))
        gq[0, 0] = g_conic[i, 0]
        gq[0, 1] = 0.5 * g_conic[i, 1]
        gq[1, 0] = 0.5 * g_conic[i, 1]
        gq[1, 1] = g_conic[i, 2]
        g_cov = -(q @ gq @ q)
        g_sigma = tr.T @ g_cov @ tr
        g_tr = 2.0 * (g_cov @ tr @ sigma)
        g_jac = g_tr @ w2c_r.T

        gt = np.zeros(3)
        gu = g_mean[i, 0]
        gv = g_mean[i, 1]
        gt[0] += gu * fx / z
        gt[2] += -gu * fx * t[0] / (z * z)
        gt[1] += gv * fy / z
        gt[2] += -gv * fy * t[1] / (z * z)
        gt[2] += -g_jac[0, 0] * fx / (z * z)
        gt[0] += -g_jac[0, 2] * fx / (z * z)
        gt[2] += g_jac[0, 2] * 2.0 * fx * t[0] / (z * z * z)
        gt[2] += -g_jac[1, 1] * fy / (z * z)
        gt[1] += -g_jac[1, 2] * fy / (z * z)
        gt[2] += g_jac[1, 2] * 2.0 * fy * t[1] / (z * z * z)
        g_center[i] = w2c_r.T @ gt

        g_m = 2.0 * (g_sigma @ m)
        for k in range(3):
            acc = 0.0
            for r in range(3):
                acc += g_m[r, k] * rot[r, k]
            g_scale[i, k] = acc
        dr = g_m * scales[i]
        w, x, y, zq = rotations[i, 0], rotations[i, 1], rotations[i, 2], rotations[i, 3]
        g_rotation[i, 0] = 2.0 * (-zq * dr[0, 1] + y * dr[0, 2] + zq * dr[1, 0]
                                  - x * dr[1, 2] - y * dr[2, 0] + x * dr[2, 1])
        g_rotation[i, 1] = 2.0 * (y * dr[0, 1] + zq * dr[0, 2] + y * dr[1, 0]
                                  - 2.0 * x * dr[1, 1] - w * dr[1, 2] + zq * dr[2, 0]
                                  + w * dr[2, 1] - 2.0 * x * dr[2, 2])
        g_rotation[i, 2] = 2.0 * (-2.0 * y * dr[0, 0] + x * dr[0, 1] + w * dr[0, 2]
                                  + x * dr[1, 0] + zq * dr[1, 2] - w * dr[2, 0]
                                  + zq * dr[2, 1] - 2.0 * y * dr[2, 2])
        g_rotation[i, 3] = 2.0 * (-2.0 * zq * dr[0, 0] - w * dr[0, 1] + x * dr[0, 2]
                                  + w * dr[1, 0] - 2.0 * zq * dr[1, 1] + y * dr[1, 2]
                                  + x * dr[2, 0] + y * dr[2, 1])
    return g_center, g_scale, g_rotation


# ---------------------------------------------------------------------------
# Python entry points
# ---------------------------------------------------------------------------

def _background(background: Sequence[float]) -> np.ndarray:
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (3,):
        raise ValidationError("background must be an RGB triple", details={"background": bg})
    return bg


def _project(a: Dict[str, np.ndarray], cam: CameraModel, settings: RenderSettings):
    return _project_all(np.ascontiguousarray(a["centers"]), np.ascontiguousarray(a["scales"]),
                        np.ascontiguousarray(a["rotations"]), np.ascontiguousarray(a["opacities"]),
                        np.ascontiguousarray(cam.rotation), np.ascontiguousarray(cam.translation),
                        float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
                        int(cam.width), int(cam.height), settings.near, settings.dilation,
                        settings.alpha_min)


def sort_fragments(depths: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Visible Gaussian indices ordered by (depth ascending, index ascending)."""
    index = np.flatnonzero(visible)
    return index[np.lexsort((index, depths[index]))].astype(np.int64)


def project_gaussian(center, scale, rotation, opacity, color, cam: CameraModel, index: int = 0,
                     settings: Optional[RenderSettings] = None) -> Optional[SplatFragment]:
    """Project one Gaussian; None when it is culled."""
    settings = settings or RenderSettings()
    a = {
        "centers": np.asarray(center, dtype=np.float64).reshape(1, 3),
        "scales": np.asarray(scale, dtype=np.float64).reshape(1, 3),
        "rotations": np.asarray(rotation, dtype=np.float64).reshape(1, 4),
        "opacities": np.asarray([[opacity]], dtype=np.float64),
    }
    means, _, covs, depths, _, visible = _project(a, cam, settings)
    if not visible[0]:
        return None
    cov = np.array([[covs[0, 0], covs[0, 1]], [covs[0, 1], covs[0, 2]]])
    return SplatFragment(means[0].copy(), cov, float(depths[0]), float(opacity),
                         np.asarray(color, dtype=np.float64), index)


def rasterize(cloud: GaussianCloud, cam: CameraModel, background=(0.0, 0.0, 0.0),
              settings: Optional[RenderSettings] = None) -> RenderState:
    """Tiled forward pass; returns the image (3, H, W) and the cached state."""
    settings = settings or RenderSettings()
    bg = _background(background)
    a = cloud.arrays()
    means, conics, _, depths, rects, visible = _project(a, cam, settings)
    order = sort_fragments(depths, visible)
    tiles_x = -(-cam.width // settings.tile)
    tiles_y = -(-cam.height // settings.tile)
    offsets, ids = _bin_fragments(order, rects, settings.tile, tiles_x, tiles_y)
    image, final_t = _render_tiles(offsets, ids, means, conics, a["opacities"],
                                   np.ascontiguousarray(a["colors"]), bg, cam.width, cam.height,
                                   settings.tile, tiles_x, tiles_y, settings.alpha_min,
                                   settings.alpha_max)
    if cloud.count and not len(order):
        logger.warning("every Gaussian was culled; the image is pure background")
    logger.debug(f"rasterized {len(order)}/{cloud.count} Gaussians into {len(ids)} tile entries")
    return RenderState(image, final_t, means, conics, depths, visible, order, offsets, ids,
                       tiles_x, tiles_y)


def render_oracle(cloud: GaussianCloud, cam: CameraModel, background=(0.0, 0.0, 0.0),
                  settings: Optional[RenderSettings] = None) -> np.ndarray:
    """Brute-force compositing of every fragment at every pixel."""
    settings = settings or RenderSettings()
    a = cloud.arrays()
    means, conics, _, depths, _, visible = _project(a, cam, settings)
    order = sort_fragments(depths, visible)
    return _render_oracle(order, means, conics, a["opacities"], np.ascontiguousarray(a["colors"]),
                          _background(background), cam.width, cam.height,
                          settings.alpha_min, settings.alpha_max)


def render_backward(cloud: GaussianCloud, cam: CameraModel, grad_image: np.ndarray,
                    background=(0.0, 0.0, 0.0), settings: Optional[RenderSettings] = None,
                    state: Optional[RenderState] = None,
                    mode: str = "analytic") -> Dict[str, np.ndarray]:
    """Gradients of <image, grad_image> for all five attribute groups.

    ``mode="fd"`` uses central differences and exists for cross-checking.
    """
    settings = settings or RenderSettings()
    grad_image = np.asarray(grad_image, dtype=np.float64)
    if grad_image.shape != (3, cam.height, cam.width):
        raise ValidationError("image gradient does not match the camera",
                              details={"grad": grad_image.shape, "camera": cam.size})
    if mode == "fd":
        return _finite_difference_backward(cloud, cam, grad_image, background, settings)
    if mode != "analytic":
        raise ValidationError(f"unknown backward mode '{mode}'")
    if state is None:
        state = rasterize(cloud, cam, background, settings)
    a = cloud.arrays()
    g_mean, g_conic, g_opacity, g_color = _backward_pixels(
        grad_image, state.final_transmittance, state.offsets, state.ids, state.means,
        state.conics, a["opacities"], np.ascontiguousarray(a["colors"]), _background(background),
        cam.width, cam.height, settings.tile, state.tiles_x, settings.alpha_min,
        settings.alpha_max)
    g_center, g_scale, g_rotation = _backward_geometry(
        state.visible, np.ascontiguousarray(a["centers"]), np.ascontiguousarray(a["scales"]),
        np.ascontiguousarray(a["rotations"]), state.conics, g_mean, g_conic,
        np.ascontiguousarray(cam.rotation), np.ascontiguousarray(cam.translation),
        float(cam.fx), float(cam.fy))
    return {"centers": g_center, "scales": g_scale, "rotations": g_rotation,
            "opacities": g_opacity, "colors": g_color}


def _finite_difference_backward(cloud: GaussianCloud, cam: CameraModel, grad_image: np.ndarray,
                                background, settings: RenderSettings,
                                step: float = 1e-6) -> Dict[str, np.ndarray]:
    base = cloud.arrays()
    grads = {}
    for name in ATTRIBUTES:
        out = np.zeros_like(base[name])
        for index in np.ndindex(*out.shape):
            values = []
            for sign in (1.0, -1.0):
                arrays = {k: v.copy() for k, v in base.items()}
                arrays[name][index] += sign * step
                shifted = GaussianCloud(*(Tensor(arrays[k], dtype=np.float64) for k in ATTRIBUTES))
                image = rasterize(shifted, cam, background, settings).image
                values.append(float(np.sum(image * grad_image)))
            out[index] = (values[0] - values[1]) / (2.0 * step)
        grads[name] = out
    return grads


def render(cloud: GaussianCloud, cam: CameraModel, background=(0.0, 0.0, 0.0),
           settings: Optional[RenderSettings] = None) -> Tensor:
    """Differentiable render into ``cam``; gradients flow to every cloud attribute."""
    settings = settings or RenderSettings()
    state = rasterize(cloud, cam, background, settings)
    parents = tuple(getattr(cloud, name) for name in ATTRIBUTES)

    def backward(g: np.ndarray) -> None:
        grads = render_backward(cloud, cam, g, background, settings, state)
        for name, tensor in zip(ATTRIBUTES, parents):
            if tensor.requires_grad:
                tensor.accumulate(grads[name].astype(tensor.dtype))

    return make_result(state.image.astype(cloud.centers.dtype), parents, backward)
