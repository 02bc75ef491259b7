"""
Image quality metrics and the differentiable distortion terms built on them.

SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated only where the
window lies fully inside the image, with C1 = 0.01^2 and C2 = 0.03^2 at
peak 1. Multi-channel images average the per-channel scores.
"""

import math
from typing import Tuple, Union

import numpy as np
from scipy.signal import convolve2d, correlate2d

from ..core.errors import DimensionError
from ..tensor import ops
from ..tensor.tensor import Tensor, make_result

WINDOW = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03

ImageLike = Union[np.ndarray, Tensor]


def _array(image: ImageLike) -> np.ndarray:
    data = image.data if isinstance(image, Tensor) else image
    return np.asarray(data, dtype=np.float64)


def _require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: image shapes differ", details={"a": a.shape, "b": b.shape})


def gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalized 2D Gaussian kernel."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def mse(a: ImageLike, b: ImageLike) -> float:
    x, y = _array(a), _array(b)
    _require_same_shape(x, y, "mse")
    return float(np.mean((x - y) ** 2))


def psnr(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """PSNR in dB; identical images give +inf."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return float(-10.0 * np.log10(err / (peak * peak)))


def _as_channels(x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise DimensionError("SSIM needs (H, W) or (C, H, W) images", details={"shape": x.shape})
    return x


def _ssim_maps(x: np.ndarray, y: np.ndarray, peak: float):
    """Per-window SSIM of one channel plus the intermediates the gradient needs."""
    w = gaussian_window()
    c1, c2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    var_x = correlate2d(x * x, w, mode="valid") - mu_x * mu_x
    var_y = correlate2d(y * y, w, mode="valid") - mu_y * mu_y
    cov = correlate2d(x * y, w, mode="valid") - mu_x * mu_y
    a = 2.0 * mu_x * mu_y + c1
    b = 2.0 * cov + c2
    c = mu_x * mu_x + mu_y * mu_y + c1
    d = var_x + var_y + c2
    s = (a * b) / (c * d)
    return s, (mu_x, mu_y, a, b, c, d, w)


def _check_window(x: np.ndarray) -> None:
    if x.shape[-1] < WINDOW or x.shape[-2] < WINDOW:
        raise DimensionError(f"image smaller than the {WINDOW}x{WINDOW} SSIM window",
                             details={"shape": x.shape})


def ssim(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """Mean windowed SSIM, averaged over channels."""
    x, y = _as_channels(_array(a)), _as_channels(_array(b))
    _require_same_shape(x, y, "ssim")
    _check_window(x)
    return float(np.mean([np.mean(_ssim_maps(x[k], y[k], peak)[0]) for k in range(x.shape[0])]))


def _ssim_channel_grad(x: np.ndarray, y: np.ndarray, peak: float) -> Tuple[float, np.ndarray]:
    """Mean SSIM of one channel and its gradient with respect to ``x``."""
    s, (mu_x, mu_y, a, b, c, d, w) = _ssim_maps(x, y, peak)
    scale = 1.0 / s.size
    d_mu = scale * s * (2.0 * mu_y / a - 2.0 * mu_y / b - 2.0 * mu_x / c + 2.0 * mu_x / d)
    d_xx = scale * (-s / d)
    d_xy = scale * (2.0 * s / b)
    grad = (convolve2d(d_mu, w, mode="full")
            + 2.0 * x * convolve2d(d_xx, w, mode="full")
            + y * convolve2d(d_xy, w, mode="full"))
    return float(np.mean(s)), grad


def ssim_tensor(a: Tensor, b: Tensor, peak: float = 1.0) -> Tensor:
    """Differentiable mean SSIM of two (C, H, W) tensors."""
    x, y = _as_channels(_array(a)), _as_channels(_array(b))
    _require_same_shape(x, y, "ssim")
    _check_window(x)
    channels = x.shape[0]
    scores, grads_a, grads_b = [], [], []
    for k in range(channels):
        score, ga = _ssim_channel_grad(x[k], y[k], peak)
        _, gb = _ssim_channel_grad(y[k], x[k], peak)
        scores.append(score)
        grads_a.append(ga / channels)
        grads_b.append(gb / channels)
    out = np.array([np.mean(scores)], dtype=a.dtype)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate((g[0] * np.stack(grads_a)).reshape(a.shape))
        if b.requires_grad:
            b.accumulate((g[0] * np.stack(grads_b)).reshape(b.shape))

    return make_result(out, (a, b), backward)


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    return ops.mean(ops.absolute(ops.sub(a, b)))


def ssim_loss(a: Tensor, b: Tensor) -> Tensor:
    """1 - SSIM."""
    return ops.add_const(ops.mul_const(ssim_tensor(a, b), -1.0), 1.0)


def render_distortion(rendered: Tensor, target: Tensor, alpha: float) -> Tensor:
    """alpha * (1 - SSIM) + (1 - alpha) * L1 on a novel view."""
    return ops.add(ops.mul_const(ssim_loss(rendered, target), alpha),
                   ops.mul_const(l1_loss(rendered, target), 1.0 - alpha))
