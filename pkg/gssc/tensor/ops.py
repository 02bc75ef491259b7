"""
Differentiable primitives.

Images and feature maps are ``(C, H, W)`` tensors. There is no general
broadcasting: binary ops require equal shapes and the few places that need
to spread a map over channels call ``broadcast_channels`` explicitly.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DimensionError, ValidationError
from .tensor import Tensor, as_tensor, make_result

NORM_EPS = 1e-12


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch",
                             details={"left": a.shape, "right": b.shape})


def _require_rank(x: Tensor, rank: int, op: str) -> None:
    if x.ndim != rank:
        raise DimensionError(f"{op}: expected rank {rank}", details={"shape": x.shape})


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return make_result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)

    return make_result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return make_result(a.data * b.data, (a, b), backward)


def add_const(x: Tensor, c: Union[float, np.ndarray]) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(g)

    return make_result((x.data + c).astype(x.dtype, copy=False), (x,), backward)


def mul_const(x: Tensor, c: Union[float, np.ndarray]) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(g * c)

    return make_result((x.data * c).astype(x.dtype, copy=False), (x,), backward)


def scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply every element of ``x`` by the single-element tensor ``s``."""
    if s.size != 1:
        raise DimensionError("scale: factor must hold one element", details={"shape": s.shape})
    factor = s.data.reshape(-1)[0]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate(g * factor)
        if s.requires_grad:
            s.accumulate(np.full(s.shape, np.sum(g * x.data), dtype=s.dtype))

    return make_result(x.data * factor, (x, s), backward)


def reciprocal(x: Tensor) -> Tensor:
    out = 1.0 / x.data

    def backward(g: np.ndarray) -> None:
        x.accumulate(-g * out * out)

    return make_result(out, (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(2.0 * g * x.data)

    return make_result(x.data * x.data, (x,), backward)


def absolute(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(g * np.sign(x.data))

    return make_result(np.abs(x.data), (x,), backward)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * out * (1.0 - out))

    return make_result(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * (1.0 - out * out))

    return make_result(out, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * out)

    return make_result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * mask)

    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x); the smooth activation used inside convolution blocks."""
    s = _stable_sigmoid(x.data)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * (s + x.data * s * (1.0 - s)))

    return make_result(x.data * s, (x,), backward)


def log2(x: Tensor, floor: float = 1e-9) -> Tensor:
    safe = np.maximum(x.data, floor)
    inside = x.data >= floor

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * inside / (safe * np.log(2.0)))

    return make_result(np.log2(safe), (x,), backward)


def clamp(x: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clip values; the gradient is zero wherever a bound is active."""
    lo_v = -np.inf if lo is None else lo
    hi_v = np.inf if hi is None else hi
    inside = (x.data >= lo_v) & (x.data <= hi_v)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * inside)

    return make_result(np.clip(x.data, lo_v, hi_v).astype(x.dtype), (x,), backward)


def l2norm_channels(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Divide every per-pixel channel vector by its Euclidean norm."""
    norm = np.sqrt(np.sum(x.data * x.data, axis=0, keepdims=True))
    denom = np.maximum(norm, eps)
    out = x.data / denom
    active = norm > eps

    def backward(g: np.ndarray) -> None:
        dot = np.sum(g * out, axis=0, keepdims=True)
        grad = np.where(active, (g - out * dot) / denom, g / denom)
        x.accumulate(grad)

    return make_result(out, (x,), backward)


def softmax_channels(x: Tensor) -> Tensor:
    shifted = x.data - np.max(x.data, axis=0, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=0, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = np.sum(g * out, axis=0, keepdims=True)
        x.accumulate(out * (g - dot))

    return make_result(out, (x,), backward)


_UNARY = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "relu": relu,
    "silu": silu,
    "l2norm": l2norm_channels,
}
_BINARY = {"add": add, "mul": mul, "sub": sub}


def elementwise(kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dispatch an elementwise op by name."""
    if kind in _UNARY:
        return _UNARY[kind](a)
    if kind in _BINARY:
        if b is None:
            raise ValidationError(f"elementwise '{kind}' needs two operands")
        return _BINARY[kind](a, b)
    raise ValidationError(f"unknown elementwise kind '{kind}'",
                          details={"known": sorted(_UNARY) + sorted(_BINARY)})


# ---------------------------------------------------------------------------
# Reductions and layout
# ---------------------------------------------------------------------------

def total(x: Tensor) -> Tensor:
    """Sum of all elements as a shape-(1,) tensor."""
    def backward(g: np.ndarray) -> None:
        x.accumulate(np.broadcast_to(g.reshape(()), x.shape))

    return make_result(np.array([np.sum(x.data)], dtype=x.dtype), (x,), backward)


def mean(x: Tensor) -> Tensor:
    return mul_const(total(x), 1.0 / max(x.size, 1))


def sum_channels(x: Tensor) -> Tensor:
    """(C, H, W) -> (1, H, W)."""
    def backward(g: np.ndarray) -> None:
        x.accumulate(np.broadcast_to(g, x.shape))

    return make_result(np.sum(x.data, axis=0, keepdims=True), (x,), backward)


def broadcast_channels(x: Tensor, channels: int) -> Tensor:
    """(1, H, W) -> (channels, H, W)."""
    if x.shape[0] != 1:
        raise DimensionError("broadcast_channels expects a single-channel map",
                             details={"shape": x.shape})

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.sum(g, axis=0, keepdims=True))

    data = np.ascontiguousarray(np.broadcast_to(x.data, (channels,) + x.shape[1:]))
    return make_result(data, (x,), backward)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    def backward(g: np.ndarray) -> None:
        x.accumulate(g.reshape(x.shape))

    return make_result(x.data.reshape(shape), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError("concat: incompatible shapes",
                             details={"shapes": [t.shape for t in tensors]}) from e
    bounds = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(int(lo), int(hi))
                t.accumulate(g[tuple(index)])

    return make_result(data, tuple(tensors), backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[start:stop] = g
        x.accumulate(full)

    return make_result(x.data[start:stop].copy(), (x,), backward)


def crop(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left ``height`` x ``width`` window of a (C, H, W) tensor."""
    if height > x.shape[1] or width > x.shape[2]:
        raise DimensionError("crop larger than tensor",
                             details={"shape": x.shape, "crop": (height, width)})

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[:, :height, :width] = g
        x.accumulate(full)

    return make_result(x.data[:, :height, :width].copy(), (x,), backward)


def gather_pixels(x: Tensor, flat_index: np.ndarray) -> Tensor:
    """Pick pixels of a (C, H, W) map by flat index -> (N, C)."""
    c = x.shape[0]
    flat = x.data.reshape(c, -1)

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(flat)
        np.add.at(full, (slice(None), flat_index), g.T)
        x.accumulate(full.reshape(x.shape))

    return make_result(np.ascontiguousarray(flat[:, flat_index].T), (x,), backward)


def detach(x: Tensor) -> Tensor:
    return x.detach()


# ---------------------------------------------------------------------------
# Convolution and resampling
# ---------------------------------------------------------------------------

def conv2d(x: Tensor,
           weight: Tensor,
           bias: Optional[Tensor] = None,
           stride: int = 1,
           padding: int = 0,
           groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation with zero padding.

    Args:
        x: input of shape (C_in, H, W)
        weight: kernel of shape (C_out, C_in / groups, k, k)
        bias: optional (C_out,) bias
        stride: step between output samples, >= 1
        padding: zero rows/columns added on every side
        groups: number of channel groups (C_in for depthwise)

    Returns:
        Tensor of shape (C_out, floor((H + 2p - k) / s) + 1, ...)
    """
    _require_rank(x, 3, "conv2d")
    _require_rank(weight, 4, "conv2d")
    c_in, height, width = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    if stride < 1:
        raise DimensionError("conv2d: stride must be >= 1", details={"stride": stride})
    if groups < 1 or c_in % groups or c_out % groups or c_in // groups != c_in_g:
        raise DimensionError("conv2d: channel counts do not split into groups",
                             details={"input": x.shape, "kernel": weight.shape, "groups": groups})
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError("conv2d: bias shape mismatch", details={"bias": bias.shape})

    h_out = (height + 2 * padding - kh) // stride + 1
    w_out = (width + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise DimensionError("conv2d: kernel larger than padded input",
                             details={"input": x.shape, "kernel": weight.shape})

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    xg = xp.reshape(groups, c_in_g, xp.shape[1], xp.shape[2])
    c_out_g = c_out // groups
    wg = weight.data.reshape(groups, c_out_g, c_in_g, kh, kw)
    h_span = stride * (h_out - 1) + 1
    w_span = stride * (w_out - 1) + 1

    out = np.zeros((groups, c_out_g, h_out, w_out), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xg[:, :, i:i + h_span:stride, j:j + w_span:stride]
            out += np.einsum("goc,gchw->gohw", wg[:, :, :, i, j], patch)
    out = out.reshape(c_out, h_out, w_out)
    if bias is not None:
        out = out + bias.data[:, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g: np.ndarray) -> None:
        gg = g.reshape(groups, c_out_g, h_out, w_out)
        if bias is not None and bias.requires_grad:
            bias.accumulate(np.sum(g, axis=(1, 2)))
        grad_w = np.zeros_like(wg) if weight.requires_grad else None
        grad_xp = np.zeros_like(xg) if x.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                window = (slice(None), slice(None),
                          slice(i, i + h_span, stride), slice(j, j + w_span, stride))
                if grad_w is not None:
                    grad_w[:, :, :, i, j] = np.einsum("gohw,gchw->goc", gg, xg[window])
                if grad_xp is not None:
                    grad_xp[window] += np.einsum("goc,gohw->gchw", wg[:, :, :, i, j], gg)
        if grad_w is not None:
            weight.accumulate(grad_w.reshape(weight.shape))
        if grad_xp is not None:
            full = grad_xp.reshape(c_in, xp.shape[1], xp.shape[2])
            x.accumulate(full[:, padding:padding + height, padding:padding + width])

    return make_result(out, parents, backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(C, H, W) -> (C / r^2, rH, rW), depth-to-space."""
    _require_rank(x, 3, "pixel_shuffle")
    c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise DimensionError("pixel_shuffle: channels not divisible by r^2",
                             details={"channels": c, "r": r})
    co = c // (r * r)
    out = x.data.reshape(co, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(co, h * r, w * r)

    def backward(g: np.ndarray) -> None:
        x.accumulate(_space_to_depth(g, r))

    return make_result(np.ascontiguousarray(out), (x,), backward)


def _space_to_depth(v: np.ndarray, r: int) -> np.ndarray:
    c, h, w = v.shape
    out = v.reshape(c, h // r, r, w // r, r).transpose(0, 2, 4, 1, 3)
    return np.ascontiguousarray(out.reshape(c * r * r, h // r, w // r))


def space_to_depth(x: Tensor, r: int) -> Tensor:
    """(C, H, W) -> (C r^2, H / r, W / r); inverse of ``pixel_shuffle``."""
    _require_rank(x, 3, "space_to_depth")
    if r < 1 or x.shape[1] % r or x.shape[2] % r:
        raise DimensionError("space_to_depth: spatial dims not divisible by r",
                             details={"shape": x.shape, "r": r})
    c, h, w = x.shape

    def backward(g: np.ndarray) -> None:
        up = g.reshape(c, r, r, h // r, w // r).transpose(0, 3, 1, 4, 2)
        x.accumulate(up.reshape(c, h, w))

    return make_result(_space_to_depth(x.data, r), (x,), backward)


def bilinear_sample(x: Tensor,
                    xs: Union[Tensor, np.ndarray],
                    ys: Union[Tensor, np.ndarray]) -> Tensor:
    """Sample a (C, H, W) tensor at fractional coordinates, clamping to the edge.

    Differentiable with respect to the source values and both coordinate grids.
    """
    _require_rank(x, 3, "bilinear_sample")
    xs_t = as_tensor(xs)
    ys_t = as_tensor(ys)
    if xs_t.shape != ys_t.shape or xs_t.ndim != 2:
        raise DimensionError("bilinear_sample: coordinate grids must be equal 2-D shapes",
                             details={"x": xs_t.shape, "y": ys_t.shape})
    c, height, width = x.shape

    xr = xs_t.data.astype(np.float64)
    yr = ys_t.data.astype(np.float64)
    xc = np.clip(xr, 0.0, width - 1)
    yc = np.clip(yr, 0.0, height - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = (xc - x0).astype(x.dtype)
    wy = (yc - y0).astype(x.dtype)

    v00 = x.data[:, y0, x0]
    v01 = x.data[:, y0, x1]
    v10 = x.data[:, y1, x0]
    v11 = x.data[:, y1, x1]
    top = (1 - wx) * v00 + wx * v01
    bottom = (1 - wx) * v10 + wx * v11
    out = (1 - wy) * top + wy * bottom

    x_inside = (xr >= 0.0) & (xr <= width - 1)
    y_inside = (yr >= 0.0) & (yr <= height - 1)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            full = np.zeros((c, height * width), dtype=x.dtype)
            gf = g.reshape(c, -1)
            for yi, xi, weight in ((y0, x0, (1 - wy) * (1 - wx)),
                                   (y0, x1, (1 - wy) * wx),
                                   (y1, x0, wy * (1 - wx)),
                                   (y1, x1, wy * wx)):
                np.add.at(full, (slice(None), (yi * width + xi).ravel()),
                          gf * weight.ravel())
            x.accumulate(full.reshape(x.shape))
        if xs_t.requires_grad:
            d_dx = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
            xs_t.accumulate(np.sum(g * d_dx, axis=0) * x_inside)
        if ys_t.requires_grad:
            d_dy = bottom - top
            ys_t.accumulate(np.sum(g * d_dy, axis=0) * y_inside)

    return make_result(out.astype(x.dtype, copy=False), (x, xs_t, ys_t), backward)


def avg_pool(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping mean pooling by an integer factor."""
    _require_rank(x, 3, "avg_pool")
    c, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError("avg_pool: spatial dims not divisible by factor",
                             details={"shape": x.shape, "factor": factor})
    out = x.data.reshape(c, h // factor, factor, w // factor, factor).mean(axis=(2, 4))

    def backward(g: np.ndarray) -> None:
        spread = np.repeat(np.repeat(g, factor, axis=1), factor, axis=2)
        x.accumulate(spread / (factor * factor))

    return make_result(out.astype(x.dtype, copy=False), (x,), backward)


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Half-pixel-aligned bilinear upsampling by an integer factor."""
    _require_rank(x, 3, "upsample_bilinear")
    _, h, w = x.shape
    ys = (np.arange(h * factor, dtype=np.float64) + 0.5) / factor - 0.5
    xs = (np.arange(w * factor, dtype=np.float64) + 0.5) / factor - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(x, grid_x, grid_y)


def take(x: Tensor, index: int) -> Tensor:
    """Select one entry of a 1-D tensor as a shape-(1,) tensor."""
    _require_rank(x, 1, "take")
    if not 0 <= index < x.shape[0]:
        raise DimensionError("take: index out of range", details={"index": index, "size": x.shape[0]})

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[index] = g.reshape(-1)[0]
        x.accumulate(full)

    return make_result(x.data[index:index + 1].copy(), (x,), backward)
