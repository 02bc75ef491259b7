"""
Convolution layers and depthwise-separable blocks built on ParamSet scopes.
"""

from typing import Optional

from ..core.errors import DimensionError
from . import ops
from .params import ParamScope
from .tensor import Tensor

ACTIVATIONS = {
    "relu": ops.relu,
    "silu": ops.silu,
    "tanh": ops.tanh,
}


class Conv2d:
    """A conv2d layer whose weights live in a ParamSet scope."""

    def __init__(self,
                 scope: ParamScope,
                 c_in: int,
                 c_out: int,
                 kernel: int = 1,
                 stride: int = 1,
                 padding: Optional[int] = None,
                 groups: int = 1,
                 bias: bool = True,
                 init: str = "he"):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.groups = groups
        self.weight = scope.add("weight", (c_out, c_in // groups, kernel, kernel), init=init)
        self.bias = scope.add("bias", (c_out,), init="zeros") if bias else None
        self.c_in = c_in
        self.c_out = c_out

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


def depthwise_separable_block(x: Tensor,
                              scope: ParamScope,
                              residual: bool = True,
                              activation: str = "silu") -> Tensor:
    """Depthwise k x k conv, nonlinearity, pointwise 1 x 1 conv, optional skip.

    The skip is only added when input and output channel counts agree.
    """
    dw_w, dw_b = scope["dw.weight"], scope["dw.bias"]
    pw_w, pw_b = scope["pw.weight"], scope["pw.bias"]
    channels = x.shape[0]
    if dw_w.shape[0] != channels or dw_w.shape[1] != 1:
        raise DimensionError("depthwise kernel does not match input channels",
                             details={"input": x.shape, "kernel": dw_w.shape})
    k = dw_w.shape[-1]
    h = ops.conv2d(x, dw_w, dw_b, stride=1, padding=k // 2, groups=channels)
    h = ACTIVATIONS[activation](h)
    out = ops.conv2d(h, pw_w, pw_b)
    if residual and out.shape == x.shape:
        out = ops.add(out, x)
    return out


class DepthwiseSeparableBlock:
    """Registers and applies one depthwise-separable block."""

    def __init__(self, scope: ParamScope, c_in: int, c_out: int, kernel: int = 3,
                 residual: bool = True, activation: str = "silu"):
        scope.add("dw.weight", (c_in, 1, kernel, kernel), fan_in=kernel * kernel)
        scope.add("dw.bias", (c_in,), init="zeros")
        scope.add("pw.weight", (c_out, c_in, 1, 1), fan_in=c_in)
        scope.add("pw.bias", (c_out,), init="zeros")
        self.scope = scope
        self.residual = residual
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return depthwise_separable_block(x, self.scope, self.residual, self.activation)


class BlockStack:
    """A cascade of depthwise-separable blocks at constant width."""

    def __init__(self, scope: ParamScope, channels: int, depth: int, kernel: int = 3):
        self.blocks = [
            DepthwiseSeparableBlock(scope.scope(f"block{i}"), channels, channels, kernel)
            for i in range(depth)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x
