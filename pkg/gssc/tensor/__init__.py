"""
Dense tensors, differentiable primitives and parameter handling.
"""

from .params import ParamScope, ParamSet
from .tensor import Tensor, as_tensor, default_dtype, make_result, no_grad, precision

__all__ = [
    "ParamScope",
    "ParamSet",
    "Tensor",
    "as_tensor",
    "default_dtype",
    "make_result",
    "no_grad",
    "precision",
]
