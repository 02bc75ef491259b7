"""
Disparity compensation and cross-view feature fusion.

A view's features are blended with the opposite view's features warped into
its own coordinates. The blend weight is a confidence derived from
left/right disparity consistency:

    r = d_self - warp(d_other, d_self)
    W = exp(-(r / S)^2)
    fused = W * warp(F_other, d_self) + (1 - W) * F_self

S is a learnable positive width (stored as log S).
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..core.errors import DimensionError, StaleContextError, ValidationError
from ..geometry.camera import View
from ..geometry.disparity import DisparityMap, pool_disparity, warp
from ..tensor import ops
from ..tensor.params import ParamScope
from ..tensor.tensor import Tensor

FUSION = "fusion"
WARP = "warp"
NONE = "none"
MODES = (FUSION, WARP, NONE)


@dataclass
class ConfidenceMap:
    """Per-pixel blend weights in (0, 1] for one view."""

    weights: Tensor
    view: View

    @property
    def shape(self):
        return self.weights.shape


@dataclass
class ViewFeatures:
    """What one branch brings to an exchange barrier."""

    view: View
    features: Tensor
    disparity: DisparityMap
    frame_index: int


class FusionScale:
    """Learnable kernel width S = exp(log_scale), initialized to 1."""

    def __init__(self, scope: ParamScope):
        self.log_scale = scope.add("log_scale", (1,), init="zeros")

    def __call__(self) -> Tensor:
        return ops.exp(self.log_scale)


def consistency_confidence(d_self: DisparityMap, d_other: DisparityMap, S: Tensor) -> ConfidenceMap:
    """W = exp(-(r / S)^2) with r the left/right consistency residual."""
    if d_self.values.shape != d_other.values.shape:
        raise DimensionError("disparity maps differ in resolution",
                             details={"self": d_self.values.shape, "other": d_other.values.shape})
    residual = ops.sub(d_self.values, warp(d_other.values, d_self))
    scaled = ops.scale(residual, ops.reciprocal(S))
    weights = ops.exp(ops.mul_const(ops.square(scaled), -1.0))
    return ConfidenceMap(weights, d_self.view)


def fuse_features(self_feat: Tensor, other_feat: Tensor, d_self: DisparityMap,
                  W: ConfidenceMap) -> Tensor:
    """Per-pixel convex blend of warped opposite features and own features."""
    if self_feat.shape != other_feat.shape:
        raise DimensionError("fused feature maps differ in shape",
                             details={"self": self_feat.shape, "other": other_feat.shape})
    if W.shape[1:] != self_feat.shape[1:]:
        raise DimensionError("confidence map does not match feature resolution",
                             details={"weights": W.shape, "features": self_feat.shape})
    warped = warp(other_feat, d_self)
    weights = ops.broadcast_channels(W.weights, self_feat.shape[0])
    keep = ops.add_const(ops.mul_const(weights, -1.0), 1.0)
    return ops.add(ops.mul(weights, warped), ops.mul(keep, self_feat))


def _constant_confidence(d: DisparityMap, value: float) -> ConfidenceMap:
    data = np.full(d.values.shape, value)
    return ConfidenceMap(Tensor(data, dtype=d.values.dtype), d.view)


def cross_view_context(left: ViewFeatures, right: ViewFeatures, S: Optional[Tensor],
                       mode: str = FUSION) -> Dict[View, Tensor]:
    """Exchange features between the two branches of one frame.

    ``mode`` selects the full confidence blend, a fixed half/half blend of
    warped and own features, or no exchange at all.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown cross-view mode '{mode}'", details={"modes": MODES})
    if left.frame_index != right.frame_index:
        raise StaleContextError("cross-view exchange across different frames",
                                details={"left": left.frame_index, "right": right.frame_index})
    if left.view is not View.LEFT or right.view is not View.RIGHT:
        raise ValidationError("cross-view exchange needs one left and one right branch")
    if mode == NONE:
        return {View.LEFT: left.features, View.RIGHT: right.features}

    fused = {}
    for own, other in ((left, right), (right, left)):
        if mode == FUSION:
            if S is None:
                raise ValidationError("fusion mode needs a kernel width")
            confidence = consistency_confidence(own.disparity, other.disparity, S)
        else:
            confidence = _constant_confidence(own.disparity, 0.5)
        fused[own.view] = fuse_features(own.features, other.features, own.disparity, confidence)
    return fused


def features_at(view: View, features: Tensor, disparity: DisparityMap, frame_index: int) -> ViewFeatures:
    """Pair features with the disparity pooled to their resolution."""
    factor = disparity.width // features.shape[2]
    if factor < 1 or disparity.width != factor * features.shape[2] \
            or disparity.height != factor * features.shape[1]:
        raise DimensionError("feature resolution is not an integer division of the disparity",
                             details={"features": features.shape,
                                      "disparity": disparity.values.shape})
    return ViewFeatures(view, features, pool_disparity(disparity, factor), frame_index)
