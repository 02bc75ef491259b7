"""
Gaussian attribute prediction from decoded semantic features.

Decoded disparity features are first mapped to the depth domain with a fixed
affine map (the tangent of Z = fx * b / d at a reference disparity), then
concatenated with the image features and passed once through a shared trunk.
Five light heads read the trunk: scale, rotation, opacity and the color and
depth residuals.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Tuple

import numpy as np

from ..geometry.camera import CameraModel, CameraRig, View
from ..geometry.disparity import DISPARITY_EPS, DisparityMap, disparity_to_depth
from ..geometry.projection import unproject_pixels
from ..tensor import ops
from ..tensor.layers import BlockStack, Conv2d
from ..tensor.params import ParamScope
from ..tensor.tensor import Tensor
from .cloud import GaussianCloud

logger = logging.getLogger(__name__)

HEAD_SHUFFLE = 2
HEAD_UPSAMPLE = 4
OPACITY_EPS = 1e-6
IDENTITY_QUATERNION = (1.0, 0.0, 0.0, 0.0)


@dataclass
class GaussianConfig:
    """Attribute ranges and residual amplitudes."""

    s_max: float = 0.05
    color_amplitude: float = 0.25
    depth_amplitude: float = 0.05
    depth_transform: bool = True
    reference_disparity: float = 8.0
    trunk_blocks: int = 2
    residuals: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class ResidualMaps:
    """Bounded color (3, H, W) and depth (1, H, W) residuals in (-1, 1)."""

    color: Tensor
    depth: Tensor


@dataclass
class AttributeMaps:
    scale: Tensor
    rotation: Tensor
    opacity: Tensor


def depth_domain(features: Tensor, rig: CameraRig, reference_disparity: float) -> Tensor:
    """Channelwise affine map z_ref * (2 - f / d_ref), z_ref = fx * b / d_ref."""
    z_ref = rig.focal_baseline / reference_disparity
    return ops.add_const(ops.mul_const(features, -z_ref / reference_disparity), 2.0 * z_ref)


class _Head:
    """1x1 conv to k * r^2 channels, pixel shuffle r, bilinear upsampling."""

    def __init__(self, scope: ParamScope, c_in: int, c_out: int, bias: Tuple[float, ...] = ()):
        channels = c_out * HEAD_SHUFFLE * HEAD_SHUFFLE
        if bias:
            init = np.repeat(np.asarray(bias, dtype=np.float64), HEAD_SHUFFLE * HEAD_SHUFFLE)
            scope.add("bias", (channels,), init="constant", value=init)
        self.conv = Conv2d(scope, c_in, channels, 1, init="normal")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.upsample_bilinear(ops.pixel_shuffle(self.conv(x), HEAD_SHUFFLE), HEAD_UPSAMPLE)


class GaussianPredictor:
    """Shared trunk plus scale, rotation, opacity and residual heads."""

    def __init__(self, scope: ParamScope, channels: int, config: GaussianConfig):
        self.config = config
        self.trunk_in = Conv2d(scope.scope("trunk.in"), 2 * channels, channels, 1)
        self.trunk_blocks = BlockStack(scope.scope("trunk.blocks"), channels, config.trunk_blocks)
        self.scale_head = _Head(scope.scope("head.scale"), channels, 3)
        self.rotation_head = _Head(scope.scope("head.rotation"), channels, 4, IDENTITY_QUATERNION)
        self.opacity_head = _Head(scope.scope("head.opacity"), channels, 1)
        self.color_head = _Head(scope.scope("head.color"), channels, 3)
        self.depth_head = _Head(scope.scope("head.depth"), channels, 1)
        self.trunk_calls = 0

    def trunk(self, disparity_features: Tensor, image_features: Tensor, rig: CameraRig) -> Tensor:
        """f_p([T(f_hat) || F_hat]); evaluated once per view and frame."""
        self.trunk_calls += 1
        if self.config.depth_transform:
            disparity_features = depth_domain(disparity_features, rig,
                                              self.config.reference_disparity)
        x = self.trunk_in(ops.concat([disparity_features, image_features]))
        return self.trunk_blocks(ops.silu(x))

    def attributes(self, shared: Tensor) -> AttributeMaps:
        s_max = self.config.s_max
        scale = ops.clamp(ops.mul_const(ops.sigmoid(self.scale_head(shared)), s_max),
                          s_max * 1e-6, s_max)
        rotation = ops.l2norm_channels(self.rotation_head(shared))
        opacity = ops.clamp(ops.sigmoid(self.opacity_head(shared)), OPACITY_EPS, 1.0 - OPACITY_EPS)
        return AttributeMaps(scale, rotation, opacity)

    def residuals(self, shared: Tensor) -> ResidualMaps:
        return ResidualMaps(ops.tanh(self.color_head(shared)), ops.tanh(self.depth_head(shared)))


def predict_attributes(predictor: GaussianPredictor, shared: Tensor) -> AttributeMaps:
    return predictor.attributes(shared)


def predict_residuals(predictor: GaussianPredictor, shared: Tensor) -> ResidualMaps:
    return predictor.residuals(shared)


def refine(x_hat: Tensor, d_hat: DisparityMap, residuals: ResidualMaps, rig: CameraRig,
           config: GaussianConfig) -> Tuple[Tensor, Tensor, np.ndarray]:
    """Add scaled residuals to the decoded color and the disparity-derived depth.

    Returns:
        (color in [0, 1], depth floored at the disparity epsilon, valid mask)
    """
    depth, valid = disparity_to_depth(d_hat, rig)
    color = x_hat
    if config.residuals:
        color = ops.add(color, ops.mul_const(residuals.color, config.color_amplitude))
        depth = ops.add(depth, ops.mul_const(residuals.depth, config.depth_amplitude))
    color = ops.clamp(color, 0.0, 1.0)
    depth = ops.clamp(depth, DISPARITY_EPS, None)
    return color, depth, valid


def assemble_cloud(color: Tensor, depth: Tensor, attributes: AttributeMaps, cam: CameraModel,
                   mask: np.ndarray, view: View) -> GaussianCloud:
    """One Gaussian per masked pixel, centered on the unprojected refined depth."""
    _, h, w = depth.shape
    flat = np.flatnonzero(mask.reshape(-1))
    pixels = np.stack([flat % w, flat // w], axis=1)
    if len(flat) == 0:
        logger.warning(f"empty foreground mask for view {view.value}")
    depth_values = ops.reshape(ops.gather_pixels(depth, flat), (len(flat),))
    centers = unproject_pixels(depth_values, pixels.astype(np.float64), cam)
    return GaussianCloud(
        centers=centers,
        scales=ops.gather_pixels(attributes.scale, flat),
        rotations=ops.gather_pixels(attributes.rotation, flat),
        opacities=ops.gather_pixels(attributes.opacity, flat),
        colors=ops.gather_pixels(color, flat),
        pixels=pixels.astype(np.int32),
        views=np.full(len(flat), view.code, dtype=np.uint8),
        valid=np.ones(len(flat), dtype=bool),
    )
