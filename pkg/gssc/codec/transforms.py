"""
Weight-shared analysis and synthesis transforms for the disparity and image streams.

Both views run through the same weights. Features live at 1/8 resolution,
latents at 1/16 and hyperlatents at 1/64, so frames are padded to a multiple
of 64 before coding.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..core.errors import DimensionError
from ..geometry.camera import View
from ..geometry.disparity import DisparityMap
from ..tensor import ops
from ..tensor.layers import BlockStack, Conv2d
from ..tensor.params import ParamScope
from ..tensor.tensor import Tensor
from .fusion import FUSION, FusionScale, ViewFeatures, cross_view_context, features_at
from .qp import QP_MAX

logger = logging.getLogger(__name__)

PATCH = 8
LATENT_STRIDE = 16
PAD_MULTIPLE = 64

DISPARITY = "disparity"
IMAGE = "image"
STREAMS = (DISPARITY, IMAGE)


@dataclass
class CodecDims:
    """Channel widths and depths of the toy codec."""

    features: int = 32
    image_latent: int = 48
    disparity_latent: int = 16
    hyper_latent: int = 16
    blocks: int = 3
    disparity_ceiling: float = 192.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CodecDims":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class LatentTensor:
    """Continuous or quantized latent of one stream and view."""

    values: Tensor
    stream: str
    view: View

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


# ---------------------------------------------------------------------------
# Padding
# ---------------------------------------------------------------------------

def padded_size(height: int, width: int, multiple: int = PAD_MULTIPLE) -> Tuple[int, int]:
    return (-(-height // multiple) * multiple, -(-width // multiple) * multiple)


def pad_frame(frame: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Edge-replicate a (C, H, W) array up to a multiple of ``multiple``."""
    _, h, w = frame.shape
    ph, pw = padded_size(h, w, multiple)
    if (ph, pw) == (h, w):
        return frame
    return np.pad(frame, ((0, 0), (0, ph - h), (0, pw - w)), mode="edge")


def crop_frame(frame: Tensor, height: int, width: int) -> Tensor:
    if frame.shape[1:] == (height, width):
        return frame
    return ops.crop(frame, height, width)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

class Patchify:
    """8x8 space-to-depth followed by a learned 1x1 projection."""

    def __init__(self, scope: ParamScope, c_in: int, c_out: int, factor: int = PATCH):
        self.factor = factor
        self.project = Conv2d(scope, c_in * factor * factor, c_out, 1)

    def __call__(self, x: Tensor) -> Tensor:
        _, h, w = x.shape
        if h % self.factor or w % self.factor:
            raise DimensionError(f"patchify needs dims divisible by {self.factor}",
                                 details={"shape": x.shape})
        return self.project(ops.space_to_depth(x, self.factor))


def patchify(x: Tensor, scope: ParamScope, c_out: int) -> Tensor:
    return Patchify(scope, x.shape[0], c_out)(x)


class TemporalMerge:
    """Concatenate the previous decoded features and mix them back with a 1x1 conv."""

    def __init__(self, scope: ParamScope, channels: int):
        self.mix = Conv2d(scope, 2 * channels, channels, 1)

    def __call__(self, x: Tensor, previous: Tensor) -> Tensor:
        return self.mix(ops.concat([x, previous]))


class Upscale:
    """Conv to r^2 times the channels, then pixel shuffle."""

    def __init__(self, scope: ParamScope, c_in: int, c_out: int, factor: int, kernel: int = 3):
        self.factor = factor
        self.conv = Conv2d(scope, c_in, c_out * factor * factor, kernel)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.pixel_shuffle(self.conv(x), self.factor)


class QuantStep:
    """Learned log quantization step per QP, one table per stream.

    QP 0 starts at step 2 and QP 63 at step 1/8, so higher QP codes finer.
    """

    def __init__(self, scope: ParamScope):
        init = np.linspace(np.log(2.0), np.log(0.125), QP_MAX + 1)
        self.log_steps = scope.add("log_qstep", (QP_MAX + 1,), init="constant", value=init)

    def step(self, qp: int) -> Tensor:
        return ops.exp(ops.take(self.log_steps, int(qp)))

    def to_latent(self, y: Tensor, qp: int) -> Tensor:
        return ops.scale(y, ops.reciprocal(self.step(qp)))

    def from_latent(self, y_hat: Tensor, qp: int) -> Tensor:
        return ops.scale(y_hat, self.step(qp))


# ---------------------------------------------------------------------------
# Disparity stream
# ---------------------------------------------------------------------------

class DisparityCodec:
    """Encoder and decoder for one view's disparity, conditioned on f_{t-1}."""

    def __init__(self, scope: ParamScope, dims: CodecDims):
        self.dims = dims
        c, cy = dims.features, dims.disparity_latent
        self.patchify = Patchify(scope.scope("enc.patchify"), 1, c)
        self.enc_temporal = TemporalMerge(scope.scope("enc.temporal"), c)
        self.enc_blocks = BlockStack(scope.scope("enc.blocks"), c, dims.blocks)
        self.enc_down = Conv2d(scope.scope("enc.down"), c, cy, 3, stride=2)
        self.dec_up = Upscale(scope.scope("dec.up"), cy, c, 2)
        self.dec_temporal = TemporalMerge(scope.scope("dec.temporal"), c)
        self.dec_blocks = BlockStack(scope.scope("dec.blocks"), c, dims.blocks)
        self.dec_head = Upscale(scope.scope("dec.head"), c, 1, PATCH, kernel=1)
        self.qstep = QuantStep(scope.scope("qstep"))

    def encode(self, d: DisparityMap, previous: Tensor, qp: int) -> LatentTensor:
        x = ops.mul_const(d.values, 1.0 / self.dims.disparity_ceiling)
        f = self.enc_temporal(self.patchify(x), previous)
        y = self.enc_down(ops.silu(self.enc_blocks(f)))
        return LatentTensor(self.qstep.to_latent(y, qp), DISPARITY, d.view)

    def decode(self, y_hat: LatentTensor, previous: Tensor, qp: int) -> Tuple[DisparityMap, Tensor]:
        h = ops.silu(self.dec_up(self.qstep.from_latent(y_hat.values, qp)))
        f_hat = self.dec_blocks(self.dec_temporal(h, previous))
        d = ops.mul_const(ops.sigmoid(self.dec_head(f_hat)), self.dims.disparity_ceiling)
        valid = np.ones(d.shape[1:], dtype=bool)
        return DisparityMap(d, y_hat.view, valid), f_hat


def encode_disparity(codec: DisparityCodec, d: DisparityMap, previous: Tensor, qp: int) -> LatentTensor:
    return codec.encode(d, previous, qp)


def decode_disparity(codec: DisparityCodec, y_hat: LatentTensor, previous: Tensor,
                     qp: int) -> Tuple[DisparityMap, Tensor]:
    return codec.decode(y_hat, previous, qp)


# ---------------------------------------------------------------------------
# Image stream
# ---------------------------------------------------------------------------

class ImageCodec:
    """Image encoder/decoder with a cross-view exchange after the first stage.

    The decoder mirrors the exchange before its last stage. Both exchanges see
    decoded disparity only.
    """

    def __init__(self, scope: ParamScope, dims: CodecDims, mode: str = FUSION):
        self.dims = dims
        self.mode = mode
        c, cy = dims.features, dims.image_latent
        self.patchify = Patchify(scope.scope("enc.patchify"), 3, c)
        self.enc_temporal = TemporalMerge(scope.scope("enc.temporal"), c)
        self.enc_stage1 = BlockStack(scope.scope("enc.stage1"), c, dims.blocks)
        self.enc_stage2 = BlockStack(scope.scope("enc.stage2"), c, dims.blocks)
        self.enc_down = Conv2d(scope.scope("enc.down"), c, cy, 3, stride=2)
        self.dec_up = Upscale(scope.scope("dec.up"), cy, c, 2)
        self.dec_temporal = TemporalMerge(scope.scope("dec.temporal"), c)
        self.dec_stage1 = BlockStack(scope.scope("dec.stage1"), c, dims.blocks)
        self.dec_stage2 = BlockStack(scope.scope("dec.stage2"), c, dims.blocks)
        self.dec_head = Upscale(scope.scope("dec.head"), c, 3, PATCH, kernel=1)
        self.enc_fusion = FusionScale(scope.scope("enc.fusion"))
        self.dec_fusion = FusionScale(scope.scope("dec.fusion"))
        self.qstep = QuantStep(scope.scope("qstep"))

    def analysis_front(self, frame: Tensor, previous: Tensor) -> Tensor:
        """Stage-1 features F_t at 1/8 resolution (before the exchange)."""
        return self.enc_stage1(self.enc_temporal(self.patchify(frame), previous))

    def analysis_back(self, fused: Tensor, view: View, qp: int) -> LatentTensor:
        y = self.enc_down(ops.silu(self.enc_stage2(fused)))
        return LatentTensor(self.qstep.to_latent(y, qp), IMAGE, view)

    def synthesis_front(self, y_hat: LatentTensor, previous: Tensor, qp: int) -> Tensor:
        h = ops.silu(self.dec_up(self.qstep.from_latent(y_hat.values, qp)))
        return self.dec_stage1(self.dec_temporal(h, previous))

    def synthesis_back(self, fused: Tensor) -> Tuple[Tensor, Tensor]:
        features = self.dec_stage2(fused)
        return ops.sigmoid(self.dec_head(features)), features

    def exchange(self, left: ViewFeatures, right: ViewFeatures, decoder: bool) -> Dict[View, Tensor]:
        scale = (self.dec_fusion if decoder else self.enc_fusion)()
        return cross_view_context(left, right, scale, self.mode)


def encode_image(codec: ImageCodec, frame: Tensor, previous: Tensor, d_hat: DisparityMap,
                 opposite: ViewFeatures, qp: int, frame_index: int,
                 own: Optional[Tensor] = None) -> LatentTensor:
    """Encode one view given the opposite branch's stage-1 features.

    ``own`` may carry this view's already computed stage-1 features.
    """
    features = own if own is not None else codec.analysis_front(frame, previous)
    mine = features_at(d_hat.view, features, d_hat, frame_index)
    pair = (mine, opposite) if d_hat.view is View.LEFT else (opposite, mine)
    fused = codec.exchange(pair[0], pair[1], decoder=False)[d_hat.view]
    return codec.analysis_back(fused, d_hat.view, qp)


def decode_image(codec: ImageCodec, y_hat: LatentTensor, previous: Tensor, d_hat: DisparityMap,
                 opposite: ViewFeatures, qp: int, frame_index: int,
                 own: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    """Mirror of ``encode_image``; returns (X_hat in (0, 1), F_hat at 1/8)."""
    features = own if own is not None else codec.synthesis_front(y_hat, previous, qp)
    mine = features_at(d_hat.view, features, d_hat, frame_index)
    pair = (mine, opposite) if d_hat.view is View.LEFT else (opposite, mine)
    fused = codec.exchange(pair[0], pair[1], decoder=True)[d_hat.view]
    return codec.synthesis_back(fused)
