"""
Per-frame coding of a stereo pair.

The encoder runs a full local decoder: everything that conditions later
planes or frames is rebuilt from integer symbol planes through the same
functions the receiver uses, so both sides stay in lockstep.

Order within one frame::

    disparity hyper + latent (L, R)  ->  decoded disparity D_hat
    image hyper (L, R)               ->  cross-view hyper context
    image latent (L, R)              ->  synthesis with the decoder exchange
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.errors import DimensionError
from ..geometry.camera import VIEWS, CameraRig, View
from ..geometry.disparity import DisparityMap
from ..gaussians.cloud import GaussianCloud, concat_clouds
from ..gaussians.predictor import assemble_cloud, refine
from ..tensor import ops
from ..tensor.tensor import Tensor, no_grad
from .container import FramePayload
from .entropy import (
    ConditionalEntropyModel,
    ParamsForStep,
    SymbolPlane,
    bits_of,
    decode_hyper,
    decode_latent,
    encode_hyper,
    encode_latent,
    estimate_hyper_rate,
    estimate_rate,
    latent_rate_train,
    quantize_infer,
    quantize_train,
)
from .fusion import NONE, cross_view_context, features_at
from .model import GsscModel
from .qp import FRAME_I
from .state import TemporalState
from .transforms import DISPARITY, IMAGE, PAD_MULTIPLE, LatentTensor, crop_frame

logger = logging.getLogger(__name__)


@dataclass
class FrameReconstruction:
    """Decoded outputs of one frame at padded resolution."""

    images: Dict[View, Tensor]
    disparities: Dict[View, DisparityMap]
    disparity_features: Dict[View, Tensor]
    image_features: Dict[View, Tensor]
    state: TemporalState
    planes: Dict[Tuple[View, str], SymbolPlane] = field(default_factory=dict)
    estimated_bits: float = 0.0
    bits: Optional[Tensor] = None


def _params_for(model: ConditionalEntropyModel, hyper: Tensor, temporal: Tensor,
                cross: Optional[Tensor]) -> ParamsForStep:
    def params(step: int, decoded: np.ndarray):
        return model.parameters(hyper, Tensor(decoded, dtype=hyper.dtype), temporal, cross, step)
    return params


class FrameCoder:
    """Encodes and decodes single frames with a shared model."""

    def __init__(self, model: GsscModel):
        self.model = model

    # -- shared steps -------------------------------------------------------

    def _hyper_context(self, entropy: ConditionalEntropyModel,
                       z_planes: Dict[View, SymbolPlane]) -> Dict[View, Tensor]:
        return {v: entropy.hyper_base(z_planes[v].as_tensor()) for v in VIEWS}

    def _cross_context(self, h0: Dict[View, Tensor], disparities: Dict[View, DisparityMap],
                       frame_index: int) -> Dict[View, Optional[Tensor]]:
        """Opposite-view hyper features fused at hyperlatent resolution."""
        model = self.model
        if not model.image_entropy.cross_view:
            return {v: None for v in VIEWS}
        sides = {v: features_at(v, h0[v], disparities[v], frame_index) for v in VIEWS}
        fused = cross_view_context(sides[View.LEFT], sides[View.RIGHT], model.hyper_fusion(),
                                   model.cross_view)
        return {v: model.image_entropy.cross_features(fused[v]) for v in VIEWS}

    def _synthesize(self, y_hat: Dict[View, Tensor], disparities: Dict[View, DisparityMap],
                    state: TemporalState, qp: int) -> Tuple[Dict[View, Tensor], Dict[View, Tensor]]:
        codec = self.model.image
        front = {v: codec.synthesis_front(LatentTensor(y_hat[v], IMAGE, v),
                                          state.image_features[v], qp) for v in VIEWS}
        sides = {v: features_at(v, front[v], disparities[v], state.frame_index) for v in VIEWS}
        fused = codec.exchange(sides[View.LEFT], sides[View.RIGHT], decoder=True)
        images, features = {}, {}
        for v in VIEWS:
            images[v], features[v] = codec.synthesis_back(fused[v])
        return images, features

    def _analyse_images(self, frames: Dict[View, Tensor], disparities: Dict[View, DisparityMap],
                        state: TemporalState, qp: int) -> Dict[View, Tensor]:
        codec = self.model.image
        front = {v: codec.analysis_front(frames[v], state.image_features[v]) for v in VIEWS}
        sides = {v: features_at(v, front[v], disparities[v], state.frame_index) for v in VIEWS}
        fused = codec.exchange(sides[View.LEFT], sides[View.RIGHT], decoder=False)
        return {v: codec.analysis_back(fused[v], v, qp).values for v in VIEWS}

    @staticmethod
    def _check_frames(frames: Dict[View, Tensor]) -> Tuple[int, int]:
        shapes = {frames[v].shape for v in VIEWS}
        if len(shapes) != 1:
            raise DimensionError("left and right frames differ in shape",
                                 details={"shapes": sorted(shapes)})
        _, h, w = frames[View.LEFT].shape
        if h % PAD_MULTIPLE or w % PAD_MULTIPLE:
            raise DimensionError(f"frames must be padded to a multiple of {PAD_MULTIPLE}",
                                 details={"shape": (h, w)})
        return h, w

    # -- inference ----------------------------------------------------------

    def encode_frame(self, frames: Dict[View, Tensor], disparities: Dict[View, DisparityMap],
                     state: TemporalState, qp: int, frame_type: int,
                     qp_offset_index: int = 0) -> Tuple[FramePayload, FrameReconstruction]:
        """Code one padded stereo frame; returns the payload and the local reconstruction."""
        self._check_frames(frames)
        model = self.model
        if frame_type == FRAME_I:
            state = state.reset()
        payload = FramePayload(frame_type, qp_offset_index)
        planes: Dict[Tuple[View, str], SymbolPlane] = {}
        bits = 0.0

        with no_grad():
            d_entropy = model.disparity_entropy
            d_prior = d_entropy.prior
            d_hat, f_hat = {}, {}
            for v in VIEWS:
                y = model.disparity.encode(disparities[v], state.disparity_features[v], qp).values
                z_plane = quantize_infer(d_entropy.hyper_analysis(y))
                hyper = d_entropy.hyper_features(d_entropy.hyper_base(z_plane.as_tensor()))
                temporal = d_entropy.temporal_features(state.disparity_features[v])
                y_plane = quantize_infer(y)
                params = _params_for(d_entropy, hyper, temporal, None)
                payload.blobs[(v, "disp_hyper")] = encode_hyper(z_plane, d_prior)
                payload.blobs[(v, "disp_latent")] = encode_latent(y_plane, params)
                bits += estimate_hyper_rate(z_plane, d_prior) + estimate_rate(y_plane, params)
                planes[(v, "disp_hyper")], planes[(v, "disp_latent")] = z_plane, y_plane
                d_hat[v], f_hat[v] = model.disparity.decode(
                    LatentTensor(y_plane.as_tensor(), DISPARITY, v),
                    state.disparity_features[v], qp)

            i_entropy = model.image_entropy
            i_prior = i_entropy.prior
            latents = self._analyse_images(frames, d_hat, state, qp)
            z_planes = {v: quantize_infer(i_entropy.hyper_analysis(latents[v])) for v in VIEWS}
            h0 = self._hyper_context(i_entropy, z_planes)
            cross = self._cross_context(h0, d_hat, state.frame_index)
            y_hat = {}
            for v in VIEWS:
                hyper = i_entropy.hyper_features(h0[v])
                temporal = i_entropy.temporal_features(state.image_features[v])
                y_plane = quantize_infer(latents[v])
                params = _params_for(i_entropy, hyper, temporal, cross[v])
                payload.blobs[(v, "img_hyper")] = encode_hyper(z_planes[v], i_prior)
                payload.blobs[(v, "img_latent")] = encode_latent(y_plane, params)
                bits += estimate_hyper_rate(z_planes[v], i_prior) + estimate_rate(y_plane, params)
                planes[(v, "img_hyper")], planes[(v, "img_latent")] = z_planes[v], y_plane
                y_hat[v] = y_plane.as_tensor()

            images, features = self._synthesize(y_hat, d_hat, state, qp)

        logger.info(f"Encoded frame {state.frame_index} (type {'IP'[frame_type]}, QP {qp}): "
                    f"{payload.payload_bytes} bytes, estimate {bits / 8:.1f}")
        return payload, FrameReconstruction(images, d_hat, f_hat, features,
                                            state.advance(f_hat, features), planes, bits)

    def decode_frame(self, payload: FramePayload, state: TemporalState, qp: int,
                     height: int, width: int) -> FrameReconstruction:
        """Rebuild one frame from its payload; ``height``/``width`` are padded dims."""
        model = self.model
        if payload.frame_type == FRAME_I:
            state = state.reset()
        shapes = model.latent_shapes(height, width)
        planes: Dict[Tuple[View, str], SymbolPlane] = {}

        with no_grad():
            d_entropy = model.disparity_entropy
            d_hat, f_hat = {}, {}
            for v in VIEWS:
                z_plane = decode_hyper(payload.blob(v, "disp_hyper"), shapes["disp_hyper"],
                                       d_entropy.prior)
                hyper = d_entropy.hyper_features(d_entropy.hyper_base(z_plane.as_tensor()))
                temporal = d_entropy.temporal_features(state.disparity_features[v])
                y_plane = decode_latent(payload.blob(v, "disp_latent"), shapes["disp_latent"],
                                        _params_for(d_entropy, hyper, temporal, None))
                planes[(v, "disp_hyper")], planes[(v, "disp_latent")] = z_plane, y_plane
                d_hat[v], f_hat[v] = model.disparity.decode(
                    LatentTensor(y_plane.as_tensor(), DISPARITY, v),
                    state.disparity_features[v], qp)

            i_entropy = model.image_entropy
            z_planes = {v: decode_hyper(payload.blob(v, "img_hyper"), shapes["img_hyper"],
                                        i_entropy.prior) for v in VIEWS}
            h0 = self._hyper_context(i_entropy, z_planes)
            cross = self._cross_context(h0, d_hat, state.frame_index)
            y_hat = {}
            for v in VIEWS:
                hyper = i_entropy.hyper_features(h0[v])
                temporal = i_entropy.temporal_features(state.image_features[v])
                y_plane = decode_latent(payload.blob(v, "img_latent"), shapes["img_latent"],
                                        _params_for(i_entropy, hyper, temporal, cross[v]))
                planes[(v, "img_hyper")], planes[(v, "img_latent")] = z_planes[v], y_plane
                y_hat[v] = y_plane.as_tensor()

            images, features = self._synthesize(y_hat, d_hat, state, qp)

        logger.debug(f"Decoded frame {state.frame_index} ({payload.payload_bytes} bytes)")
        return FrameReconstruction(images, d_hat, f_hat, features,
                                   state.advance(f_hat, features), planes)

    # -- training -----------------------------------------------------------

    def forward_train(self, frames: Dict[View, Tensor], disparities: Dict[View, DisparityMap],
                      state: TemporalState, qp: int, rng: np.random.Generator,
                      frame_type: int = FRAME_I) -> FrameReconstruction:
        """Differentiable frame pass with uniform-noise quantization and a bits tensor."""
        self._check_frames(frames)
        model = self.model
        if frame_type == FRAME_I:
            state = state.reset()
        terms = []

        d_entropy = model.disparity_entropy
        d_hat, f_hat = {}, {}
        for v in VIEWS:
            y = model.disparity.encode(disparities[v], state.disparity_features[v], qp).values
            z_tilde = quantize_train(d_entropy.hyper_analysis(y), rng)
            hyper = d_entropy.hyper_features(d_entropy.hyper_base(z_tilde))
            temporal = d_entropy.temporal_features(state.disparity_features[v])
            y_tilde = quantize_train(y, rng)
            terms.append(bits_of(d_entropy.prior.likelihood(z_tilde)))
            terms.append(latent_rate_train(d_entropy, y_tilde, hyper, temporal, None))
            d_hat[v], f_hat[v] = model.disparity.decode(LatentTensor(y_tilde, DISPARITY, v),
                                                        state.disparity_features[v], qp)

        i_entropy = model.image_entropy
        latents = self._analyse_images(frames, d_hat, state, qp)
        z_tilde = {v: quantize_train(i_entropy.hyper_analysis(latents[v]), rng) for v in VIEWS}
        h0 = {v: i_entropy.hyper_base(z_tilde[v]) for v in VIEWS}
        cross = self._cross_context(h0, d_hat, state.frame_index)
        y_tilde = {}
        for v in VIEWS:
            hyper = i_entropy.hyper_features(h0[v])
            temporal = i_entropy.temporal_features(state.image_features[v])
            y_tilde[v] = quantize_train(latents[v], rng)
            terms.append(bits_of(i_entropy.prior.likelihood(z_tilde[v])))
            terms.append(latent_rate_train(i_entropy, y_tilde[v], hyper, temporal, cross[v]))

        images, features = self._synthesize(y_tilde, d_hat, state, qp)
        bits = terms[0]
        for term in terms[1:]:
            bits = ops.add(bits, term)
        return FrameReconstruction(images, d_hat, f_hat, features,
                                   state.advance(f_hat, features), bits=bits)


def encode_frame(model: GsscModel, frames: Dict[View, Tensor],
                 disparities: Dict[View, DisparityMap], state: TemporalState, qp: int,
                 frame_type: int, qp_offset_index: int = 0) -> Tuple[FramePayload, FrameReconstruction]:
    return FrameCoder(model).encode_frame(frames, disparities, state, qp, frame_type,
                                          qp_offset_index)


def decode_frame(model: GsscModel, payload: FramePayload, state: TemporalState, qp: int,
                 height: int, width: int) -> FrameReconstruction:
    return FrameCoder(model).decode_frame(payload, state, qp, height, width)


def _crop_disparity(d: DisparityMap, height: int, width: int) -> DisparityMap:
    return DisparityMap(crop_frame(d.values, height, width), d.view, d.valid[:height, :width])


def predict_clouds(model: GsscModel, recon: FrameReconstruction, rig: CameraRig,
                   masks: Optional[Dict[View, np.ndarray]] = None,
                   residuals: Optional[bool] = None) -> GaussianCloud:
    """Gaussians of both views from decoded outputs, cropped to the camera size.

    ``residuals`` overrides the checkpoint setting, as signalled by a stream header.
    """
    predictor = model.predictor
    config = predictor.config
    if residuals is not None and residuals != config.residuals:
        config = replace(config, residuals=residuals)
    clouds = []
    for v in VIEWS:
        cam = rig.camera(v)
        h, w = cam.height, cam.width
        shared = predictor.trunk(recon.disparity_features[v], recon.image_features[v], rig)
        attributes = predictor.attributes(shared)
        maps = predictor.residuals(shared)
        for name in ("scale", "rotation", "opacity"):
            setattr(attributes, name, crop_frame(getattr(attributes, name), h, w))
        maps.color = crop_frame(maps.color, h, w)
        maps.depth = crop_frame(maps.depth, h, w)
        x_hat = crop_frame(recon.images[v], h, w)
        color, depth, valid = refine(x_hat, _crop_disparity(recon.disparities[v], h, w),
                                     maps, rig, config)
        mask = valid if masks is None else valid & masks[v]
        clouds.append(assemble_cloud(color, depth, attributes, cam, mask, v))
    return concat_clouds(clouds)
