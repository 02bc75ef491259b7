"""
Sequence-level transmitter and receiver.

The transmitter estimates disparity, codes every frame with the temporal
state carried forward and writes one container. The receiver checks the
checkpoint hash, replays the same state updates, predicts Gaussians from
both views and renders the requested target cameras.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..codec.coder import FrameCoder, FrameReconstruction, predict_clouds
from ..codec.container import CodedStream, StreamHeader, read_container, write_container
from ..codec.model import GsscModel, check_stream_hash
from ..codec.qp import QpSchedule, effective_qp, offset_qp
from ..codec.state import TemporalState
from ..codec.transforms import crop_frame, pad_frame, padded_size
from ..core.errors import CheckpointMismatchError, DatasetError, DimensionError
from ..geometry.camera import VIEWS, CameraModel, CameraRig, View
from ..geometry.disparity import DisparityMap
from ..render.rasterizer import render
from ..tensor.tensor import Tensor, default_dtype, no_grad
from .config import RunConfig

logger = logging.getLogger(__name__)

Frames = Dict[View, List[np.ndarray]]


@dataclass
class EncodeResult:
    """Container bytes plus what the transmitter saw while producing them."""

    stream: CodedStream
    data: bytes
    reconstructions: List[FrameReconstruction] = field(default_factory=list)
    states: List[TemporalState] = field(default_factory=list)
    timings: List[float] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return len(self.stream.frames)


@dataclass
class DecodeResult:
    """Decoded source views (cropped), target renders and per-frame receiver state."""

    images: Dict[View, List[np.ndarray]]
    renders: List[List[np.ndarray]]
    states: List[TemporalState] = field(default_factory=list)
    reconstructions: List[FrameReconstruction] = field(default_factory=list)
    timings: List[float] = field(default_factory=list)


def _check_sequence(frames: Frames) -> int:
    counts = {v: len(frames[v]) for v in VIEWS}
    if counts[View.LEFT] != counts[View.RIGHT]:
        raise DatasetError("left and right sequences differ in length", details=counts)
    if counts[View.LEFT] == 0:
        raise DatasetError("sequence has no frames")
    shapes = {np.shape(f) for v in VIEWS for f in frames[v]}
    if len(shapes) != 1:
        raise DimensionError("all frames must share one shape", details={"shapes": sorted(shapes)})
    shape = shapes.pop()
    if len(shape) != 3 or shape[0] != 3:
        raise DimensionError("frames must be (3, H, W) arrays", details={"shape": shape})
    return counts[View.LEFT]


def frame_tensor(frame: np.ndarray) -> Tensor:
    """Edge-padded (3, H, W) tensor in the working precision."""
    return Tensor(pad_frame(np.asarray(frame, dtype=np.float64)), dtype=default_dtype())


def disparity_from_array(values: np.ndarray, view: View,
                         mask: Optional[np.ndarray] = None) -> DisparityMap:
    """Pad a (H, W) disparity map; the padding is marked invalid."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    padded = pad_frame(values[None])
    valid = np.zeros(padded.shape[1:], dtype=bool)
    valid[:h, :w] = np.isfinite(values) & (values >= 0) if mask is None else mask
    return DisparityMap(Tensor(padded, dtype=default_dtype()), view, valid)


def estimate_disparities(model: GsscModel, frames: Dict[View, Tensor]) -> Dict[View, DisparityMap]:
    """Final refinement step of the stereo estimator for both views."""
    with no_grad():
        estimates = model.stereo.estimate(frames[View.LEFT], frames[View.RIGHT])
    return {v: estimates[v][-1] for v in VIEWS}


def initial_state(model: GsscModel, height: int, width: int) -> TemporalState:
    return TemporalState.initial(model.config.dims.features, height, width)


def encode_sequence(frames: Frames, rig: CameraRig, config: RunConfig, model: GsscModel,
                    disparities: Optional[Frames] = None) -> EncodeResult:
    """Code a rectified stereo sequence into one container.

    Args:
        frames: (3, H, W) arrays in [0, 1] per view and time
        rig: Source cameras; their size must match the frames
        config: QP schedule and ablation switches
        model: Codec; its factorized-prior tables are frozen here
        disparities: Optional (H, W) disparities replacing the stereo estimate

    Returns:
        EncodeResult with the container bytes and the local reconstructions
    """
    count = _check_sequence(frames)
    _, height, width = np.shape(frames[View.LEFT][0])
    if (rig.left.width, rig.left.height) != (width, height):
        raise DimensionError("camera size does not match the frames",
                             details={"camera": rig.left.size, "frames": (width, height)})
    if config.cross_view != model.cross_view:
        raise CheckpointMismatchError(
            f"run asks for cross-view mode '{config.cross_view}' but the checkpoint "
            f"was built for '{model.cross_view}'")
    if config.residuals != model.predictor.config.residuals:
        logger.info(f"Residual refinement {'on' if config.residuals else 'off'} for this stream")

    schedule = config.schedule()
    checkpoint_hash = model.fingerprint()
    ph, pw = padded_size(height, width)
    coder = FrameCoder(model)
    state = initial_state(model, ph, pw)
    result = EncodeResult(CodedStream(StreamHeader(width, height, count, schedule.base_qp,
                                                   schedule.pattern, schedule.gop, rig,
                                                   checkpoint_hash, config.cross_view,
                                                   config.residuals)), b"")

    for t in range(count):
        start = time.perf_counter()
        tensors = {v: frame_tensor(frames[v][t]) for v in VIEWS}
        if disparities is not None:
            d = {v: disparity_from_array(disparities[v][t], v) for v in VIEWS}
        else:
            d = estimate_disparities(model, tensors)
        qp = effective_qp(schedule, t)
        payload, recon = coder.encode_frame(tensors, d, state, qp, schedule.frame_type(t),
                                            schedule.offset_index(t))
        state = recon.state
        result.stream.frames.append(payload)
        result.reconstructions.append(recon)
        result.states.append(state)
        result.timings.append((time.perf_counter() - start) * 1000.0)

    result.data = write_container(result.stream.header, result.stream.frames)
    logger.info(f"Encoded {count} frames at base QP {schedule.base_qp}: "
                f"{len(result.data)} bytes (hash {checkpoint_hash:016x})")
    return result


def _as_stream(stream) -> CodedStream:
    if isinstance(stream, (bytes, bytearray)):
        return read_container(bytes(stream))
    return stream


def decode_sequence(stream, model: GsscModel) -> List[FrameReconstruction]:
    """Decode every frame without rendering."""
    return decode_and_render(stream, model, []).reconstructions


def decode_and_render(stream, model: GsscModel, targets: Sequence[CameraModel],
                      background: Sequence[float] = (0.0, 0.0, 0.0),
                      masks: Optional[Frames] = None) -> DecodeResult:
    """Decode a container and render every target camera for every frame.

    ``stream`` is a CodedStream or raw container bytes.
    """
    coded = _as_stream(stream)
    header = coded.header
    check_stream_hash(model, header.checkpoint_hash)
    if header.cross_view != model.cross_view:
        raise CheckpointMismatchError(
            f"stream uses cross-view mode '{header.cross_view}' but the checkpoint "
            f"was built for '{model.cross_view}'")
    schedule = QpSchedule(header.base_qp, header.pattern, header.gop)
    ph, pw = padded_size(header.height, header.width)
    coder = FrameCoder(model)
    state = initial_state(model, ph, pw)
    rig = header.rig
    result = DecodeResult({v: [] for v in VIEWS}, [[] for _ in targets])

    for t, payload in enumerate(coded.frames):
        start = time.perf_counter()
        qp = offset_qp(schedule, payload.qp_offset_index)
        recon = coder.decode_frame(payload, state, qp, ph, pw)
        state = recon.state
        for v in VIEWS:
            image = crop_frame(recon.images[v], header.height, header.width)
            result.images[v].append(np.clip(image.data.astype(np.float64), 0.0, 1.0))
        if targets:
            frame_masks = None if masks is None else {v: masks[v][t] for v in VIEWS}
            with no_grad():
                cloud = predict_clouds(model, recon, rig, frame_masks, residuals=header.residuals)
                for k, cam in enumerate(targets):
                    result.renders[k].append(render(cloud, cam, background).data.astype(np.float64))
        result.reconstructions.append(recon)
        result.states.append(state)
        result.timings.append((time.perf_counter() - start) * 1000.0)

    logger.info(f"Decoded {len(coded.frames)} frames, rendered {len(targets)} target views")
    return result

