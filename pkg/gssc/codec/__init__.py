"""
Disparity and image stream coding: transforms, fusion, entropy models,
the range coder and the container.
"""

from .coder import (
    FrameCoder,
    FrameReconstruction,
    decode_frame,
    encode_frame,
    predict_clouds,
)
from .container import (
    BLOB_ORDER,
    CodedStream,
    FramePayload,
    StreamHeader,
    frame_overhead,
    header_size,
    read_container,
    write_container,
)
from .entropy import (
    ConditionalEntropyModel,
    FactorizedPrior,
    SymbolPlane,
    decode_latent,
    encode_latent,
    estimate_rate,
    gaussian_pmf,
    quantize_infer,
    quantize_train,
)
from .fusion import (
    FUSION,
    MODES,
    NONE,
    WARP,
    ConfidenceMap,
    consistency_confidence,
    cross_view_context,
    fuse_features,
)
from .model import GsscModel, ModelConfig, check_stream_hash
from .qp import (
    FRAME_I,
    FRAME_P,
    QP_PRESETS,
    QpSchedule,
    effective_qp,
    parse_pattern,
    qp_to_lambda,
    resolve_qp,
)
from .range_coder import range_decode, range_encode
from .state import TemporalState
from .transforms import CodecDims, crop_frame, pad_frame, padded_size

__all__ = [
    "FrameCoder",
    "FrameReconstruction",
    "decode_frame",
    "encode_frame",
    "predict_clouds",
    "BLOB_ORDER",
    "CodedStream",
    "FramePayload",
    "StreamHeader",
    "frame_overhead",
    "header_size",
    "read_container",
    "write_container",
    "ConditionalEntropyModel",
    "FactorizedPrior",
    "SymbolPlane",
    "decode_latent",
    "encode_latent",
    "estimate_rate",
    "gaussian_pmf",
    "quantize_infer",
    "quantize_train",
    "FUSION",
    "MODES",
    "NONE",
    "WARP",
    "ConfidenceMap",
    "consistency_confidence",
    "cross_view_context",
    "fuse_features",
    "GsscModel",
    "ModelConfig",
    "check_stream_hash",
    "FRAME_I",
    "FRAME_P",
    "QP_PRESETS",
    "QpSchedule",
    "effective_qp",
    "parse_pattern",
    "qp_to_lambda",
    "resolve_qp",
    "range_decode",
    "range_encode",
    "TemporalState",
    "CodecDims",
    "crop_frame",
    "pad_frame",
    "padded_size",
]
