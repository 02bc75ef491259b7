"""
Orchestration: run configuration, synthetic scenes, sequence coding,
training and evaluation.
"""

from .config import RunConfig, load_config, read_config_values
from .evaluate import (
    FrameQuality,
    StreamEvaluation,
    TimingReport,
    evaluate_images,
    evaluate_stream,
    rd_sweep,
    spearman,
    time_pipeline,
)
from .sequence import (
    DecodeResult,
    EncodeResult,
    decode_and_render,
    decode_sequence,
    encode_sequence,
)
from .synthetic import PlaneSpec, SceneSpec, SphereSpec, SyntheticDataset, load_dataset, make_synthetic
from .training import TrainResult, composite_loss, distortion, smoothed, source_loss, train_toy

__all__ = [
    "RunConfig",
    "load_config",
    "read_config_values",
    "FrameQuality",
    "StreamEvaluation",
    "TimingReport",
    "evaluate_images",
    "evaluate_stream",
    "rd_sweep",
    "spearman",
    "time_pipeline",
    "DecodeResult",
    "EncodeResult",
    "decode_and_render",
    "decode_sequence",
    "encode_sequence",
    "PlaneSpec",
    "SceneSpec",
    "SphereSpec",
    "SyntheticDataset",
    "load_dataset",
    "make_synthetic",
    "TrainResult",
    "composite_loss",
    "distortion",
    "smoothed",
    "source_loss",
    "train_toy",
]
