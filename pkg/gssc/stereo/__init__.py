"""
Stereo disparity estimation.
"""

from .estimator import (
    SENTINEL,
    CostVolume,
    StereoConfig,
    StereoEstimator,
    build_cost_volume,
    cost_lookup,
    disparity_loss,
    extract_stereo_features,
    refine_disparity,
    soft_argmin,
    stereo_loss,
    upsample_disparity,
)

__all__ = [
    "SENTINEL",
    "CostVolume",
    "StereoConfig",
    "StereoEstimator",
    "build_cost_volume",
    "cost_lookup",
    "disparity_loss",
    "extract_stereo_features",
    "refine_disparity",
    "soft_argmin",
    "stereo_loss",
    "upsample_disparity",
]
