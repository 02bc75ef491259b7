"""
Gaussian attribute prediction and cloud assembly.
"""

from .cloud import ATTRIBUTES, GaussianCloud, concat_clouds, empty_cloud
from .predictor import (
    AttributeMaps,
    GaussianConfig,
    GaussianPredictor,
    ResidualMaps,
    assemble_cloud,
    depth_domain,
    predict_attributes,
    predict_residuals,
    refine,
)

__all__ = [
    "ATTRIBUTES",
    "GaussianCloud",
    "concat_clouds",
    "empty_cloud",
    "AttributeMaps",
    "GaussianConfig",
    "GaussianPredictor",
    "ResidualMaps",
    "assemble_cloud",
    "depth_domain",
    "predict_attributes",
    "predict_residuals",
    "refine",
]
