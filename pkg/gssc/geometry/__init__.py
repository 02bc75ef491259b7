"""
Cameras, disparity/depth conversion, warping and unprojection.
"""

from .camera import VIEWS, CameraModel, CameraRig, View, load_target_cameras, rectified_rig
from .disparity import (
    DISPARITY_EPS,
    DisparityMap,
    depth_to_disparity,
    disparity_to_depth,
    pool_disparity,
    warp,
)
from .projection import project, unproject, unproject_pixels

__all__ = [
    "VIEWS",
    "CameraModel",
    "CameraRig",
    "View",
    "load_target_cameras",
    "rectified_rig",
    "DISPARITY_EPS",
    "DisparityMap",
    "depth_to_disparity",
    "disparity_to_depth",
    "pool_disparity",
    "warp",
    "project",
    "unproject",
    "unproject_pixels",
]
