"""
Gaussian splatting renderer and image I/O.
"""

from .image_io import load_frames, read_image, read_ppm, write_image, write_ppm
from .rasterizer import (
    RenderSettings,
    RenderState,
    SplatFragment,
    apply_thread_limit,
    project_gaussian,
    rasterize,
    render,
    render_backward,
    render_oracle,
    sort_fragments,
)

__all__ = [
    "load_frames",
    "read_image",
    "read_ppm",
    "write_image",
    "write_ppm",
    "RenderSettings",
    "RenderState",
    "SplatFragment",
    "apply_thread_limit",
    "project_gaussian",
    "rasterize",
    "render",
    "render_backward",
    "render_oracle",
    "sort_fragments",
]
