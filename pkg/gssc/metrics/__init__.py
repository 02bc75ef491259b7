"""
Quality, rate and BD-rate metrics.
"""

from .bdrate import bd_rate
from .quality import l1_loss, psnr, render_distortion, ssim, ssim_loss, ssim_tensor
from .rate import RateReport, bpp, frame_bpp
from .report import RdPoint, emit_rd, read_rd

__all__ = [
    "bd_rate",
    "l1_loss",
    "psnr",
    "render_distortion",
    "ssim",
    "ssim_loss",
    "ssim_tensor",
    "RateReport",
    "bpp",
    "frame_bpp",
    "RdPoint",
    "emit_rd",
    "read_rd",
]
