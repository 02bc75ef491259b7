"""gssc - Disparity-guided stereo semantic codec with Gaussian-splat rendering."""

__version__ = "0.1.0"
__author__ = "gssc developers"
__description__ = "Stereo semantic video codec feeding a feed-forward Gaussian splatting renderer"

__all__ = ["__version__"]
