"""
Bjontegaard-Delta rate between two rate-quality curves.

Log10 rate is fitted as a function of quality for each curve, either with
the classic cubic polynomial or with a piecewise-cubic Hermite (PCHIP)
interpolant, and both fits are integrated over the overlapping quality
range. The mean log-rate difference gives the percentage.
"""

import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..core.errors import BdRateError, ValidationError
from .report import RdPoint

logger = logging.getLogger(__name__)

METRICS = ("psnr", "ssim")
METHODS = ("cubic", "pchip")
MIN_POINTS = 4


def _curve(points: Sequence[RdPoint], metric: str) -> Tuple[np.ndarray, np.ndarray]:
    if len(points) < MIN_POINTS:
        raise BdRateError(f"BD-rate needs at least {MIN_POINTS} points per curve",
                          details={"points": len(points)})
    rate = np.array([p.bpp for p in points], dtype=np.float64)
    quality = np.array([getattr(p, metric) for p in points], dtype=np.float64)
    if not np.all(np.isfinite(quality)) or np.any(rate <= 0):
        raise BdRateError("BD-rate needs finite quality and positive rate values")
    order = np.argsort(rate, kind="stable")
    rate, quality = rate[order], quality[order]
    if np.any(np.diff(quality) <= 0) or np.any(np.diff(rate) <= 0):
        raise BdRateError("quality must increase strictly with rate",
                          details={"rate": rate.tolist(), "quality": quality.tolist()})
    return np.log10(rate), quality


def _integral(log_rate: np.ndarray, quality: np.ndarray, lo: float, hi: float, method: str) -> float:
    if method == "cubic":
        poly = np.polyint(np.polyfit(quality, log_rate, 3))
        return float(np.polyval(poly, hi) - np.polyval(poly, lo))
    return float(PchipInterpolator(quality, log_rate).integrate(lo, hi))


def bd_rate(anchor: Sequence[RdPoint], test: Sequence[RdPoint], metric: str = "psnr",
            method: str = "cubic") -> float:
    """Average rate difference of ``test`` against ``anchor`` at equal quality, in percent."""
    if metric not in METRICS:
        raise ValidationError(f"unknown BD-rate metric '{metric}'", details={"metrics": METRICS})
    if method not in METHODS:
        raise ValidationError(f"unknown BD-rate method '{method}'", details={"methods": METHODS})
    log_a, q_a = _curve(anchor, metric)
    log_t, q_t = _curve(test, metric)
    lo = max(q_a.min(), q_t.min())
    hi = min(q_a.max(), q_t.max())
    if hi <= lo:
        raise BdRateError("quality ranges of the two curves do not overlap",
                          details={"anchor": (q_a.min(), q_a.max()), "test": (q_t.min(), q_t.max())})
    diff = (_integral(log_t, q_t, lo, hi, method) - _integral(log_a, q_a, lo, hi, method)) / (hi - lo)
    result = (10.0 ** diff - 1.0) * 100.0
    logger.debug(f"BD-rate ({metric}, {method}) over [{lo:.4f}, {hi:.4f}]: {result:.4f}%")
    return result
