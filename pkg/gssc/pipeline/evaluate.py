"""
Evaluation: novel-view quality against ground truth, rate per stream,
QP sweeps and an informative timing report.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil
from scipy.stats import spearmanr

from ..codec.container import CodedStream
from ..codec.model import GsscModel
from ..codec.qp import QP_PRESETS
from ..core.errors import DatasetError
from ..metrics.quality import psnr, ssim
from ..metrics.rate import bpp
from ..metrics.report import RdPoint
from .config import RunConfig
from .sequence import DecodeResult, decode_and_render, encode_sequence
from .synthetic import SyntheticDataset

logger = logging.getLogger(__name__)


@dataclass
class FrameQuality:
    psnr: float
    ssim: float


@dataclass
class StreamEvaluation:
    """Quality per frame (averaged over targets) and the stream's rate."""

    frames: List[FrameQuality]
    bpp: float
    per_frame_bpp: List[float] = field(default_factory=list)

    @property
    def psnr(self) -> float:
        return _mean([f.psnr for f in self.frames])

    @property
    def ssim(self) -> float:
        return _mean([f.ssim for f in self.frames])

    def point(self, label: str) -> RdPoint:
        return RdPoint(label, self.bpp, self.psnr, self.ssim)


def _mean(values: Sequence[float]) -> float:
    if not values:
        return float("nan")
    if any(math.isinf(v) for v in values):
        return float("inf")
    return float(np.mean(values))


def evaluate_images(renders: Sequence[Sequence[np.ndarray]],
                    ground_truth: Sequence[Sequence[np.ndarray]]) -> List[FrameQuality]:
    """Per-frame PSNR/SSIM averaged over target cameras.

    Both arguments are indexed [target][frame].
    """
    if len(renders) != len(ground_truth):
        raise DatasetError("target camera counts differ",
                           details={"renders": len(renders), "ground_truth": len(ground_truth)})
    if not renders:
        return []
    counts = {len(seq) for seq in list(renders) + list(ground_truth)}
    if len(counts) != 1:
        raise DatasetError("frame counts differ between renders and ground truth",
                           details={"counts": sorted(counts)})
    frames = []
    for t in range(counts.pop()):
        p = [psnr(r[t], g[t]) for r, g in zip(renders, ground_truth)]
        s = [ssim(r[t], g[t]) for r, g in zip(renders, ground_truth)]
        frames.append(FrameQuality(_mean(p), float(np.mean(s))))
    return frames


def evaluate_stream(stream: CodedStream, decoded: DecodeResult,
                    ground_truth: Sequence[Sequence[np.ndarray]]) -> StreamEvaluation:
    if ground_truth and len(ground_truth[0]) != len(stream.frames):
        raise DatasetError("ground truth and stream frame counts differ",
                           details={"stream": len(stream.frames),
                                    "ground_truth": len(ground_truth[0])})
    rate = bpp(stream)
    return StreamEvaluation(evaluate_images(decoded.renders, ground_truth), rate.average,
                            rate.per_frame)


def rd_sweep(model: GsscModel, dataset: SyntheticDataset, config: RunConfig,
             qps: Sequence[int] = QP_PRESETS, label: str = "gssc",
             use_ground_truth_disparity: bool = False) -> List[RdPoint]:
    """Encode, decode and render the dataset once per base QP."""
    points = []
    has_gt = all(dataset.disparities[v] for v in dataset.disparities)
    gt = dataset.disparities if use_ground_truth_disparity and has_gt else None
    for qp in qps:
        run = replace(config, qp=int(qp))
        encoded = encode_sequence(dataset.frames, dataset.rig, run, model, gt)
        decoded = decode_and_render(encoded.stream, model, dataset.rig.targets, run.background)
        evaluation = evaluate_stream(encoded.stream, decoded, dataset.targets)
        point = evaluation.point(f"{label}@{qp}")
        logger.info(f"QP {qp}: {point.bpp:.4f} bpp, {point.psnr:.2f} dB, SSIM {point.ssim:.4f}")
        points.append(point)
    return points


@dataclass
class TimingReport:
    """Wall-clock per-frame transmitter/receiver time plus process resources."""

    tx_ms: float
    rx_ms: float
    cpu_seconds: float
    peak_rss_mb: float

    @property
    def fps(self) -> float:
        """Pipelined system rate, limited by the slower side."""
        slowest = max(self.tx_ms, self.rx_ms)
        return 1000.0 / slowest if slowest > 0 else float("inf")

    def to_dict(self) -> Dict[str, float]:
        return {"tx_ms": self.tx_ms, "rx_ms": self.rx_ms, "fps": self.fps,
                "cpu_seconds": self.cpu_seconds, "peak_rss_mb": self.peak_rss_mb}


def _peak_rss(process: psutil.Process) -> int:
    info = process.memory_info()
    return int(getattr(info, "peak_wset", 0) or info.rss)


def time_pipeline(model: GsscModel, dataset: SyntheticDataset,
                  config: RunConfig) -> Tuple[TimingReport, StreamEvaluation]:
    """Run encode then decode+render once, timing both sides per frame."""
    process = psutil.Process()
    cpu_start = process.cpu_times()
    peak = _peak_rss(process)
    wall = time.perf_counter()

    encoded = encode_sequence(dataset.frames, dataset.rig, config, model)
    peak = max(peak, _peak_rss(process))
    decoded = decode_and_render(encoded.stream, model, dataset.rig.targets, config.background)
    peak = max(peak, _peak_rss(process))

    cpu_end = process.cpu_times()
    cpu = (cpu_end.user - cpu_start.user) + (cpu_end.system - cpu_start.system)
    report = TimingReport(float(np.mean(encoded.timings)), float(np.mean(decoded.timings)),
                          cpu, peak / (1024.0 * 1024.0))
    logger.info(f"Timing over {encoded.frame_count} frames: Tx {report.tx_ms:.1f} ms, "
                f"Rx {report.rx_ms:.1f} ms, {report.fps:.2f} fps "
                f"({time.perf_counter() - wall:.1f} s wall)")
    evaluation = evaluate_stream(encoded.stream, decoded, dataset.targets)
    return report, evaluation


def spearman(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Rank correlation used to check the trend of an RD sweep."""
    if len(x) != len(y) or len(x) < 2:
        return None
    rho = float(spearmanr(x, y)[0])
    return None if np.isnan(rho) else rho
