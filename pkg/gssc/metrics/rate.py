"""
Bits-per-pixel accounting over the combined pixels of both views.
"""

from dataclasses import dataclass
from typing import List

from ..codec.container import CodedStream, FramePayload


@dataclass
class RateReport:
    per_frame: List[float]
    average: float
    payload_bytes: int


def frame_bpp(frame: FramePayload, width: int, height: int) -> float:
    return 8.0 * frame.payload_bytes / (2.0 * width * height)


def bpp(stream: CodedStream) -> RateReport:
    """Per-frame and average bpp using the original (unpadded) frame size."""
    header = stream.header
    per_frame = [frame_bpp(f, header.width, header.height) for f in stream.frames]
    average = sum(per_frame) / len(per_frame) if per_frame else 0.0
    return RateReport(per_frame, average, sum(f.payload_bytes for f in stream.frames))
