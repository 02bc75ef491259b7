"""
The GSSC container.

Layout (little-endian)::

    magic "GSSC", u8 version, u8 flags, [u64 checkpoint hash if flags bit 0],
    u16 width, u16 height, u16 frame_count, u8 base_qp,
    u8 pattern_len, pattern bytes, u8 gop_len,
    camera block: per view (L, R) 4 x f32 intrinsics + 12 x f32 extrinsics,
    f32 baseline,
    frames: u8 frame_type, u8 qp_offset_index, 8 x (u32 length + payload)

Flags: bit 0 checkpoint hash present, bits 1-2 cross-view mode
(0 fusion, 1 warp, 2 none), bit 3 residual refinement disabled.
"""

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.errors import CorruptStreamError, FormatError, ValidationError
from ..geometry.camera import CameraModel, CameraRig, View

MAGIC = b"GSSC"
VERSION = 1

FLAG_HASH = 0x01
FLAG_NO_RESIDUALS = 0x08
CROSS_VIEW_MODES = ("fusion", "warp", "none")

BLOB_KINDS = ("disp_hyper", "disp_latent", "img_hyper", "img_latent")
BLOB_ORDER: Tuple[Tuple[View, str], ...] = tuple(
    (view, kind) for view in (View.LEFT, View.RIGHT) for kind in BLOB_KINDS)

_CAMERA_FLOATS = 16


@dataclass
class StreamHeader:
    """Everything the receiver needs before the first frame."""

    width: int
    height: int
    frame_count: int
    base_qp: int
    pattern: Tuple[int, ...]
    gop: int
    rig: CameraRig
    checkpoint_hash: Optional[int] = None
    cross_view: str = "fusion"
    residuals: bool = True
    version: int = VERSION

    @property
    def flags(self) -> int:
        if self.cross_view not in CROSS_VIEW_MODES:
            raise ValidationError(f"unknown cross-view mode '{self.cross_view}'")
        flags = CROSS_VIEW_MODES.index(self.cross_view) << 1
        if self.checkpoint_hash is not None:
            flags |= FLAG_HASH
        if not self.residuals:
            flags |= FLAG_NO_RESIDUALS
        return flags


@dataclass
class FramePayload:
    """Coded data of one stereo frame."""

    frame_type: int
    qp_offset_index: int
    blobs: Dict[Tuple[View, str], bytes] = field(default_factory=dict)

    def blob(self, view: View, kind: str) -> bytes:
        return self.blobs.get((view, kind), b"")

    @property
    def payload_bytes(self) -> int:
        return sum(len(b) for b in self.blobs.values())


@dataclass
class CodedStream:
    header: StreamHeader
    frames: List[FramePayload] = field(default_factory=list)


def _camera_floats(cam: CameraModel) -> List[float]:
    return [cam.fx, cam.fy, cam.cx, cam.cy] + list(cam.world_to_camera.reshape(-1))


def _camera_from_floats(values: Tuple[float, ...], width: int, height: int) -> CameraModel:
    return CameraModel(values[0], values[1], values[2], values[3], width, height,
                       np.asarray(values[4:], dtype=np.float64).reshape(3, 4))


def header_size(header: StreamHeader) -> int:
    fixed = 4 + 1 + 1 + 2 + 2 + 2 + 1 + 1 + 1 + 4 * (2 * _CAMERA_FLOATS + 1)
    return fixed + len(header.pattern) + (8 if header.checkpoint_hash is not None else 0)


def frame_overhead() -> int:
    return 2 + 4 * len(BLOB_ORDER)


def write_container(header: StreamHeader, frames: List[FramePayload]) -> bytes:
    if len(frames) != header.frame_count:
        raise ValidationError("frame_count does not match the frame list",
                              details={"header": header.frame_count, "frames": len(frames)})
    if not (0 < header.width < 1 << 16 and 0 < header.height < 1 << 16):
        raise ValidationError("frame size does not fit the container")
    out = bytearray()
    out += struct.pack("<4sBB", MAGIC, header.version, header.flags)
    if header.checkpoint_hash is not None:
        out += struct.pack("<Q", header.checkpoint_hash)
    out += struct.pack("<HHHB", header.width, header.height, header.frame_count, header.base_qp)
    out += struct.pack("<B", len(header.pattern)) + bytes(header.pattern)
    out += struct.pack("<B", header.gop)
    for view in (View.LEFT, View.RIGHT):
        out += struct.pack(f"<{_CAMERA_FLOATS}f", *_camera_floats(header.rig.camera(view)))
    out += struct.pack("<f", header.rig.baseline)

    for frame in frames:
        out += struct.pack("<BB", frame.frame_type, frame.qp_offset_index)
        for key in BLOB_ORDER:
            blob = frame.blobs.get(key, b"")
            out += struct.pack("<I", len(blob)) + blob
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptStreamError(f"length overrun while reading {what}",
                                     details={"offset": self.pos, "need": n,
                                              "size": len(self.data)})
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_container(data: bytes) -> CodedStream:
    """Parse a container; any structural defect raises a FormatError subtype."""
    reader = _Reader(data)
    if len(data) < 6:
        raise FormatError("stream too short for a GSSC header")
    magic, version, flags = reader.unpack("<4sBB", "magic")
    if magic != MAGIC:
        raise FormatError("not a GSSC stream", details={"magic": magic})
    if version != VERSION:
        raise FormatError(f"unsupported GSSC version {version}")
    mode = (flags >> 1) & 0x3
    if mode >= len(CROSS_VIEW_MODES) or flags & 0xF0:
        raise CorruptStreamError("invalid header flags", details={"flags": flags})
    checkpoint_hash = reader.unpack("<Q", "checkpoint hash")[0] if flags & FLAG_HASH else None
    width, height, frame_count, base_qp = reader.unpack("<HHHB", "dimensions")
    (pattern_len,) = reader.unpack("<B", "pattern length")
    pattern = tuple(reader.take(pattern_len, "pattern"))
    (gop,) = reader.unpack("<B", "gop")
    if width == 0 or height == 0 or not pattern or gop == 0:
        raise CorruptStreamError("degenerate header fields",
                                 details={"width": width, "height": height, "gop": gop})
    cams = [reader.unpack(f"<{_CAMERA_FLOATS}f", "camera block") for _ in range(2)]
    (baseline,) = reader.unpack("<f", "baseline")
    try:
        rig = CameraRig(_camera_from_floats(cams[0], width, height),
                        _camera_from_floats(cams[1], width, height), float(baseline))
    except ValidationError as e:
        raise CorruptStreamError(f"invalid camera block: {e.message}") from e

    header = StreamHeader(width, height, frame_count, base_qp, pattern, gop, rig,
                          checkpoint_hash, CROSS_VIEW_MODES[mode],
                          not flags & FLAG_NO_RESIDUALS, version)
    frames = []
    for index in range(frame_count):
        frame_type, offset_index = reader.unpack("<BB", f"frame {index} header")
        if frame_type > 1 or offset_index >= len(pattern):
            raise CorruptStreamError(f"invalid frame {index} header",
                                     details={"frame_type": frame_type,
                                              "qp_offset_index": offset_index})
        blobs = {}
        for key in BLOB_ORDER:
            (length,) = reader.unpack("<I", f"frame {index} payload length")
            blobs[key] = reader.take(length, f"frame {index} {key[0].value}/{key[1]}")
        frames.append(FramePayload(frame_type, offset_index, blobs))
    if reader.pos != len(data):
        raise CorruptStreamError("trailing garbage after last frame",
                                 details={"consumed": reader.pos, "size": len(data)})
    return CodedStream(header, frames)
