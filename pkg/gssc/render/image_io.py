"""
Frame import and export: binary PPM (P6) and GST1 float images.
"""

import logging
import re
from pathlib import Path
from typing import List, Union

import numpy as np

from ..core.errors import DatasetError, FormatError
from ..tensor.io import atomic_write, read_tensor, write_tensor

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = (".ppm", ".gst")
_PPM_HEADER = re.compile(rb"\AP6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+"
                         rb"(?:#[^\n]*\n\s*)*(\d+)\s")


def encode_ppm(image: np.ndarray) -> bytes:
    """(3, H, W) floats in [0, 1] -> 8-bit P6 bytes."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise FormatError("PPM export needs a (3, H, W) image", details={"shape": image.shape})
    _, h, w = image.shape
    pixels = np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.transpose(1, 2, 0).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    match = _PPM_HEADER.match(data)
    if match is None:
        raise FormatError("not a binary PPM (P6) image")
    w, h, maxval = (int(v) for v in match.groups())
    if not 0 < maxval < 256:
        raise FormatError(f"unsupported PPM maxval {maxval}")
    payload = data[match.end():]
    if len(payload) != w * h * 3:
        raise FormatError("PPM payload size does not match its header",
                          details={"expected": w * h * 3, "got": len(payload)})
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / maxval


def write_ppm(path: Union[str, Path], image: np.ndarray) -> Path:
    path = Path(path)
    atomic_write(path, encode_ppm(image))
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"image file not found: {path}")
    return decode_ppm(path.read_bytes())


def write_image(path: Union[str, Path], image: np.ndarray) -> Path:
    """Write by suffix: .ppm as 8-bit, anything else as a GST1 float tensor."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return write_ppm(path, image)
    write_tensor(path, np.asarray(image, dtype=np.float32))
    return path


def read_image(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    array = read_tensor(path).astype(np.float64)
    if array.ndim == 2:
        array = array[None]
    return array


def list_frames(directory: Union[str, Path]) -> List[Path]:
    """Frame files of a directory in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"frame directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def load_frames(directory: Union[str, Path]) -> List[np.ndarray]:
    paths = list_frames(directory)
    if not paths:
        raise DatasetError(f"no .ppm or .gst frames in {directory}")
    frames = [read_image(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DatasetError(f"frames in {directory} differ in size",
                           details={"shapes": sorted(shapes)})
    logger.info(f"Loaded {len(frames)} frames from {directory}")
    return frames
