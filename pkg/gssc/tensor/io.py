"""
GST1 raw tensor files and zip checkpoint archives.

GST1 layout (little-endian): magic ``GST1``, u8 version, u8 dtype, u8 rank,
u32 dims[rank], then the row-major payload. dtype 0 is f32; dtype 1 (i32)
carries integer tables such as frozen CDFs.
"""

import io
import json
import logging
import os
import struct
import tempfile
import zipfile
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from ..core.errors import FormatError
from .params import ParamSet

logger = logging.getLogger(__name__)

MAGIC = b"GST1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4")}
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<i4"): 1}

CHECKPOINT_FORMAT = "gssc-checkpoint"


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array to GST1 bytes (floats are stored as f32)."""
    array = np.asarray(array)
    if np.issubdtype(array.dtype, np.integer):
        stored = array.astype("<i4")
    else:
        stored = array.astype("<f4")
    header = struct.pack("<4sBBB", MAGIC, VERSION, DTYPE_CODES[stored.dtype], stored.ndim)
    dims = struct.pack(f"<{stored.ndim}I", *stored.shape)
    return header + dims + np.ascontiguousarray(stored).tobytes()


def decode_tensor(blob: bytes) -> np.ndarray:
    """Parse GST1 bytes; any structural problem raises FormatError."""
    if len(blob) < 7:
        raise FormatError("GST1 blob shorter than its header", details={"size": len(blob)})
    magic, version, code, rank = struct.unpack_from("<4sBBB", blob, 0)
    if magic != MAGIC:
        raise FormatError("not a GST1 tensor", details={"magic": magic})
    if version != VERSION:
        raise FormatError(f"unsupported GST1 version {version}")
    if code not in DTYPES:
        raise FormatError(f"unknown GST1 dtype code {code}")
    offset = 7
    if len(blob) < offset + 4 * rank:
        raise FormatError("GST1 dims truncated")
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    dtype = DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise FormatError("GST1 payload size does not match dims",
                          details={"dims": dims, "expected": expected, "got": len(blob) - offset})
    data = np.frombuffer(blob, dtype=dtype, count=expected // dtype.itemsize, offset=offset)
    return data.reshape(dims).copy()


def write_tensor(path: Union[str, Path], array: np.ndarray) -> None:
    atomic_write(Path(path), encode_tensor(array))


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"tensor file not found: {path}")
    return decode_tensor(path.read_bytes())


def atomic_write(path: Path, payload: bytes) -> None:
    """Write through a temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: Union[str, Path], params: ParamSet,
                    hyper: Dict[str, Any]) -> int:
    """Write parameters, buffers and model hyper-parameters to a zip archive.

    Returns:
        The 64-bit checkpoint hash recorded in the manifest
    """
    fingerprint = params.fingerprint()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": VERSION,
        "hash": f"{fingerprint:016x}",
        "seed": params.seed,
        "hyper": hyper,
        "parameters": {n: list(t.shape) for n, t in params.items()},
        "buffers": {n: list(a.shape) for n, a in params.buffers().items()},
    }
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        archive.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name, tensor in params.items():
            archive.writestr(f"params/{name}.gst", encode_tensor(tensor.data))
        for name, array in params.buffers().items():
            archive.writestr(f"buffers/{name}.gst", encode_tensor(array))
    atomic_write(Path(path), buffer.getvalue())
    logger.info(f"Saved checkpoint {path} ({len(params)} tensors, hash {fingerprint:016x})")
    return fingerprint


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray],
                                                     Dict[str, np.ndarray]]:
    """Read a checkpoint archive.

    Returns:
        (manifest, parameters by name, buffers by name)
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            manifest = json.loads(archive.read("manifest.json"))
            if manifest.get("format") != CHECKPOINT_FORMAT:
                raise FormatError("not a gssc checkpoint", details={"path": str(path)})
            tensors = {n: decode_tensor(archive.read(f"params/{n}.gst"))
                       for n in manifest["parameters"]}
            buffers = {n: decode_tensor(archive.read(f"buffers/{n}.gst"))
                       for n in manifest.get("buffers", {})}
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable checkpoint {path}: {e}") from e
    return manifest, tensors, buffers
