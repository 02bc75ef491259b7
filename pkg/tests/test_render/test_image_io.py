"""Tests for frame import and export."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from gssc.core.errors import DatasetError, FormatError
from gssc.render import load_frames, read_image, read_ppm, write_image, write_ppm
from gssc.render.image_io import decode_ppm, encode_ppm, list_frames


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


def test_encode_ppm_header_and_rounding():
    """Test the P6 header and round-half-up quantization to 8 bits."""
    image = np.zeros((3, 1, 2))
    image[0, 0, 0] = 1.0
    image[1, 0, 1] = 0.5
    image[2, 0, 1] = 2.0
    data = encode_ppm(image)
    assert data.startswith(b"P6\n2 1\n255\n")
    assert data[len(b"P6\n2 1\n255\n"):] == bytes([255, 0, 0, 0, 128, 255])


def test_decode_ppm_with_comments():
    """Test header comments are skipped and values scale by maxval."""
    data = b"P6\n# made by hand\n1 1\n# max\n15\n" + bytes([15, 0, 5])
    np.testing.assert_allclose(decode_ppm(data)[:, 0, 0], [1.0, 0.0, 1.0 / 3.0])


@pytest.mark.parametrize("data", [
    b"P5\n1 1\n255\n\x00",
    b"P6\n1 1\n255\n\x00\x00",
    b"P6\n1 1\n65535\n\x00\x00\x00",
])
def test_decode_ppm_rejects(data):
    """Test grayscale files, short payloads and 16-bit samples."""
    with pytest.raises(FormatError):
        decode_ppm(data)


def test_encode_ppm_needs_rgb():
    """Test a single-channel image cannot be exported."""
    with pytest.raises(FormatError):
        encode_ppm(np.zeros((1, 2, 2)))


def test_ppm_and_float_files(temp_dir):
    """Test 8-bit PPM and float GST1 images through the suffix dispatch."""
    image = np.random.default_rng(0).uniform(size=(3, 4, 5))
    ppm = write_image(temp_dir / "a.ppm", image)
    np.testing.assert_allclose(read_image(ppm), image, atol=0.5 / 255 + 1e-12)
    gst = write_image(temp_dir / "a.gst", image)
    np.testing.assert_allclose(read_image(gst), image.astype(np.float32))
    with pytest.raises(FormatError):
        read_ppm(temp_dir / "missing.ppm")


def test_load_frames_in_name_order(temp_dir):
    """Test frames load sorted by name and ignore other files."""
    for i in (2, 0, 1):
        write_ppm(temp_dir / f"frame_{i:03d}.ppm", np.full((3, 2, 2), i / 4.0))
    (temp_dir / "notes.txt").write_text("skip", encoding="utf-8")
    assert [p.name for p in list_frames(temp_dir)] == [f"frame_{i:03d}.ppm" for i in range(3)]
    frames = load_frames(temp_dir)
    assert [round(f[0, 0, 0] * 4) for f in frames] == [0, 1, 2]


def test_load_frames_errors(temp_dir):
    """Test a missing directory, an empty one and mixed frame sizes."""
    with pytest.raises(DatasetError):
        load_frames(temp_dir / "absent")
    with pytest.raises(DatasetError):
        load_frames(temp_dir)
    write_ppm(temp_dir / "a.ppm", np.zeros((3, 2, 2)))
    write_ppm(temp_dir / "b.ppm", np.zeros((3, 2, 3)))
    with pytest.raises(DatasetError):
        load_frames(temp_dir)
