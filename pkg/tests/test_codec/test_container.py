"""Tests for the GSSC container."""

from pathlib import Path

import pytest

from gssc.codec.container import (
    BLOB_ORDER,
    CodedStream,
    FramePayload,
    StreamHeader,
    frame_overhead,
    header_size,
    read_container,
    write_container,
)
from gssc.core.errors import CorruptStreamError, FormatError, ValidationError
from gssc.geometry.camera import View, rectified_rig

FIXTURE = Path(__file__).parent.parent / "fixtures" / "golden_v1.gssc"
FRAME_START = 151


@pytest.fixture
def golden():
    """Raw bytes of the committed one-frame stream."""
    return FIXTURE.read_bytes()


def make_header(**overrides):
    fields = dict(width=64, height=48, frame_count=1, base_qp=23, pattern=(0, 8, 0, 4), gop=32,
                  rig=rectified_rig(100.0, 64, 48, 0.1))
    fields.update(overrides)
    return StreamHeader(**fields)


class TestGoldenStream:
    """Test cases for the committed fixture."""

    def test_header_fields(self, golden):
        """Test the fixture decodes to its known header."""
        stream = read_container(golden)
        header = stream.header
        assert (header.width, header.height, header.frame_count) == (64, 48, 1)
        assert header.base_qp == 23
        assert header.pattern == (0, 8, 0, 4)
        assert header.gop == 32
        assert header.checkpoint_hash is None
        assert header.cross_view == "fusion"
        assert header.residuals is True
        assert header.rig.left.fx == 100.0
        assert header.rig.left.cx == 31.5
        assert header.rig.baseline == pytest.approx(0.1)
        assert header.rig.right.translation[0] == pytest.approx(-0.05)

    def test_frame_payload(self, golden):
        """Test the single frame carries one non-empty blob."""
        frame = read_container(golden).frames[0]
        assert (frame.frame_type, frame.qp_offset_index) == (0, 0)
        assert frame.blob(View.LEFT, "disp_hyper") == b"\xde\xad\xbe\xef"
        assert frame.payload_bytes == 4
        assert frame.blob(View.RIGHT, "img_latent") == b""

    def test_rewrite_is_byte_identical(self, golden):
        """Test writing the parsed stream reproduces the fixture."""
        stream = read_container(golden)
        assert write_container(stream.header, stream.frames) == golden

    def test_sizes(self, golden):
        """Test the header and frame size helpers match the fixture."""
        header = read_container(golden).header
        assert header_size(header) == FRAME_START
        assert len(golden) == FRAME_START + frame_overhead() + 4


class TestCorruption:
    """Test cases for damaged streams."""

    def test_bad_magic(self, golden):
        """Test a foreign file."""
        with pytest.raises(FormatError):
            read_container(b"RIFF" + golden[4:])

    def test_bad_version(self, golden):
        """Test an unknown container version."""
        data = bytearray(golden)
        data[4] = 2
        with pytest.raises(FormatError):
            read_container(bytes(data))

    @pytest.mark.parametrize("flags", [0x06, 0x10, 0x80])
    def test_bad_flags(self, golden, flags):
        """Test reserved flag bits and the unused cross-view code."""
        data = bytearray(golden)
        data[5] = flags
        with pytest.raises(CorruptStreamError):
            read_container(bytes(data))

    @pytest.mark.parametrize("value", [0x05, 0xFF])
    def test_payload_length_overrun(self, golden, value):
        """Test a damaged payload length."""
        data = bytearray(golden)
        data[FRAME_START + 2] = value
        with pytest.raises(CorruptStreamError):
            read_container(bytes(data))

    def test_truncated(self, golden):
        """Test a stream cut inside the camera block."""
        with pytest.raises(CorruptStreamError):
            read_container(golden[:40])
        with pytest.raises(FormatError):
            read_container(golden[:3])

    def test_trailing_garbage(self, golden):
        """Test bytes after the last frame."""
        with pytest.raises(CorruptStreamError):
            read_container(golden + b"\x00")

    def test_degenerate_width(self, golden):
        """Test a zero frame width."""
        data = bytearray(golden)
        data[6] = 0
        with pytest.raises(CorruptStreamError):
            read_container(bytes(data))

    def test_bad_frame_header(self, golden):
        """Test an unknown frame type and an out-of-range offset index."""
        for offset, value in ((0, 2), (1, 4)):
            data = bytearray(golden)
            data[FRAME_START + offset] = value
            with pytest.raises(CorruptStreamError):
                read_container(bytes(data))


class TestWriting:
    """Test cases for writing containers."""

    def test_flags_round_trip(self):
        """Test hash, cross-view mode and residual switch survive a round trip."""
        header = make_header(frame_count=0, checkpoint_hash=0x0123456789ABCDEF,
                             cross_view="warp", residuals=False)
        data = write_container(header, [])
        assert data[5] == 0x0B
        assert len(data) == header_size(header)
        back = read_container(data).header
        assert back.checkpoint_hash == 0x0123456789ABCDEF
        assert back.cross_view == "warp"
        assert back.residuals is False

    def test_frames_round_trip(self):
        """Test blob order and frame fields across several frames."""
        frames = []
        for t in range(3):
            blobs = {key: bytes([t, i]) * (i + 1) for i, key in enumerate(BLOB_ORDER)}
            frames.append(FramePayload(int(t > 0), t % 4, blobs))
        stream = read_container(write_container(make_header(frame_count=3), frames))
        assert isinstance(stream, CodedStream)
        for original, parsed in zip(frames, stream.frames):
            assert parsed.frame_type == original.frame_type
            assert parsed.qp_offset_index == original.qp_offset_index
            assert parsed.blobs == original.blobs

    def test_frame_count_must_match(self):
        """Test the header frame count is checked against the frame list."""
        with pytest.raises(ValidationError):
            write_container(make_header(frame_count=2), [FramePayload(0, 0)])

    def test_unknown_cross_view_mode(self):
        """Test an invalid mode cannot be written."""
        with pytest.raises(ValidationError):
            write_container(make_header(frame_count=0, cross_view="stereo"), [])
