"""Tests for parameter sets, the optimizer, layers and tensor files."""

import tempfile
import zipfile
from pathlib import Path

import numpy as np
import pytest

from gssc.core.errors import ConfigurationError, DimensionError, FormatError, NumericError
from gssc.tensor import ops
from gssc.tensor.gradcheck import check_gradients
from gssc.tensor.io import (
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    read_tensor,
    save_checkpoint,
    write_tensor,
)
from gssc.tensor.layers import BlockStack, Conv2d, DepthwiseSeparableBlock
from gssc.tensor.optim import AdamOptimizer
from gssc.tensor.params import ParamSet
from gssc.tensor.tensor import Tensor, precision


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


class TestParamSet:
    """Test cases for ParamSet."""

    def test_same_seed_same_values(self):
        """Test initial values depend only on seed and name."""
        a = ParamSet(seed=3)
        a.add("enc.weight", (4, 2, 3, 3))
        a.add("dec.weight", (2, 4, 3, 3))
        b = ParamSet(seed=3)
        b.add("dec.weight", (2, 4, 3, 3))
        b.add("enc.weight", (4, 2, 3, 3))
        for name in ("enc.weight", "dec.weight"):
            np.testing.assert_array_equal(a[name].data, b[name].data)
        assert a.fingerprint() == b.fingerprint()

    def test_other_seed_changes_fingerprint(self):
        """Test the fingerprint tracks the seed through the values."""
        a = ParamSet(seed=0)
        b = ParamSet(seed=1)
        a.add("w", (8,))
        b.add("w", (8,))
        assert a.fingerprint() != b.fingerprint()

    def test_fingerprint_covers_buffers(self):
        """Test a buffer change alters the fingerprint."""
        params = ParamSet()
        params.add("w", (2,), init="zeros")
        before = params.fingerprint()
        params.set_buffer("cdf", np.arange(4, dtype=np.int32))
        assert params.fingerprint() != before

    def test_initializers(self):
        """Test the deterministic initializers and the unknown-name error."""
        params = ParamSet()
        assert np.all(params.add("z", (3,), init="zeros").data == 0)
        np.testing.assert_allclose(params.add("c", (2, 2), init="constant", value=0.5).data, 0.5)
        with pytest.raises(ConfigurationError):
            params.add("bad", (1,), init="xavier")

    def test_reregister_returns_existing(self):
        """Test adding an existing name shares the tensor and checks its shape."""
        params = ParamSet()
        first = params.add("w", (2, 2))
        assert params.add("w", (2, 2)) is first
        with pytest.raises(DimensionError):
            params.add("w", (3,))

    def test_scopes_prefix_names(self):
        """Test nested scopes build dotted names."""
        params = ParamSet()
        scope = params.scope("codec").scope("hyper")
        scope.add("bias", (4,), init="zeros")
        assert "codec.hyper.bias" in params
        assert params.num_parameters("codec.") == 4
        assert params.num_parameters("stereo.") == 0

    def test_load_state_dict_strict(self):
        """Test strict loading rejects missing and unexpected names."""
        params = ParamSet()
        params.add("w", (2,))
        with pytest.raises(ConfigurationError):
            params.load_state_dict({"v": np.zeros(2)})
        params.load_state_dict({"v": np.zeros(2)}, strict=False)
        with pytest.raises(DimensionError):
            params.load_state_dict({"w": np.zeros(3)})
        params.load_state_dict({"w": np.array([1.0, 2.0])})
        np.testing.assert_array_equal(params["w"].data, [1.0, 2.0])

    def test_unknown_parameter(self):
        """Test lookup of a missing name raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            ParamSet()["missing"]


class TestAdam:
    """Test cases for AdamOptimizer."""

    def test_minimizes_quadratic(self):
        """Test Adam drives a quadratic towards its minimum."""
        params = ParamSet()
        w = params.add("w", (3,), init="constant", value=2.0)
        target = Tensor(np.array([0.5, -0.5, 1.0]))
        opt = AdamOptimizer(params, lr=0.05)
        for _ in range(300):
            opt.zero_grad()
            ops.total(ops.square(ops.sub(w, target))).backward()
            opt.step()
        np.testing.assert_allclose(w.data, target.data, atol=0.05)

    def test_first_step_moves_by_lr(self):
        """Test the bias-corrected first step has magnitude lr."""
        params = ParamSet()
        w = params.add("w", (2,), init="constant", value=1.0)
        opt = AdamOptimizer(params, lr=0.1)
        ops.total(ops.mul_const(w, 3.0)).backward()
        opt.step()
        np.testing.assert_allclose(w.data, [0.9, 0.9], rtol=1e-5)

    def test_non_finite_gradient(self):
        """Test a NaN gradient stops the update."""
        params = ParamSet()
        w = params.add("w", (1,), init="zeros")
        w.grad = np.array([np.nan], dtype=w.dtype)
        with pytest.raises(NumericError):
            AdamOptimizer(params).step()


class TestLayers:
    """Test cases for conv layers and blocks."""

    def test_conv_shapes(self):
        """Test a strided Conv2d halves the resolution."""
        params = ParamSet()
        conv = Conv2d(params.scope("conv"), 3, 8, kernel=3, stride=2)
        assert conv(Tensor(np.zeros((3, 8, 8)))).shape == (8, 4, 4)
        assert params["conv.weight"].shape == (8, 3, 3, 3)

    def test_block_stack_keeps_width(self):
        """Test a block stack keeps channels and spatial size."""
        params = ParamSet(seed=1)
        stack = BlockStack(params.scope("stack"), channels=4, depth=2)
        out = stack(Tensor(np.random.default_rng(0).normal(size=(4, 6, 6))))
        assert out.shape == (4, 6, 6)
        assert "stack.block1.pw.weight" in params

    def test_block_gradients(self):
        """Test gradients through a depthwise-separable block."""
        with precision(np.float64):
            params = ParamSet(seed=2)
            block = DepthwiseSeparableBlock(params.scope("b"), 3, 3)
            x = Tensor(np.random.default_rng(1).normal(size=(3, 5, 5)), requires_grad=True)
            weights = np.random.default_rng(2).normal(size=(3, 5, 5))
            report = check_gradients(
                lambda: ops.total(ops.mul(block(x), Tensor(weights))),
                [x, params["b.dw.weight"], params["b.pw.weight"]], samples=40)
        assert max(report.values()) < 1e-4


class TestTensorFiles:
    """Test cases for GST1 files and checkpoints."""

    def test_float_and_int_round_trip(self, temp_dir):
        """Test floats come back as f32 and integers as i32."""
        values = np.linspace(-1, 1, 12).reshape(3, 4)
        write_tensor(temp_dir / "a.gst", values)
        back = read_tensor(temp_dir / "a.gst")
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, values.astype(np.float32))
        table = decode_tensor(encode_tensor(np.array([0, 7, 65536], dtype=np.int64)))
        assert table.dtype == np.int32
        np.testing.assert_array_equal(table, [0, 7, 65536])

    def test_header_layout(self):
        """Test the GST1 header bytes."""
        blob = encode_tensor(np.zeros((2, 3), dtype=np.float32))
        assert blob[:4] == b"GST1"
        assert blob[4:7] == bytes([1, 0, 2])
        assert blob[7:15] == b"\x02\x00\x00\x00\x03\x00\x00\x00"
        assert len(blob) == 15 + 24

    @pytest.mark.parametrize("blob", [b"GST", b"XXXX\x01\x00\x00",
                                      b"GST1\x02\x00\x00", b"GST1\x01\x09\x00",
                                      b"GST1\x01\x00\x01\x02\x00\x00\x00"])
    def test_malformed_blobs(self, blob):
        """Test structural damage raises FormatError."""
        with pytest.raises(FormatError):
            decode_tensor(blob)

    def test_missing_file(self, temp_dir):
        """Test reading a missing tensor file."""
        with pytest.raises(FormatError):
            read_tensor(temp_dir / "nope.gst")

    def test_checkpoint_round_trip(self, temp_dir):
        """Test a checkpoint restores parameters, buffers and the hash."""
        params = ParamSet(seed=5)
        params.add("enc.weight", (2, 3))
        params.set_buffer("cdf", np.array([0, 10, 65536], dtype=np.int32))
        fingerprint = save_checkpoint(temp_dir / "m.ckpt", params, {"features": 8})
        manifest, tensors, buffers = load_checkpoint(temp_dir / "m.ckpt")
        assert manifest["hash"] == f"{fingerprint:016x}"
        assert manifest["hyper"] == {"features": 8}
        np.testing.assert_array_equal(tensors["enc.weight"], params["enc.weight"].data)
        np.testing.assert_array_equal(buffers["cdf"], [0, 10, 65536])

    def test_checkpoint_rejects_foreign_zip(self, temp_dir):
        """Test an archive without the gssc manifest is refused."""
        path = temp_dir / "other.zip"
        with zipfile.ZipFile(path, "w") as archive:
            archive.writestr("readme.txt", "hello")
        with pytest.raises(FormatError):
            load_checkpoint(path)
        (temp_dir / "junk.ckpt").write_bytes(b"not a zip")
        with pytest.raises(FormatError):
            load_checkpoint(temp_dir / "junk.ckpt")
