"""Tests for Gaussian clouds."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from gssc.core.errors import DimensionError, ValidationError
from gssc.gaussians import GaussianCloud, concat_clouds, empty_cloud
from gssc.tensor import ops
from gssc.tensor.tensor import Tensor


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


def make_cloud(n, view=0, **overrides):
    values = {
        "centers": np.random.default_rng(n).normal(size=(n, 3)),
        "scales": np.full((n, 3), 0.01),
        "rotations": np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        "opacities": np.full((n, 1), 0.5),
        "colors": np.full((n, 3), 0.25),
    }
    values.update(overrides)
    tensors = {k: v if isinstance(v, Tensor) else Tensor(v, dtype=np.float64)
               for k, v in values.items()}
    return GaussianCloud(**tensors, views=np.full(n, view, dtype=np.uint8))


class TestGaussianCloud:
    """Test cases for GaussianCloud."""

    def test_count_and_defaults(self):
        """Test row count and the per-Gaussian bookkeeping arrays."""
        cloud = make_cloud(4)
        assert len(cloud) == cloud.count == 4
        assert cloud.pixels.shape == (4, 2)
        assert cloud.valid.all()
        assert set(cloud.arrays()) == set(cloud.tensors())

    def test_attribute_width_is_checked(self):
        """Test an attribute with the wrong number of columns."""
        with pytest.raises(DimensionError):
            make_cloud(3, rotations=np.ones((3, 3)))

    def test_bounds_accept_valid_cloud(self):
        """Test a cloud inside every range passes."""
        make_cloud(5).check_bounds(0.05)
        empty_cloud().check_bounds(0.05)

    @pytest.mark.parametrize("name,value", [
        ("scales", np.full((2, 3), 0.1)),
        ("scales", np.zeros((2, 3))),
        ("rotations", np.tile([1.0, 1.0, 0.0, 0.0], (2, 1))),
        ("opacities", np.ones((2, 1))),
        ("colors", np.full((2, 3), 1.5)),
    ])
    def test_bounds_reject(self, name, value):
        """Test each structural range is enforced."""
        with pytest.raises(ValidationError):
            make_cloud(2, **{name: value}).check_bounds(0.05)


def test_concat_keeps_order_and_views():
    """Test merging clouds from both views."""
    merged = concat_clouds([make_cloud(2, view=0), empty_cloud(), make_cloud(3, view=1)])
    assert merged.count == 5
    np.testing.assert_array_equal(merged.views, [0, 0, 1, 1, 1])
    assert concat_clouds([]).count == 0
    single = make_cloud(2)
    assert concat_clouds([single]) is single


def test_concat_keeps_gradients():
    """Test gradients flow back to the parts of a merged cloud."""
    colors = Tensor(np.full((2, 3), 0.5), dtype=np.float64, requires_grad=True)
    part = make_cloud(2, colors=colors)
    merged = concat_clouds([part, make_cloud(1)])
    ops.total(merged.colors).backward()
    np.testing.assert_array_equal(part.colors.grad, np.ones((2, 3)))


def test_to_ply(temp_dir):
    """Test the ASCII PLY header and one row per Gaussian."""
    path = make_cloud(3, view=1).to_ply(temp_dir / "out" / "cloud.ply")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "ply"
    assert "element vertex 3" in lines
    body = lines[lines.index("end_header") + 1:]
    assert len(body) == 3
    assert len(body[0].split()) == 15
    assert body[0].split()[-1] == "1"
