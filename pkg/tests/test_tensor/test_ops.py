"""Tests for differentiable primitives."""

import numpy as np
import pytest

from gssc.core.errors import DimensionError, ValidationError
from gssc.tensor import ops
from gssc.tensor.gradcheck import check_gradients
from gssc.tensor.tensor import Tensor, no_grad, precision

PRIMITIVE_TOL = 1e-4


@pytest.fixture
def rng():
    """Seeded generator shared by a test."""
    return np.random.default_rng(7)


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, dtype=np.float64)


def weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.total(ops.mul(out, Tensor(weights, dtype=np.float64)))


@pytest.mark.parametrize("name", ["sigmoid", "tanh", "exp", "silu", "square", "l2norm",
                                  "softmax"])
def test_smooth_unary_gradients(rng, name):
    """Test smooth unary ops against central differences."""
    fns = {
        "sigmoid": ops.sigmoid,
        "tanh": ops.tanh,
        "exp": ops.exp,
        "silu": ops.silu,
        "square": ops.square,
        "l2norm": ops.l2norm_channels,
        "softmax": ops.softmax_channels,
    }
    with precision(np.float64):
        x = leaf(rng.uniform(0.3, 1.2, size=(3, 2, 4)) * rng.choice([-1.0, 1.0], size=(3, 2, 4)))
        w = rng.normal(size=(3, 2, 4))
        report = check_gradients(lambda: weighted(fns[name](x), w), [x])
    assert max(report.values()) < PRIMITIVE_TOL


def test_piecewise_unary_gradients(rng):
    """Test relu, abs and clamp away from their kinks."""
    magnitudes = rng.choice([0.25, 0.4, 0.5, 0.75, 0.9], size=(2, 3, 3))
    values = magnitudes * rng.choice([-1.0, 1.0], size=(2, 3, 3))
    w = rng.normal(size=values.shape)
    with precision(np.float64):
        for fn in (ops.relu, ops.absolute, lambda t: ops.clamp(t, -0.6, 0.6)):
            x = leaf(values)
            report = check_gradients(lambda: weighted(fn(x), w), [x])
            assert max(report.values()) < PRIMITIVE_TOL


def test_reciprocal_and_log2_gradients(rng):
    """Test reciprocal and log2 on positive inputs."""
    w = rng.normal(size=(1, 3, 3))
    with precision(np.float64):
        x = leaf(rng.uniform(0.5, 1.5, size=(1, 3, 3)))
        assert max(check_gradients(lambda: weighted(ops.reciprocal(x), w), [x]).values()) \
            < PRIMITIVE_TOL
        assert max(check_gradients(lambda: weighted(ops.log2(x), w), [x]).values()) \
            < PRIMITIVE_TOL


def test_conv2d_gradients(rng):
    """Test grouped strided conv2d gradients for input, weight and bias."""
    with precision(np.float64):
        x = leaf(rng.normal(size=(4, 6, 6)))
        w = leaf(rng.normal(size=(4, 2, 3, 3)))
        b = leaf(rng.normal(size=(4,)))
        out_shape = ops.conv2d(x, w, b, stride=2, padding=1, groups=2).shape
        r = rng.normal(size=out_shape)
        report = check_gradients(
            lambda: weighted(ops.conv2d(x, w, b, stride=2, padding=1, groups=2), r), [x, w, b])
    assert out_shape == (4, 3, 3)
    assert max(report.values()) < PRIMITIVE_TOL


def test_conv2d_matches_direct_sum(rng):
    """Test conv2d against an explicit correlation loop."""
    x = rng.normal(size=(2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    out = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), padding=0).data
    expected = np.zeros((3, 3, 3))
    for o in range(3):
        for i in range(3):
            for j in range(3):
                expected[o, i, j] = np.sum(w[o] * x[:, i:i + 3, j:j + 3])
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_conv2d_rejects_bad_groups():
    """Test conv2d rejects channel counts that do not split into groups."""
    x = Tensor(np.zeros((3, 4, 4)))
    w = Tensor(np.zeros((2, 2, 1, 1)))
    with pytest.raises(DimensionError):
        ops.conv2d(x, w, groups=2)


def test_pixel_shuffle_inverts_space_to_depth(rng):
    """Test depth-to-space and space-to-depth are exact inverses."""
    x = Tensor(rng.normal(size=(8, 3, 5)), dtype=np.float64)
    shuffled = ops.pixel_shuffle(x, 2)
    assert shuffled.shape == (2, 6, 10)
    np.testing.assert_array_equal(ops.space_to_depth(shuffled, 2).data, x.data)


def test_layout_gradients(rng):
    """Test gradients of the linear layout and resampling ops."""
    with precision(np.float64):
        x = leaf(rng.normal(size=(4, 4, 4)))
        index = np.array([0, 5, 5, 15])
        cases = [
            lambda: ops.pixel_shuffle(x, 2),
            lambda: ops.space_to_depth(x, 2),
            lambda: ops.avg_pool(x, 2),
            lambda: ops.upsample_bilinear(x, 2),
            lambda: ops.crop(x, 3, 2),
            lambda: ops.slice_channels(x, 1, 3),
            lambda: ops.sum_channels(x),
            lambda: ops.concat([x, ops.square(x)], axis=0),
            lambda: ops.gather_pixels(x, index),
            lambda: ops.reshape(x, (16, 4)),
        ]
        for build in cases:
            r = rng.normal(size=build().shape)
            report = check_gradients(lambda: weighted(build(), r), [x])
            assert max(report.values()) < PRIMITIVE_TOL


def test_broadcast_and_take_gradients(rng):
    """Test broadcast_channels and take gradients."""
    with precision(np.float64):
        m = leaf(rng.normal(size=(1, 3, 3)))
        r = rng.normal(size=(4, 3, 3))
        assert max(check_gradients(lambda: weighted(ops.broadcast_channels(m, 4), r),
                                   [m]).values()) < PRIMITIVE_TOL
        v = leaf(rng.normal(size=(5,)))
        assert max(check_gradients(lambda: ops.mul_const(ops.take(v, 3), 2.5),
                                   [v]).values()) < PRIMITIVE_TOL


def test_bilinear_sample_gradients(rng):
    """Test bilinear sampling gradients for source values and both coordinates."""
    with precision(np.float64):
        src = leaf(rng.normal(size=(2, 5, 6)))
        xs = leaf(rng.integers(0, 4, size=(3, 4)) + rng.uniform(0.2, 0.8, size=(3, 4)))
        ys = leaf(rng.integers(0, 3, size=(3, 4)) + rng.uniform(0.2, 0.8, size=(3, 4)))
        r = rng.normal(size=(2, 3, 4))
        report = check_gradients(lambda: weighted(ops.bilinear_sample(src, xs, ys), r),
                                 [src, xs, ys])
    assert max(report.values()) < PRIMITIVE_TOL


def test_bilinear_sample_integer_grid_is_identity(rng):
    """Test sampling at integer pixel centers reproduces the source."""
    src = Tensor(rng.normal(size=(3, 4, 5)), dtype=np.float64)
    ys, xs = np.meshgrid(np.arange(4.0), np.arange(5.0), indexing="ij")
    np.testing.assert_array_equal(ops.bilinear_sample(src, xs, ys).data, src.data)


def test_scale_gradient(rng):
    """Test the scalar-tensor product differentiates both operands."""
    with precision(np.float64):
        x = leaf(rng.normal(size=(2, 3, 3)))
        s = leaf([0.7])
        r = rng.normal(size=(2, 3, 3))
        report = check_gradients(lambda: weighted(ops.scale(x, s), r), [x, s])
    assert max(report.values()) < PRIMITIVE_TOL


def test_shared_input_accumulates():
    """Test a tensor used twice receives the sum of both gradients."""
    x = leaf([[[1.0, 2.0]]])
    ops.total(ops.add(x, x)).backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2), 2.0))


def test_total_and_mean_are_single_element():
    """Test reductions return shape (1,)."""
    x = Tensor(np.arange(6.0).reshape(1, 2, 3), dtype=np.float64)
    assert ops.total(x).shape == (1,)
    assert ops.total(x).item() == 15.0
    assert ops.mean(x).item() == pytest.approx(2.5)


def test_binary_ops_require_equal_shapes():
    """Test there is no implicit broadcasting."""
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((2, 2, 2))))


def test_no_grad_skips_tape():
    """Test no_grad produces untracked results."""
    x = leaf([1.0, 2.0])
    with no_grad():
        y = ops.mul_const(x, 3.0)
    assert not y.requires_grad


def test_backward_requires_scalar():
    """Test backward from a non-scalar tensor is rejected."""
    x = leaf([1.0, 2.0])
    with pytest.raises(DimensionError):
        ops.mul_const(x, 2.0).backward()


def test_elementwise_dispatch():
    """Test elementwise dispatch by name and its errors."""
    a = Tensor(np.array([1.0, -1.0]), dtype=np.float64)
    np.testing.assert_array_equal(ops.elementwise("relu", a).data, [1.0, 0.0])
    np.testing.assert_array_equal(ops.elementwise("add", a, a).data, [2.0, -2.0])
    with pytest.raises(ValidationError):
        ops.elementwise("add", a)
    with pytest.raises(ValidationError):
        ops.elementwise("cosh", a)
