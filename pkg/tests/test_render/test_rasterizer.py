"""Tests for the tiled Gaussian rasterizer."""

import numba
import numpy as np
import pytest

from gssc.core.errors import ValidationError
from gssc.gaussians import GaussianCloud, empty_cloud
from gssc.geometry.camera import CameraModel
from gssc.render import (
    RenderSettings,
    apply_thread_limit,
    project_gaussian,
    rasterize,
    render,
    render_backward,
    render_oracle,
    sort_fragments,
)
from gssc.tensor import ops
from gssc.tensor.tensor import Tensor

CAM = CameraModel(32.0, 32.0, 16.0, 16.0, 32, 32)
RED, GREEN = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)


def cloud_of(centers, scales, opacities, colors, rotations=None, requires_grad=False):
    n = len(centers)
    if rotations is None:
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    arrays = [centers, scales, rotations, np.reshape(opacities, (n, 1)), colors]
    return GaussianCloud(*(Tensor(np.asarray(a, dtype=np.float64), dtype=np.float64,
                                  requires_grad=requires_grad) for a in arrays))


def random_cloud(n, seed, opacity=(0.1, 0.9)):
    rng = np.random.default_rng(seed)
    centers = np.column_stack([rng.uniform(-0.8, 0.8, n), rng.uniform(-0.8, 0.8, n),
                               rng.uniform(1.5, 3.0, n)])
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    return cloud_of(centers, rng.uniform(0.01, 0.08, (n, 3)), rng.uniform(*opacity, n),
                    rng.uniform(0.0, 1.0, (n, 3)), rotations)


class TestForward:
    """Test cases for rasterize and render_oracle."""

    def test_empty_cloud_renders_background(self):
        """Test an empty cloud leaves the background and full transmittance."""
        state = rasterize(empty_cloud(), CAM, background=(0.1, 0.2, 0.3))
        np.testing.assert_array_equal(state.image[:, 5, 7], [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(state.final_transmittance, 1.0)

    def test_single_gaussian_at_its_center(self):
        """Test alpha = opacity at the projected mean blends with the background."""
        cloud = cloud_of([[0.0, 0.0, 2.0]], [[0.05] * 3], [0.5], [RED])
        state = rasterize(cloud, CAM, background=(0.0, 0.0, 1.0))
        np.testing.assert_allclose(state.image[:, 16, 16], [0.5, 0.0, 0.5])
        assert state.final_transmittance[16, 16] == pytest.approx(0.5)
        np.testing.assert_array_equal(state.image[:, 0, 0], [0.0, 0.0, 1.0])

    def test_nearer_gaussian_wins(self):
        """Test front-to-back compositing by depth, not by index."""
        cloud = cloud_of([[0.0, 0.0, 3.0], [0.0, 0.0, 2.0]], [[0.05] * 3] * 2, [0.8, 0.8],
                         [GREEN, RED])
        pixel = rasterize(cloud, CAM).image[:, 16, 16]
        assert pixel[0] == pytest.approx(0.8)
        assert pixel[1] == pytest.approx(0.2 * 0.8)

    def test_opacity_is_capped(self):
        """Test alpha never exceeds its maximum."""
        cloud = cloud_of([[0.0, 0.0, 2.0]], [[0.05] * 3], [0.999999], [RED])
        state = rasterize(cloud, CAM)
        assert state.final_transmittance[16, 16] == pytest.approx(1.0 - RenderSettings().alpha_max)

    def test_tiles_match_oracle(self):
        """Test the tiled image is bit-identical to brute-force compositing."""
        cloud = random_cloud(200, seed=0)
        background = (0.2, 0.4, 0.6)
        tiled = rasterize(cloud, CAM, background).image
        np.testing.assert_array_equal(tiled, render_oracle(cloud, CAM, background))

    def test_small_tiles_match_oracle(self):
        """Test bit-identity does not depend on the tile size."""
        cloud = random_cloud(50, seed=1)
        settings = RenderSettings(tile=5)
        np.testing.assert_array_equal(rasterize(cloud, CAM, settings=settings).image,
                                      render_oracle(cloud, CAM, settings=settings))

    def test_bad_background(self):
        """Test the background must be an RGB triple."""
        with pytest.raises(ValidationError):
            rasterize(empty_cloud(), CAM, background=(0.0, 1.0))


def test_sort_fragments_breaks_ties_by_index():
    """Test equal depths keep index order and culled entries are skipped."""
    depths = np.array([2.0, 1.0, 2.0, 1.0, 0.0])
    visible = np.array([True, True, True, True, False])
    np.testing.assert_array_equal(sort_fragments(depths, visible), [1, 3, 0, 2])


def test_project_gaussian():
    """Test projected mean and depth, and culling behind the camera."""
    fragment = project_gaussian([0.25, 0.0, 2.0], [0.05] * 3, [1.0, 0.0, 0.0, 0.0], 0.5, RED,
                                CAM, index=7)
    np.testing.assert_allclose(fragment.mean, [20.0, 16.0])
    assert fragment.depth == pytest.approx(2.0)
    assert fragment.index == 7
    assert fragment.covariance[0, 0] > RenderSettings().dilation
    assert project_gaussian([0.0, 0.0, -1.0], [0.05] * 3, [1.0, 0.0, 0.0, 0.0], 0.5, RED,
                            CAM) is None


class TestThreads:
    """Test cases for the worker thread limit."""

    def teardown_method(self):
        numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)

    def test_explicit_limit(self):
        """Test a limit is clamped to at least one thread."""
        assert apply_thread_limit(1) == 1
        assert numba.get_num_threads() == 1
        assert apply_thread_limit(0) == 1

    def test_environment_limit(self, monkeypatch):
        """Test GSSC_THREADS is read and validated."""
        monkeypatch.setenv("GSSC_THREADS", "1")
        assert apply_thread_limit() == 1
        monkeypatch.setenv("GSSC_THREADS", "many")
        with pytest.raises(ValidationError):
            apply_thread_limit()

    def test_thread_count_does_not_change_pixels(self):
        """Test rendering is bit-identical with one thread and with all of them."""
        cloud = random_cloud(120, seed=2)
        apply_thread_limit(1)
        single = rasterize(cloud, CAM).image
        apply_thread_limit(numba.config.NUMBA_NUM_THREADS)
        np.testing.assert_array_equal(rasterize(cloud, CAM).image, single)


class TestBackward:
    """Test cases for render gradients."""

    def test_analytic_matches_finite_differences(self):
        """Test every attribute gradient against central differences."""
        cloud = random_cloud(3, seed=3, opacity=(0.3, 0.7))
        grad_image = np.random.default_rng(4).normal(size=(3, 32, 32))
        background = (0.1, 0.1, 0.1)
        analytic = render_backward(cloud, CAM, grad_image, background)
        numeric = render_backward(cloud, CAM, grad_image, background, mode="fd")
        for name, grad in analytic.items():
            scale = max(1.0, float(np.max(np.abs(numeric[name]))))
            np.testing.assert_allclose(grad, numeric[name], rtol=1e-3, atol=1e-4 * scale,
                                       err_msg=name)

    def test_render_accumulates_into_cloud(self):
        """Test the tensor entry point routes gradients to the attributes."""
        base = random_cloud(5, seed=5)
        cloud = GaussianCloud(*(Tensor(t.data, dtype=np.float64, requires_grad=True)
                                for t in base.tensors().values()))
        weights = np.random.default_rng(6).normal(size=(3, 32, 32))
        ops.total(ops.mul(render(cloud, CAM), Tensor(weights, dtype=np.float64))).backward()
        expected = render_backward(cloud, CAM, weights)
        np.testing.assert_allclose(cloud.colors.grad, expected["colors"])
        np.testing.assert_allclose(cloud.centers.grad, expected["centers"])

    def test_rejects_bad_gradient_shape_and_mode(self):
        """Test the upstream gradient must match the camera."""
        cloud = random_cloud(2, seed=7)
        with pytest.raises(ValidationError):
            render_backward(cloud, CAM, np.zeros((3, 8, 8)))
        with pytest.raises(ValidationError):
            render_backward(cloud, CAM, np.zeros((3, 32, 32)), mode="symbolic")
