"""Tests for padding, transforms and the temporal state."""

import numpy as np
import pytest

from gssc.codec.entropy import quantize_infer, quantize_train
from gssc.codec.qp import QP_MAX
from gssc.codec.state import TemporalState
from gssc.codec.transforms import (
    DISPARITY,
    CodecDims,
    DisparityCodec,
    ImageCodec,
    LatentTensor,
    Patchify,
    QuantStep,
    crop_frame,
    pad_frame,
    padded_size,
)
from gssc.core.errors import DimensionError
from gssc.geometry.camera import VIEWS, View
from gssc.geometry.disparity import DisparityMap
from gssc.pipeline.synthetic import SceneSpec, make_synthetic
from gssc.tensor import ops
from gssc.tensor.optim import AdamOptimizer
from gssc.tensor.params import ParamSet
from gssc.tensor.tensor import Tensor, no_grad

TINY = CodecDims(features=8, image_latent=8, disparity_latent=4, hyper_latent=4, blocks=1)


def test_padded_size_rounds_up_to_64():
    """Test padding targets the next multiple of 64."""
    assert padded_size(48, 70) == (64, 128)
    assert padded_size(64, 64) == (64, 64)


def test_pad_frame_replicates_edges():
    """Test padding copies the last row and column."""
    frame = np.arange(12, dtype=np.float64).reshape(1, 3, 4)
    padded = pad_frame(frame, multiple=8)
    assert padded.shape == (1, 8, 8)
    np.testing.assert_array_equal(padded[:, :3, :4], frame)
    np.testing.assert_array_equal(padded[0, 7, :4], frame[0, 2])
    np.testing.assert_array_equal(padded[0, :3, 7], frame[0, :, 3])


def test_crop_frame():
    """Test cropping back to the camera size."""
    frame = Tensor(np.ones((3, 64, 64)))
    assert crop_frame(frame, 64, 64) is frame
    assert crop_frame(frame, 48, 50).shape == (3, 48, 50)


def test_dims_round_trip():
    """Test CodecDims survive to_dict/from_dict and ignore unknown keys."""
    data = TINY.to_dict()
    data["unused"] = 1
    assert CodecDims.from_dict(data) == TINY


def test_quant_step_endpoints():
    """Test the initial step table runs from 2 at QP 0 to 1/8 at QP 63."""
    qstep = QuantStep(ParamSet().scope("q"))
    assert qstep.step(0).item() == pytest.approx(2.0, rel=1e-5)
    assert qstep.step(63).item() == pytest.approx(0.125, rel=1e-5)
    y = Tensor(np.full((1, 2, 2), 3.0))
    np.testing.assert_allclose(qstep.from_latent(qstep.to_latent(y, 23), 23).data, 3.0,
                               rtol=1e-5)


def test_patchify_needs_multiple_of_eight():
    """Test patchify rejects sizes it cannot fold."""
    patch = Patchify(ParamSet().scope("p"), 3, 8)
    assert patch(Tensor(np.zeros((3, 16, 24)))).shape == (8, 2, 3)
    with pytest.raises(DimensionError):
        patch(Tensor(np.zeros((3, 12, 16))))


def test_stream_shapes():
    """Test latent and feature resolutions of both streams."""
    params = ParamSet(seed=1)
    disparity = DisparityCodec(params.scope("disp"), TINY)
    image = ImageCodec(params.scope("img"), TINY)
    previous = Tensor(np.zeros((8, 8, 8)))
    d = DisparityMap(Tensor(np.full((1, 64, 64), 10.0)), View.LEFT)
    latent = disparity.encode(d, previous, 23)
    assert latent.shape == (4, 4, 4)
    decoded, features = disparity.decode(latent, previous, 23)
    assert decoded.values.shape == (1, 64, 64)
    assert np.all((decoded.numpy() >= 0) & (decoded.numpy() <= TINY.disparity_ceiling))
    assert features.shape == (8, 8, 8)

    front = image.analysis_front(Tensor(np.zeros((3, 64, 64))), previous)
    assert front.shape == (8, 8, 8)
    assert image.analysis_back(front, View.LEFT, 23).shape == (8, 4, 4)


class TestTemporalState:
    """Test cases for TemporalState."""

    def test_initial_is_zero(self):
        """Test the first state holds zero buffers at 1/8 resolution."""
        state = TemporalState.initial(8, 64, 128)
        assert state.is_zero()
        assert state.frame_index == 0
        for v in VIEWS:
            assert state.image_features[v].shape == (8, 8, 16)

    def test_advance_detaches_and_counts(self):
        """Test the next state copies decoded features without their graph."""
        state = TemporalState.initial(2, 64, 64)
        feature = Tensor(np.ones((2, 8, 8)), requires_grad=True)
        nxt = state.advance({v: feature for v in VIEWS}, {v: feature for v in VIEWS})
        assert nxt.frame_index == 1
        assert not nxt.is_zero()
        assert not nxt.disparity_features[View.LEFT].requires_grad
        assert nxt.reset().is_zero()
        assert nxt.reset().frame_index == 1

    def test_matches(self):
        """Test bit-exact comparison of states."""
        a = TemporalState.initial(2, 64, 64)
        b = TemporalState.initial(2, 64, 64)
        assert a.matches(b)
        feature = Tensor(np.ones((2, 8, 8)))
        c = a.advance({v: feature for v in VIEWS}, {v: feature for v in VIEWS})
        assert not a.matches(c)
        assert not c.reset().matches(a)


@pytest.mark.slow
def test_trained_disparity_codec_round_trip():
    """Test a briefly trained disparity codec reconstructs within 2 px at QP 63."""
    scene = make_synthetic(SceneSpec(frames=4), seed=2)
    params = ParamSet(seed=0)
    codec = DisparityCodec(params.scope("disp"), TINY)
    optimizer = AdamOptimizer(params, lr=1e-2)
    previous = Tensor(np.zeros((TINY.features, 8, 8)))
    rng = np.random.default_rng(0)

    def disparity(t, view):
        return DisparityMap(Tensor(scene.disparities[view][t][None]), view)

    for step in range(300):
        view = VIEWS[step % 2]
        d = disparity(step % 3, view)
        y_hat = quantize_train(codec.encode(d, previous, QP_MAX).values, rng)
        d_hat, _ = codec.decode(LatentTensor(y_hat, DISPARITY, view), previous, QP_MAX)
        optimizer.zero_grad()
        ops.mean(ops.absolute(ops.sub(d_hat.values, d.values))).backward()
        optimizer.step()

    with no_grad():
        for view in VIEWS:
            d = disparity(3, view)
            plane = quantize_infer(codec.encode(d, previous, QP_MAX).values)
            d_hat, _ = codec.decode(LatentTensor(plane.as_tensor(), DISPARITY, view),
                                    previous, QP_MAX)
            hit = d.numpy() > 0
            assert np.mean(np.abs(d_hat.numpy() - d.numpy())[hit]) < 2.0
