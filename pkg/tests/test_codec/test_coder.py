"""Tests for per-frame coding with a small untrained model."""

import numpy as np
import pytest

from gssc.codec.coder import FrameCoder, predict_clouds
from gssc.codec.container import StreamHeader, read_container, write_container
from gssc.codec.qp import FRAME_I, FRAME_P
from gssc.codec.state import TemporalState
from gssc.core.errors import DimensionError
from gssc.geometry.camera import VIEWS, View, rectified_rig
from gssc.geometry.disparity import DisparityMap
from gssc.tensor import ops
from gssc.tensor.tensor import Tensor

from ..conftest import TINY_DIMS

SIZE = 64


def stereo_frame(seed):
    rng = np.random.default_rng(seed)
    frames = {v: Tensor(rng.uniform(0.0, 1.0, size=(3, SIZE, SIZE))) for v in VIEWS}
    disparities = {v: DisparityMap(Tensor(np.full((1, SIZE, SIZE), 4.0)), v) for v in VIEWS}
    return frames, disparities


def initial_state():
    return TemporalState.initial(TINY_DIMS.features, SIZE, SIZE)


@pytest.fixture
def coded(tiny_model):
    """Two frames (I then P) coded with the tiny model."""
    coder = FrameCoder(tiny_model)
    state = initial_state()
    payloads, recons = [], []
    for t, frame_type in enumerate((FRAME_I, FRAME_P)):
        frames, disparities = stereo_frame(t)
        payload, recon = coder.encode_frame(frames, disparities, state, 23, frame_type)
        payloads.append(payload)
        recons.append(recon)
        state = recon.state
    return coder, payloads, recons


def test_encoder_and_decoder_stay_in_lockstep(coded):
    """Test decoded planes, images and state match the encoder's local decoder."""
    coder, payloads, recons = coded
    state = initial_state()
    for payload, expected in zip(payloads, recons):
        decoded = coder.decode_frame(payload, state, 23, SIZE, SIZE)
        assert set(decoded.planes) == set(expected.planes)
        for key, plane in expected.planes.items():
            np.testing.assert_array_equal(decoded.planes[key].symbols, plane.symbols)
        for v in VIEWS:
            np.testing.assert_array_equal(decoded.images[v].data, expected.images[v].data)
            np.testing.assert_array_equal(decoded.disparities[v].numpy(),
                                          expected.disparities[v].numpy())
        assert decoded.state.matches(expected.state)
        state = decoded.state
    assert state.frame_index == 2


def test_fused_context_is_identical_on_both_sides(coded):
    """Test the cross-view entropy context rebuilt from the payload matches the encoder's."""
    coder, payloads, recons = coded
    entropy = coder.model.image_entropy
    state = initial_state()
    for t, (payload, expected) in enumerate(zip(payloads, recons)):
        decoded = coder.decode_frame(payload, state, 23, SIZE, SIZE)
        contexts = []
        for recon in (expected, decoded):
            h0 = coder._hyper_context(entropy, {v: recon.planes[(v, "img_hyper")] for v in VIEWS})
            contexts.append(coder._cross_context(h0, recon.disparities, t))
        for v in VIEWS:
            assert contexts[0][v] is not None
            np.testing.assert_array_equal(contexts[0][v].data, contexts[1][v].data)
            np.testing.assert_array_equal(decoded.image_features[v].data,
                                          expected.image_features[v].data)
        state = decoded.state


def test_reconstruction_shapes(coded):
    """Test decoded outputs are at padded resolution and the state advanced."""
    _, payloads, recons = coded
    recon = recons[0]
    for v in VIEWS:
        assert recon.images[v].shape == (3, SIZE, SIZE)
        assert recon.disparities[v].values.shape == (1, SIZE, SIZE)
        assert recon.image_features[v].shape == (TINY_DIMS.features, 8, 8)
        assert recon.planes[(v, "img_latent")].symbols.shape == (TINY_DIMS.image_latent, 4, 4)
        assert recon.planes[(v, "disp_hyper")].symbols.shape == (TINY_DIMS.hyper_latent, 1, 1)
    assert recon.state.frame_index == 1
    assert not recon.state.is_zero()
    assert recon.estimated_bits > 0
    assert payloads[1].frame_type == FRAME_P


def test_payloads_survive_the_container(coded):
    """Test coded frames written to a stream decode to the same blobs."""
    _, payloads, _ = coded
    header = StreamHeader(width=SIZE, height=SIZE, frame_count=2, base_qp=23,
                          pattern=(0, 8, 0, 4), gop=32,
                          rig=rectified_rig(32.0, SIZE, SIZE, 0.2))
    stream = read_container(write_container(header, payloads))
    for original, parsed in zip(payloads, stream.frames):
        assert parsed.frame_type == original.frame_type
        assert parsed.blobs == original.blobs


def test_i_frame_resets_state(tiny_model):
    """Test an I-frame codes identically whatever state it is given."""
    coder = FrameCoder(tiny_model)
    frames, disparities = stereo_frame(0)
    fresh, _ = coder.encode_frame(frames, disparities, initial_state(), 23, FRAME_I)
    _, warm = coder.encode_frame(*stereo_frame(1), initial_state(), 23, FRAME_I)
    again, _ = coder.encode_frame(frames, disparities, warm.state, 23, FRAME_I)
    assert again.blobs == fresh.blobs


def test_unpadded_frames_are_rejected(tiny_model):
    """Test frames must be padded before coding."""
    coder = FrameCoder(tiny_model)
    frames = {v: Tensor(np.zeros((3, 48, SIZE))) for v in VIEWS}
    disparities = {v: DisparityMap(Tensor(np.zeros((1, 48, SIZE))), v) for v in VIEWS}
    with pytest.raises(DimensionError):
        coder.encode_frame(frames, disparities, initial_state(), 23, FRAME_I)
    frames[View.RIGHT] = Tensor(np.zeros((3, SIZE, SIZE)))
    with pytest.raises(DimensionError):
        coder.encode_frame(frames, disparities, initial_state(), 23, FRAME_I)


def test_forward_train_bits_and_gradients(tiny_model):
    """Test the training pass yields a scalar rate with gradients into both codecs."""
    coder = FrameCoder(tiny_model)
    frames, disparities = stereo_frame(0)
    recon = coder.forward_train(frames, disparities, initial_state(), 23,
                                np.random.default_rng(0))
    assert recon.bits.shape == (1,)
    assert recon.bits.item() > 0
    distortion = ops.mean(ops.square(ops.sub(recon.images[View.LEFT], frames[View.LEFT])))
    loss = ops.add(ops.mul_const(recon.bits, 1e-4), distortion)
    tiny_model.params.zero_grad()
    loss.backward()
    grads = tiny_model.params.grads()
    assert any(np.any(g) for name, g in grads.items() if name.startswith("img."))
    assert any(np.any(g) for name, g in grads.items() if name.startswith("disp."))


def test_predict_clouds_from_reconstruction(coded, tiny_model):
    """Test Gaussians come only from valid pixels of the cropped camera area."""
    _, _, recons = coded
    rig = rectified_rig(32.0, SIZE, 48, 0.2)
    masks = {v: np.zeros((48, SIZE), dtype=bool) for v in VIEWS}
    masks[View.LEFT][:10, :10] = True
    cloud = predict_clouds(tiny_model, recons[0], rig, masks)
    assert cloud.centers.shape[0] <= 100
    assert set(np.unique(cloud.views).tolist()) <= {View.LEFT.code}
    assert np.all(cloud.pixels < 10)
