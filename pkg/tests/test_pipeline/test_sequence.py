"""Tests for sequence encoding, decoding and rendering."""

from dataclasses import replace

import numpy as np
import pytest

from gssc.codec.container import read_container
from gssc.codec.model import GsscModel
from gssc.codec.qp import FRAME_I, FRAME_P, QP_PRESETS
from gssc.core.errors import CheckpointMismatchError, DatasetError, DimensionError
from gssc.geometry.camera import VIEWS, View, rectified_rig
from gssc.pipeline.config import RunConfig
from gssc.pipeline.sequence import decode_and_render, decode_sequence, encode_sequence
from gssc.pipeline.synthetic import SceneSpec, make_synthetic

from ..conftest import TOY_RUN, tiny_model_config

RUN = RunConfig(qp=23, gop=2, cross_view="fusion")


@pytest.fixture(scope="module")
def model():
    return GsscModel(tiny_model_config())


@pytest.fixture(scope="module")
def encoded(model, tiny_scene):
    """The synthetic scene coded with ground-truth disparity."""
    return encode_sequence(tiny_scene.frames, tiny_scene.rig, RUN, model, tiny_scene.disparities)


class TestEncodeDecode:
    """Test cases for the transmitter and receiver loops."""

    def test_header(self, model, encoded):
        """Test the container header carries the schedule and checkpoint."""
        header = read_container(encoded.data).header
        assert (header.width, header.height, header.frame_count) == (64, 48, 3)
        assert header.base_qp == 23
        assert header.pattern == (0, 8, 0, 4)
        assert header.gop == 2
        assert header.checkpoint_hash == model.fingerprint()
        assert [f.frame_type for f in encoded.stream.frames] == [FRAME_I, FRAME_P, FRAME_I]
        assert [f.qp_offset_index for f in encoded.stream.frames] == [0, 1, 2]
        assert len(encoded.timings) == 3

    def test_lockstep(self, model, encoded, tiny_scene):
        """Test the receiver reproduces the transmitter state and images exactly."""
        decoded = decode_and_render(encoded.data, model, tiny_scene.rig.targets)
        for t in range(3):
            assert decoded.states[t].matches(encoded.states[t])
            for v in VIEWS:
                np.testing.assert_array_equal(
                    decoded.reconstructions[t].images[v].data,
                    encoded.reconstructions[t].images[v].data)
                assert decoded.images[v][t].shape == (3, 48, 64)
        assert len(decoded.renders) == 1
        render = decoded.renders[0][2]
        assert render.shape == (3, 48, 64)
        assert render.min() >= 0.0
        assert render.max() <= 1.0 + 1e-6

    def test_decode_without_targets(self, model, encoded):
        """Test plain decoding from a parsed stream."""
        reconstructions = decode_sequence(encoded.stream, model)
        assert len(reconstructions) == 3
        np.testing.assert_array_equal(reconstructions[1].disparities[View.RIGHT].values.data,
                                      encoded.reconstructions[1].disparities[View.RIGHT].values.data)

    def test_flat_quality(self, model, encoded, tiny_scene):
        """Test hierarchical quality off codes every frame at the base QP."""
        frames = {v: tiny_scene.frames[v][:2] for v in VIEWS}
        disparities = {v: tiny_scene.disparities[v][:2] for v in VIEWS}
        run = RunConfig(qp=23, gop=2, hierarchical_quality=False)
        result = encode_sequence(frames, tiny_scene.rig, run, model, disparities)
        assert read_container(result.data).header.pattern == (0,)
        assert [f.qp_offset_index for f in result.stream.frames] == [0, 0]
        hierarchical = encoded.stream.frames
        assert result.stream.frames[0].blobs == hierarchical[0].blobs
        # frame 1 is coded at 23 instead of 23 + 8
        assert result.stream.frames[1].blobs != hierarchical[1].blobs

    def test_residuals_off(self, model, encoded, tiny_scene):
        """Test the residual switch changes the renders but not the coded views."""
        frames = {v: tiny_scene.frames[v][:1] for v in VIEWS}
        disparities = {v: tiny_scene.disparities[v][:1] for v in VIEWS}
        run = RunConfig(qp=23, gop=2, residuals=False)
        result = encode_sequence(frames, tiny_scene.rig, run, model, disparities)
        assert read_container(result.data).header.residuals is False
        assert result.stream.frames[0].blobs == encoded.stream.frames[0].blobs
        plain = decode_and_render(result.data, model, tiny_scene.rig.targets)
        refined = decode_and_render(encoded.data, model, tiny_scene.rig.targets)
        for v in VIEWS:
            np.testing.assert_array_equal(plain.images[v][0], refined.images[v][0])
        assert not np.array_equal(plain.renders[0][0], refined.renders[0][0])

    def test_estimated_disparity(self, model, tiny_scene):
        """Test coding with the stereo estimate instead of ground truth."""
        frames = {v: tiny_scene.frames[v][:1] for v in VIEWS}
        result = encode_sequence(frames, tiny_scene.rig, RUN, model)
        decoded = decode_sequence(result.data, model)
        assert decoded[0].state.matches(result.states[0])


class TestMismatches:
    """Test cases for inputs the pipeline refuses."""

    def test_other_checkpoint(self, encoded):
        """Test a stream decoded with different weights."""
        other = GsscModel(tiny_model_config(seed=4))
        with pytest.raises(CheckpointMismatchError):
            decode_and_render(encoded.stream, other, [])

    def test_cross_view_mode(self, model, tiny_scene):
        """Test a run asking for a mode the checkpoint was not built for."""
        with pytest.raises(CheckpointMismatchError):
            encode_sequence(tiny_scene.frames, tiny_scene.rig,
                            RunConfig(cross_view="warp"), model, tiny_scene.disparities)

    def test_camera_size(self, model, tiny_scene):
        """Test cameras that do not match the frame size."""
        rig = rectified_rig(32.0, 32, 32, 0.2)
        with pytest.raises(DimensionError):
            encode_sequence(tiny_scene.frames, rig, RUN, model, tiny_scene.disparities)

    def test_bad_sequences(self, model, tiny_scene):
        """Test unequal, empty and malformed sequences."""
        rig = tiny_scene.rig
        left = tiny_scene.frames[View.LEFT]
        with pytest.raises(DatasetError):
            encode_sequence({View.LEFT: left, View.RIGHT: left[:2]}, rig, RUN, model)
        with pytest.raises(DatasetError):
            encode_sequence({View.LEFT: [], View.RIGHT: []}, rig, RUN, model)
        with pytest.raises(DimensionError):
            encode_sequence({View.LEFT: [left[0]], View.RIGHT: [left[0][:, :, :32]]},
                            rig, RUN, model)
        gray = np.zeros((1, 48, 64))
        with pytest.raises(DimensionError):
            encode_sequence({View.LEFT: [gray], View.RIGHT: [gray]}, rig, RUN, model)


@pytest.mark.slow
def test_payload_grows_with_qp(toy_models):
    """Test the median frame payload of a trained model never shrinks as the QP rises."""
    scene = make_synthetic(SceneSpec(frames=16), seed=6)
    model = toy_models("fusion").model
    medians = []
    for qp in QP_PRESETS:
        run = replace(TOY_RUN, qp=qp, hierarchical_quality=False)
        result = encode_sequence(scene.frames, scene.rig, run, model, scene.disparities)
        medians.append(float(np.median([f.payload_bytes for f in result.stream.frames])))
    assert all(later >= earlier for earlier, later in zip(medians, medians[1:])), medians
