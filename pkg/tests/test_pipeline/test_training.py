"""Tests for the loss terms and the two-stage toy trainer."""

import numpy as np
import pytest

from gssc.codec.model import GsscModel
from gssc.codec.qp import QP_PRESETS
from gssc.core.errors import DatasetError
from gssc.geometry.camera import VIEWS, View
from gssc.pipeline.config import RunConfig
from gssc.pipeline.synthetic import SyntheticDataset
from gssc.pipeline.training import (
    STAGE_FULL,
    STAGE_SOURCE,
    ToyTrainer,
    composite_loss,
    distortion,
    rate_term,
    smoothed,
    source_loss,
    train_toy,
)
from gssc.tensor.tensor import Tensor, precision

from ..conftest import TOY_RUN, tiny_model_config

TRAIN = RunConfig(cross_view="fusion", stage1_steps=1, stage2_steps=1, train_qps=(23,),
                  learning_rate=1e-3, seed=2)


def scalar(value):
    return Tensor(np.array([value]))


class TestLossTerms:
    """Test cases for the loss building blocks."""

    def test_composite_loss(self):
        """Test lambda * D + gamma * L_disp + R."""
        with precision(np.float64):
            loss = composite_loss(scalar(0.5), scalar(0.1), scalar(2.0), lam=10.0, gamma=0.05)
        assert loss.item() == pytest.approx(5.2)

    def test_source_loss(self):
        """Test the mean L1 over both views."""
        with precision(np.float64):
            frames = {v: Tensor(np.zeros((3, 4, 4))) for v in VIEWS}
            recon = {View.LEFT: Tensor(np.full((3, 4, 4), 0.2)),
                     View.RIGHT: Tensor(np.full((3, 4, 4), 0.4))}
            assert source_loss(recon, frames).item() == pytest.approx(0.3)

    def test_distortion(self):
        """Test the source term alone and the target count check."""
        with precision(np.float64):
            src = scalar(0.5)
            assert distortion([], [], src, alpha=0.2, beta=0.2).item() == pytest.approx(0.1)
            image = Tensor(np.zeros((3, 12, 12)))
            target = Tensor(np.full((3, 12, 12), 0.5))
            total = distortion([image], [target], src, alpha=0.0, beta=0.2).item()
            assert total == pytest.approx(0.1 + 0.5)
            with pytest.raises(DatasetError):
                distortion([image], [], src, alpha=0.2, beta=0.2)

    def test_rate_term_uses_padded_size(self):
        """Test bits are spread over both padded views."""
        with precision(np.float64):
            assert rate_term(scalar(8192.0), 48, 64).item() == pytest.approx(1.0)
            assert rate_term(scalar(8192.0), 64, 64).item() == pytest.approx(1.0)
            assert rate_term(scalar(8192.0), 65, 64).item() == pytest.approx(0.5)

    def test_smoothed(self):
        """Test the trailing moving average."""
        np.testing.assert_allclose(smoothed([1.0, 2.0, 3.0, 4.0], window=2),
                                   [1.0, 1.5, 2.5, 3.5])
        assert smoothed([]).size == 0


class TestToyTrainer:
    """Test cases for the training loop."""

    def test_needs_two_frames_and_ground_truth(self, tiny_scene):
        """Test datasets that cannot drive training."""
        model = GsscModel(tiny_model_config())
        short = SyntheticDataset(tiny_scene.rig,
                                 {v: tiny_scene.frames[v][:1] for v in VIEWS},
                                 {v: tiny_scene.disparities[v][:1] for v in VIEWS},
                                 {v: tiny_scene.masks[v][:1] for v in VIEWS},
                                 [seq[:1] for seq in tiny_scene.targets])
        with pytest.raises(DatasetError):
            ToyTrainer(short, TRAIN, model)
        blind = SyntheticDataset(tiny_scene.rig, tiny_scene.frames,
                                 {v: [] for v in VIEWS}, {v: [] for v in VIEWS},
                                 tiny_scene.targets)
        with pytest.raises(DatasetError):
            ToyTrainer(blind, TRAIN, model)

    @pytest.mark.slow
    def test_steps_update_weights(self, tiny_scene):
        """Test one step per stage gives finite losses and moves the weights."""
        model = GsscModel(tiny_model_config(seed=2))
        before = {name: value.copy() for name, value in model.params.state_dict().items()}
        seen = []
        result = train_toy(tiny_scene, TRAIN, model,
                           callback=lambda step, stage, loss: seen.append((step, stage)))
        assert result.model is model
        assert result.stages == [STAGE_SOURCE, STAGE_FULL]
        assert result.qps == [23, 23]
        assert all(np.isfinite(result.losses))
        assert seen == [(0, STAGE_SOURCE), (1, STAGE_FULL)]
        after = model.params.state_dict()
        assert any(not np.array_equal(before[name], after[name]) for name in before)

    @pytest.mark.slow
    def test_toy_training_lowers_the_loss(self, toy_models):
        """Test the smoothed loss after both stages is below its value at step 50."""
        result = toy_models("fusion")
        assert len(result.losses) == TOY_RUN.stage1_steps + TOY_RUN.stage2_steps
        assert result.stages[-1] == STAGE_FULL
        assert set(result.qps) <= set(QP_PRESETS)
        # a wide window averages over the randomly drawn training QPs
        curve = smoothed(result.losses, window=50)
        assert curve[-1] < curve[49]
