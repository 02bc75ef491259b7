"""Shared fixtures: a narrow model, a short synthetic scene and toy-trained models."""

from dataclasses import replace

import pytest

from gssc.codec.model import GsscModel, ModelConfig
from gssc.codec.transforms import CodecDims
from gssc.geometry.camera import VIEWS
from gssc.pipeline.config import RunConfig
from gssc.pipeline.synthetic import SceneSpec, SyntheticDataset, make_synthetic
from gssc.pipeline.training import train_toy
from gssc.stereo.estimator import StereoConfig

TINY_DIMS = CodecDims(features=8, image_latent=8, disparity_latent=4, hyper_latent=4, blocks=1)
TINY_STEREO = StereoConfig(iterations=2, max_disparity=8, feature_channels=8, blocks=1,
                           hidden_channels=8)

# two-stage schedule shared by every toy-trained model; the six presets are sampled
TOY_RUN = RunConfig(stage1_steps=300, stage2_steps=200, learning_rate=1e-3, seed=0)
TOY_TRAIN_FRAMES = 6


def tiny_model_config(seed: int = 3, cross_view: str = "fusion") -> ModelConfig:
    return ModelConfig(seed=seed, cross_view=cross_view, dims=TINY_DIMS, stereo=TINY_STEREO)


def frame_range(dataset: SyntheticDataset, start: int, stop: int) -> SyntheticDataset:
    """The frames [start, stop) of a dataset with their disparities, masks and targets."""
    return SyntheticDataset(dataset.rig,
                            {v: dataset.frames[v][start:stop] for v in VIEWS},
                            {v: dataset.disparities[v][start:stop] for v in VIEWS},
                            {v: dataset.masks[v][start:stop] for v in VIEWS},
                            [seq[start:stop] for seq in dataset.targets])


@pytest.fixture
def tiny_model():
    """A small untrained model."""
    return GsscModel(tiny_model_config())


@pytest.fixture(scope="session")
def tiny_scene():
    """Three frames of a 64x48 synthetic scene with one target camera."""
    return make_synthetic(SceneSpec(width=64, height=48, frames=3, fx=32.0), seed=1)


@pytest.fixture(scope="session")
def toy_scene():
    """An eight-frame 64x64 scene split into training frames and held-out frames."""
    scene = make_synthetic(SceneSpec(frames=8), seed=5)
    return (frame_range(scene, 0, TOY_TRAIN_FRAMES),
            frame_range(scene, TOY_TRAIN_FRAMES, scene.frame_count))


@pytest.fixture(scope="session")
def toy_models(toy_scene):
    """Trains a tiny model per cross-view mode on first request and caches the result."""
    training, _ = toy_scene
    trained = {}

    def get(cross_view: str = "fusion"):
        if cross_view not in trained:
            model = GsscModel(tiny_model_config(seed=0, cross_view=cross_view))
            trained[cross_view] = train_toy(training, replace(TOY_RUN, cross_view=cross_view),
                                            model)
        return trained[cross_view]

    return get
