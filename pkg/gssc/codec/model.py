"""
The complete codec model: stereo estimator, both stream codecs, their entropy
models and the Gaussian predictor, all in one ParamSet.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..core.errors import CheckpointMismatchError, ConfigurationError
from ..gaussians.predictor import GaussianConfig, GaussianPredictor
from ..stereo.estimator import StereoConfig, StereoEstimator
from ..tensor.io import load_checkpoint, save_checkpoint
from ..tensor.params import ParamSet
from .entropy import ConditionalEntropyModel, EntropyDims
from .fusion import MODES, NONE, FusionScale
from .transforms import CodecDims, DisparityCodec, ImageCodec

logger = logging.getLogger(__name__)

SUBNETWORKS = ("stereo", "disp", "img", "gauss")


@dataclass
class ModelConfig:
    """Everything needed to rebuild the network layout."""

    seed: int = 0
    cross_view: str = "fusion"
    dims: CodecDims = field(default_factory=CodecDims)
    stereo: StereoConfig = field(default_factory=StereoConfig)
    gaussians: GaussianConfig = field(default_factory=GaussianConfig)

    def __post_init__(self):
        if self.cross_view not in MODES:
            raise ConfigurationError(f"unknown cross-view mode '{self.cross_view}'",
                                     details={"modes": MODES})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "cross_view": self.cross_view,
            "dims": self.dims.to_dict(),
            "stereo": dict(vars(self.stereo)),
            "gaussians": self.gaussians.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        stereo_fields = StereoConfig.__dataclass_fields__
        return cls(
            seed=int(data.get("seed", 0)),
            cross_view=data.get("cross_view", "fusion"),
            dims=CodecDims.from_dict(data.get("dims", {})),
            stereo=StereoConfig(**{k: v for k, v in data.get("stereo", {}).items()
                                   if k in stereo_fields}),
            gaussians=GaussianConfig.from_dict(data.get("gaussians", {})),
        )


class GsscModel:
    """Owns the parameters and the sub-networks built on them."""

    def __init__(self, config: Optional[ModelConfig] = None):
        self.config = config or ModelConfig()
        cfg = self.config
        dims = cfg.dims
        self.params = ParamSet(cfg.seed)
        root = self.params
        self.stereo = StereoEstimator(root.scope("stereo"), cfg.stereo)
        self.disparity = DisparityCodec(root.scope("disp"), dims)
        self.image = ImageCodec(root.scope("img"), dims, cfg.cross_view)
        self.disparity_entropy = ConditionalEntropyModel(
            root.scope("disp.entropy"),
            EntropyDims(latent=dims.disparity_latent, hyper=dims.hyper_latent,
                        feature=dims.features),
            cross_view=False)
        self.image_entropy = ConditionalEntropyModel(
            root.scope("img.entropy"),
            EntropyDims(latent=dims.image_latent, hyper=dims.hyper_latent,
                        feature=dims.features),
            cross_view=cfg.cross_view != NONE)
        self.hyper_fusion = FusionScale(root.scope("img.entropy.fusion"))
        self.predictor = GaussianPredictor(root.scope("gauss"), dims.features, cfg.gaussians)
        logger.debug(f"Built model with {self.params.num_parameters()} parameters")

    @property
    def cross_view(self) -> str:
        return self.config.cross_view

    def freeze(self) -> None:
        """Fix the factorized-prior tables used for coding hyperlatents."""
        self.disparity_entropy.prior.freeze()
        self.image_entropy.prior.freeze()

    def fingerprint(self) -> int:
        self.freeze()
        return self.params.fingerprint()

    def parameter_counts(self) -> Dict[str, int]:
        counts = {name: self.params.num_parameters(name + ".") for name in SUBNETWORKS}
        counts["total"] = self.params.num_parameters()
        return counts

    def save(self, path: Union[str, Path]) -> int:
        self.freeze()
        return save_checkpoint(path, self.params, self.config.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path], expected_hash: Optional[int] = None) -> "GsscModel":
        manifest, tensors, buffers = load_checkpoint(path)
        model = cls(ModelConfig.from_dict(manifest.get("hyper", {})))
        model.params.load_state_dict(tensors)
        for name, array in buffers.items():
            model.params.set_buffer(name, array)
        stored = int(manifest["hash"], 16)
        actual = model.params.fingerprint()
        if actual != stored:
            raise CheckpointMismatchError("checkpoint content does not match its manifest hash",
                                          details={"manifest": f"{stored:016x}",
                                                   "actual": f"{actual:016x}"})
        if expected_hash is not None and actual != expected_hash:
            raise CheckpointMismatchError("stream was encoded with a different checkpoint",
                                          details={"stream": f"{expected_hash:016x}",
                                                   "checkpoint": f"{actual:016x}"})
        logger.info(f"Loaded checkpoint {path} (hash {actual:016x})")
        return model

    def latent_shapes(self, height: int, width: int) -> Dict[str, Tuple[int, int, int]]:
        """Symbol-plane shapes for padded frame dims."""
        d = self.config.dims
        h16, w16, h64, w64 = height // 16, width // 16, height // 64, width // 64
        return {
            "disp_latent": (d.disparity_latent, h16, w16),
            "disp_hyper": (d.hyper_latent, h64, w64),
            "img_latent": (d.image_latent, h16, w16),
            "img_hyper": (d.hyper_latent, h64, w64),
        }


def check_stream_hash(model: GsscModel, stream_hash: Optional[int]) -> None:
    if stream_hash is None:
        logger.warning("stream carries no checkpoint hash; decoding unchecked")
        return
    actual = model.fingerprint()
    if actual != stream_hash:
        raise CheckpointMismatchError("stream was encoded with a different checkpoint",
                                      details={"stream": f"{stream_hash:016x}",
                                               "checkpoint": f"{actual:016x}"})

