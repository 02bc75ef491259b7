"""
Two-stage toy training on synthetic scenes.

Stage 1 trains the stereo branch and the codec on source reconstruction only;
rendering is not part of the graph. Stage 2 fine-tunes end to end with the
novel-view distortion. Every step codes a two-frame clip (an I-frame followed
by a P-frame) at a QP drawn from the configured training set, with the
per-frame rate-distortion weight following the hierarchical QP pattern.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..codec.coder import FrameCoder, predict_clouds
from ..codec.model import GsscModel
from ..codec.qp import FRAME_I, FRAME_P, QpSchedule, effective_qp, qp_to_lambda
from ..codec.transforms import crop_frame, padded_size
from ..core.errors import DatasetError, NumericError
from ..geometry.camera import VIEWS, View
from ..metrics.quality import l1_loss, render_distortion
from ..render.rasterizer import render
from ..stereo.estimator import stereo_loss
from ..tensor import ops
from ..tensor.optim import AdamOptimizer
from ..tensor.tensor import Tensor
from .config import RunConfig
from .sequence import disparity_from_array, frame_tensor, initial_state
from .synthetic import SyntheticDataset

logger = logging.getLogger(__name__)

CLIP_LENGTH = 2
STAGE_SOURCE = 1
STAGE_FULL = 2

StepCallback = Callable[[int, int, float], None]


@dataclass
class TrainResult:
    model: GsscModel
    losses: List[float] = field(default_factory=list)
    stages: List[int] = field(default_factory=list)
    qps: List[int] = field(default_factory=list)


def source_loss(reconstructions: Dict[View, Tensor], frames: Dict[View, Tensor]) -> Tensor:
    """Mean L1 between decoded and original source views."""
    terms = [l1_loss(reconstructions[v], frames[v]) for v in VIEWS]
    return ops.mul_const(ops.add(terms[0], terms[1]), 0.5)


def distortion(rendered: Sequence[Tensor], targets: Sequence[Tensor], src: Tensor,
               alpha: float, beta: float) -> Tensor:
    """Novel-view distortion averaged over targets plus ``beta`` times the source loss."""
    if len(rendered) != len(targets):
        raise DatasetError("rendered and target view counts differ",
                           details={"rendered": len(rendered), "targets": len(targets)})
    total = ops.mul_const(src, beta)
    if not rendered:
        return total
    weight = 1.0 / len(rendered)
    for image, target in zip(rendered, targets):
        total = ops.add(total, ops.mul_const(render_distortion(image, target, alpha), weight))
    return total


def composite_loss(distortion_term: Tensor, rate_bpp: Tensor, disparity_term: Tensor,
                   lam: float, gamma: float) -> Tensor:
    """lambda * D + gamma * L_disp + R."""
    return ops.add(ops.add(ops.mul_const(distortion_term, lam),
                           ops.mul_const(disparity_term, gamma)), rate_bpp)


def rate_term(bits: Tensor, height: int, width: int) -> Tensor:
    """Estimated bits of both views per pixel of one padded view."""
    ph, pw = padded_size(height, width)
    return ops.mul_const(bits, 1.0 / (2 * ph * pw))


def smoothed(values: Sequence[float], window: int = 8) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` entries average what is available."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        return data
    sums = np.concatenate([[0.0], np.cumsum(data)])
    index = np.arange(data.size)
    lo = np.maximum(0, index - window + 1)
    return (sums[index + 1] - sums[lo]) / (index - lo + 1)


class ToyTrainer:
    """Owns the optimizer and the sampling state of one training run."""

    def __init__(self, dataset: SyntheticDataset, config: RunConfig, model: GsscModel):
        if dataset.frame_count < CLIP_LENGTH:
            raise DatasetError(f"training needs at least {CLIP_LENGTH} frames")
        if not dataset.disparities[View.LEFT] or not dataset.targets:
            raise DatasetError("training needs ground-truth disparity and target views")
        self.dataset = dataset
        self.config = config
        self.model = model
        self.coder = FrameCoder(model)
        self.optimizer = AdamOptimizer(model.params, lr=config.learning_rate)
        self.rng = np.random.default_rng(config.seed)
        cam = dataset.rig.left
        self.height, self.width = cam.height, cam.width

    def _frame_inputs(self, t: int):
        data = self.dataset
        frames = {v: frame_tensor(data.frames[v][t]) for v in VIEWS}
        has_masks = bool(data.masks[View.LEFT])
        gt = {v: disparity_from_array(data.disparities[v][t], v,
                                      data.masks[v][t] if has_masks else None) for v in VIEWS}
        targets = [Tensor(np.asarray(seq[t], dtype=np.float64), dtype=frames[View.LEFT].dtype)
                   for seq in data.targets]
        return frames, gt, targets

    def step(self, stage: int) -> Dict[str, float]:
        """One optimizer update on a random clip."""
        cfg = self.config
        model = self.model
        h, w = self.height, self.width
        base_qp = int(self.rng.choice(cfg.train_qps))
        schedule = QpSchedule(base_qp, cfg.schedule().pattern, cfg.gop)
        t0 = int(self.rng.integers(0, self.dataset.frame_count - CLIP_LENGTH + 1))

        self.optimizer.zero_grad()
        state = initial_state(model, *padded_size(h, w))
        loss: Optional[Tensor] = None
        terms = {"distortion": 0.0, "bpp": 0.0, "disparity": 0.0}
        for i in range(CLIP_LENGTH):
            frames, gt, targets = self._frame_inputs(t0 + i)
            qp = effective_qp(schedule, i)
            estimates = model.stereo.estimate(frames[View.LEFT], frames[View.RIGHT])
            disparity_term = stereo_loss(estimates, gt, cfg.stereo_mu)
            recon = self.coder.forward_train(frames, {v: estimates[v][-1] for v in VIEWS},
                                             state, qp, self.rng,
                                             FRAME_I if i == 0 else FRAME_P)
            state = recon.state
            src = source_loss({v: crop_frame(recon.images[v], h, w) for v in VIEWS},
                              {v: crop_frame(frames[v], h, w) for v in VIEWS})
            if stage == STAGE_SOURCE:
                d_term = src
            else:
                cloud = predict_clouds(model, recon, self.dataset.rig, residuals=cfg.residuals)
                rendered = [render(cloud, cam, cfg.background) for cam in self.dataset.rig.targets]
                d_term = distortion(rendered, targets, src, cfg.alpha, cfg.beta)
            rate = rate_term(recon.bits, h, w)
            frame_loss = composite_loss(d_term, rate, disparity_term, qp_to_lambda(qp), cfg.gamma)
            loss = frame_loss if loss is None else ops.add(loss, frame_loss)
            terms["distortion"] += d_term.item() / CLIP_LENGTH
            terms["bpp"] += rate.item() / CLIP_LENGTH
            terms["disparity"] += disparity_term.item() / CLIP_LENGTH

        loss = ops.mul_const(loss, 1.0 / CLIP_LENGTH)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError("training loss is not finite",
                               details={"stage": stage, "qp": base_qp, "clip": t0, **terms})
        loss.backward()
        self.optimizer.step()
        return {"loss": value, "qp": base_qp, **terms}


def train_toy(dataset: SyntheticDataset, config: RunConfig, model: Optional[GsscModel] = None,
              callback: Optional[StepCallback] = None) -> TrainResult:
    """Run both stages and return the frozen model with its loss history.

    Args:
        dataset: Synthetic scene with ground-truth disparity and target views
        config: Step counts, loss weights, training QPs and seed
        model: Model to fine-tune; a fresh one is built from ``config`` when omitted
        callback: Called after every step with (step, stage, loss)

    Returns:
        TrainResult holding the trained model and per-step losses
    """
    model = model or GsscModel(config.model_config())
    trainer = ToyTrainer(dataset, config, model)
    result = TrainResult(model)
    plan = [(STAGE_SOURCE, config.stage1_steps), (STAGE_FULL, config.stage2_steps)]
    step = 0
    for stage, steps in plan:
        if steps:
            logger.info(f"Training stage {stage}: {steps} steps")
        for _ in range(steps):
            metrics = trainer.step(stage)
            result.losses.append(metrics["loss"])
            result.stages.append(stage)
            result.qps.append(int(metrics["qp"]))
            logger.debug(f"step {step} stage {stage} QP {metrics['qp']}: loss {metrics['loss']:.5f} "
                         f"D {metrics['distortion']:.5f} bpp {metrics['bpp']:.4f} "
                         f"L_disp {metrics['disparity']:.4f}")
            if callback is not None:
                callback(step, stage, metrics["loss"])
            step += 1
    model.freeze()
    if result.losses:
        curve = smoothed(result.losses)
        logger.info(f"Training finished after {step} steps: smoothed loss "
                    f"{curve[0]:.4f} -> {curve[-1]:.4f}")
    return result
