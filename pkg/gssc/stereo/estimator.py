"""
Cost-volume stereo estimation with iterative convolutional refinement.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..core.errors import DimensionError, ValidationError
from ..geometry.camera import View
from ..geometry.disparity import DisparityMap
from ..tensor import ops
from ..tensor.layers import BlockStack, Conv2d
from ..tensor.params import ParamScope
from ..tensor.tensor import Tensor, make_result

logger = logging.getLogger(__name__)

PATCH = 8
SENTINEL = -1e9


@dataclass
class StereoConfig:
    """Estimator constants."""

    iterations: int = 4
    mu: float = 0.9
    max_disparity: int = 24
    temperature: float = 1.0
    lookup_radius: int = 2
    feature_channels: int = 32
    blocks: int = 3
    hidden_channels: int = 32

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("stereo iterations must be >= 1")
        if self.max_disparity < 1:
            raise ValidationError("max_disparity must be >= 1")
        if self.temperature <= 0:
            raise ValidationError("soft-argmin temperature must be positive")


@dataclass
class CostVolume:
    """Correlation scores (D, h, w) at 1/8 resolution for one view."""

    scores: Tensor
    valid: np.ndarray
    view: View

    @property
    def max_disparity(self) -> int:
        return self.scores.shape[0]


def build_cost_volume(feat_self: Tensor, feat_other: Tensor, max_disparity: int,
                      view: View = View.LEFT) -> CostVolume:
    """Channel-normalized dot-product correlation over candidate disparities.

    Entry (d, y, x) compares the view's feature at (y, x) with the opposite
    feature at (y, x - d) for the left view and (y, x + d) for the right one.
    Candidates that fall outside the image hold a large negative sentinel.
    """
    if feat_self.shape != feat_other.shape:
        raise DimensionError("cost volume features differ in shape",
                             details={"self": feat_self.shape, "other": feat_other.shape})
    if max_disparity < 1:
        raise ValidationError("max_disparity must be >= 1")
    c, h, w = feat_self.shape
    a, b = feat_self.data, feat_other.data
    scores = np.full((max_disparity, h, w), SENTINEL, dtype=feat_self.dtype)
    valid = np.zeros((max_disparity, h, w), dtype=bool)
    left = view is View.LEFT
    for d in range(min(max_disparity, w)):
        if left:
            scores[d, :, d:] = np.sum(a[:, :, d:] * b[:, :, :w - d], axis=0) / c
            valid[d, :, d:] = True
        else:
            scores[d, :, :w - d] = np.sum(a[:, :, :w - d] * b[:, :, d:], axis=0) / c
            valid[d, :, :w - d] = True

    def backward(g: np.ndarray) -> None:
        ga = np.zeros_like(a) if feat_self.requires_grad else None
        gb = np.zeros_like(b) if feat_other.requires_grad else None
        for d in range(min(max_disparity, w)):
            gd = g[d] / c
            if left:
                if ga is not None:
                    ga[:, :, d:] += gd[None, :, d:] * b[:, :, :w - d]
                if gb is not None:
                    gb[:, :, :w - d] += gd[None, :, d:] * a[:, :, d:]
            else:
                if ga is not None:
                    ga[:, :, :w - d] += gd[None, :, :w - d] * b[:, :, d:]
                if gb is not None:
                    gb[:, :, d:] += gd[None, :, :w - d] * a[:, :, :w - d]
        if ga is not None:
            feat_self.accumulate(ga)
        if gb is not None:
            feat_other.accumulate(gb)

    return CostVolume(make_result(scores, (feat_self, feat_other), backward), valid, view)


def soft_argmin(cost: CostVolume, temperature: float = 1.0) -> Tensor:
    """Expected disparity under softmax(correlation / temperature), (1, h, w)."""
    probs = ops.softmax_channels(ops.mul_const(cost.scores, 1.0 / temperature))
    candidates = np.arange(cost.max_disparity, dtype=cost.scores.dtype)[:, None, None]
    return ops.sum_channels(ops.mul_const(probs, candidates))


def cost_lookup(cost: CostVolume, disparity: Tensor, radius: int) -> Tensor:
    """Linearly interpolated correlation at disparity + offset for offsets in [-r, r].

    Out-of-image candidates read as zero correlation.
    """
    scores = cost.scores.data * cost.valid
    dmax = cost.max_disparity
    d = disparity.data[0].astype(np.float64)
    rows = []
    stash = []
    for offset in range(-radius, radius + 1):
        raw = d + offset
        pos = np.clip(raw, 0.0, dmax - 1)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, dmax - 1)
        frac = (pos - i0).astype(scores.dtype)
        s0 = np.take_along_axis(scores, i0[None], axis=0)[0]
        s1 = np.take_along_axis(scores, i1[None], axis=0)[0]
        rows.append((1 - frac) * s0 + frac * s1)
        stash.append((i0, i1, frac, s1 - s0, (raw >= 0) & (raw <= dmax - 1)))
    out = np.stack(rows, axis=0)

    def backward(g: np.ndarray) -> None:
        if cost.scores.requires_grad:
            full = np.zeros_like(scores)
            h, w = d.shape
            yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            for k, (i0, i1, frac, _, _) in enumerate(stash):
                np.add.at(full, (i0, yy, xx), g[k] * (1 - frac))
                np.add.at(full, (i1, yy, xx), g[k] * frac)
            cost.scores.accumulate(full * cost.valid)
        if disparity.requires_grad:
            grad = np.zeros_like(d)
            for k, (_, _, _, slope, inside) in enumerate(stash):
                grad += g[k] * slope * inside
            disparity.accumulate(grad[None])

    return make_result(out, (cost.scores, disparity), backward)


def upsample_disparity(d: Tensor, factor: int = PATCH) -> Tensor:
    """Bilinear upsampling with disparities rescaled to the finer pixel grid."""
    return ops.mul_const(ops.upsample_bilinear(d, factor), float(factor))


class StereoEstimator:
    """Weight-shared feature extractor, cost volume and K-step refinement."""

    def __init__(self, scope: ParamScope, config: StereoConfig):
        self.config = config
        cf = config.feature_channels
        self.project = Conv2d(scope.scope("patchify"), 3 * PATCH * PATCH, cf, kernel=1)
        self.blocks = BlockStack(scope.scope("features"), cf, config.blocks)
        lookup = 2 * config.lookup_radius + 1
        self.update_in = Conv2d(scope.scope("update.in"), lookup + 1 + cf,
                                config.hidden_channels, kernel=3)
        self.update_out = Conv2d(scope.scope("update.out"), config.hidden_channels, 1,
                                 kernel=3, init="normal")

    def features(self, frame: Tensor) -> Tensor:
        if frame.shape[1] % PATCH or frame.shape[2] % PATCH:
            raise DimensionError("stereo input dims must be divisible by 8",
                                 details={"shape": frame.shape})
        return self.blocks(self.project(ops.space_to_depth(frame, PATCH)))

    def update(self, cost: CostVolume, feat: Tensor, disparity: Tensor) -> Tensor:
        cfg = self.config
        lookup = cost_lookup(cost, disparity, cfg.lookup_radius)
        position = ops.mul_const(disparity, 1.0 / cfg.max_disparity)
        hidden = ops.silu(self.update_in(ops.concat([lookup, position, feat])))
        return ops.clamp(ops.add(disparity, self.update_out(hidden)), 0.0, None)

    def refine(self, cost: CostVolume, feat: Tensor, iterations: int) -> List[DisparityMap]:
        if iterations < 1:
            raise ValidationError("refinement needs at least one iteration")
        current = soft_argmin(cost, self.config.temperature)
        estimates = []
        for _ in range(iterations):
            current = self.update(cost, feat, current)
            estimates.append(DisparityMap(upsample_disparity(current), cost.view))
        return estimates

    def estimate(self, frame_left: Tensor, frame_right: Tensor,
                 iterations: int = 0) -> Dict[View, List[DisparityMap]]:
        """All intermediate full-resolution estimates for both views."""
        k = iterations or self.config.iterations
        feat_l, feat_r = extract_stereo_features(frame_left, frame_right, self)
        out = {}
        for view, a, b in ((View.LEFT, feat_l, feat_r), (View.RIGHT, feat_r, feat_l)):
            cost = build_cost_volume(a, b, self.config.max_disparity, view)
            out[view] = self.refine(cost, a, k)
        logger.debug(f"Stereo estimate: {k} iterations, "
                     f"mean L={np.mean(out[View.LEFT][-1].numpy()):.3f}px")
        return out


def extract_stereo_features(frame_left: Tensor, frame_right: Tensor,
                            estimator: StereoEstimator) -> Tuple[Tensor, Tensor]:
    """Run the shared 1/8-resolution feature extractor on both frames."""
    if frame_left.shape != frame_right.shape:
        raise DimensionError("stereo frames differ in shape",
                             details={"left": frame_left.shape, "right": frame_right.shape})
    return estimator.features(frame_left), estimator.features(frame_right)


def refine_disparity(cost: CostVolume, iterations: int, feat: Tensor,
                     estimator: StereoEstimator) -> List[DisparityMap]:
    return estimator.refine(cost, feat, iterations)


def disparity_loss(estimates: Sequence[DisparityMap], gt: DisparityMap, mu: float) -> Tensor:
    """sum_k mu^(K-k) * mean |gt - est_k| over the ground truth's valid pixels."""
    if not estimates:
        raise ValidationError("disparity loss needs at least one estimate")
    mask = gt.valid.astype(gt.values.dtype)[None]
    count = float(mask.sum())
    zero = Tensor(np.zeros(1), dtype=estimates[0].values.dtype)
    if count == 0:
        logger.warning("Disparity loss: ground truth has no valid pixels, returning 0")
        return zero
    k_total = len(estimates)
    loss = zero
    for k, est in enumerate(estimates, start=1):
        err = ops.absolute(ops.sub(est.values, gt.values))
        term = ops.mul_const(ops.total(ops.mul_const(err, mask)), mu ** (k_total - k) / count)
        loss = ops.add(loss, term)
    return loss


def stereo_loss(estimates: Dict[View, List[DisparityMap]],
                gt: Dict[View, DisparityMap], mu: float) -> Tensor:
    """Disparity loss summed over both views."""
    views = list(estimates)
    loss = disparity_loss(estimates[views[0]], gt[views[0]], mu)
    for view in views[1:]:
        loss = ops.add(loss, disparity_loss(estimates[view], gt[view], mu))
    return loss
