"""
Quantization, probability models and rate estimation.

Two probability models are used:

* a Gaussian conditional for main latents whose mean and scale come from the
  hyperprior, the temporal context, the cross-view context and the already
  decoded quadtree groups;
* a per-channel factorized prior for hyperlatents, a piecewise-linear CDF
  whose bin masses are learned.

Training uses continuous likelihoods (scipy's normal CDF). Coding uses
16-bit fixed-point tables built only from IEEE arithmetic, so encoder and
decoder tables agree bit for bit.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.special import ndtr

from ..core.errors import CorruptStreamError, ValidationError
from ..tensor import ops
from ..tensor.layers import Conv2d
from ..tensor.params import ParamScope
from ..tensor.tensor import Tensor, make_result
from .range_coder import PROB_TOTAL, RangeDecoder, cumulative, range_decode, range_encode

logger = logging.getLogger(__name__)

SIGMA_MIN = 0.04
SIGMA_MAX = 256.0
SYMBOL_LIMIT = 255
NUM_SYMBOLS = 2 * SYMBOL_LIMIT + 1
LIKELIHOOD_FLOOR = 1e-9
GROUPS = 4
MEAN_STEP = 1.0 / 256.0
SCALE_LEVELS = 128

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

# ---------------------------------------------------------------------------
# Deterministic special functions (coding path only)
# ---------------------------------------------------------------------------

_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_INV_LN2 = 1.44269504088896338700e+00
_EXP_TAYLOR = tuple(1.0 / math.factorial(k) for k in range(12, -1, -1))

_ERF_P = 0.3275911
_ERF_A = (1.061405429, -1.453152027, 1.421413741, -0.284496736, 0.254829592)


def det_exp(x: np.ndarray) -> np.ndarray:
    """exp via range reduction and a fixed Taylor polynomial."""
    x = np.maximum(np.asarray(x, dtype=np.float64), -700.0)
    k = np.floor(x * _INV_LN2 + 0.5)
    r = (x - k * _LN2_HI) - k * _LN2_LO
    p = np.zeros_like(r)
    for c in _EXP_TAYLOR:
        p = p * r + c
    return np.ldexp(p, k.astype(np.int64))


def det_erf(x: np.ndarray) -> np.ndarray:
    """Rational erf approximation (max abs error 1.5e-7), exactly odd."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    t = 1.0 / (1.0 + _ERF_P * a)
    poly = np.zeros_like(t)
    for c in _ERF_A:
        poly = (poly + c) * t
    value = 1.0 - poly * det_exp(-(a * a))
    return np.where(x < 0, -value, value)


# Log-spaced scales in two segments that meet at exactly 1.0 (index UNIT_SCALE_INDEX).
UNIT_SCALE_INDEX = 46
_LN_INV_SIGMA_MIN = 3.2188758248682006
_LN_SIGMA_MAX = 5.545177444479562
_SCALE_TABLE = np.concatenate([
    det_exp((np.arange(UNIT_SCALE_INDEX, dtype=np.float64) - UNIT_SCALE_INDEX)
            * (_LN_INV_SIGMA_MIN / UNIT_SCALE_INDEX)),
    det_exp(np.arange(SCALE_LEVELS - UNIT_SCALE_INDEX, dtype=np.float64)
            * (_LN_SIGMA_MAX / (SCALE_LEVELS - 1 - UNIT_SCALE_INDEX))),
])
_SCALE_TABLE[0] = SIGMA_MIN
_SCALE_TABLE[-1] = SIGMA_MAX


def round_half_away(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def snap_parameters(mu: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Snap means to a 1/256 grid and scales onto a fixed log-spaced table."""
    mu_q = round_half_away(np.asarray(mu, dtype=np.float64) / MEAN_STEP) * MEAN_STEP
    sigma = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
    index = np.clip(np.searchsorted(_SCALE_TABLE, sigma), 1, SCALE_LEVELS - 1)
    lower = _SCALE_TABLE[index - 1]
    upper = _SCALE_TABLE[index]
    index = np.where(sigma - lower <= upper - sigma, index - 1, index)
    return mu_q, _SCALE_TABLE[index]


def _fixed_point(probs: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Quantize probability rows to integers with floor 1 that sum to 2^16.

    The rounding remainder goes to the ``anchor`` column of each row.
    """
    budget = PROB_TOTAL - probs.shape[1]
    q = np.floor(np.clip(probs, 0.0, 1.0) * budget).astype(np.int64) + 1
    deficit = PROB_TOTAL - q.sum(axis=1)
    rows = np.arange(q.shape[0])
    column = np.where(deficit >= 0, anchor, np.argmax(q, axis=1))
    q[rows, column] += deficit
    return q


def gaussian_probability(symbol: Union[int, np.ndarray], mu, sigma) -> np.ndarray:
    """Mass of [s - 1/2, s + 1/2] under N(mu, sigma^2), deterministic erf."""
    sigma = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
    s = np.asarray(symbol, dtype=np.float64)
    upper = det_erf((s + 0.5 - mu) / sigma * _INV_SQRT2)
    lower = det_erf((s - 0.5 - mu) / sigma * _INV_SQRT2)
    return 0.5 * (upper - lower)


def gaussian_pmf_tables(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """(N, 511) fixed-point tables over symbols -255..255 with tails folded in."""
    mu_q, sigma_q = snap_parameters(np.ravel(mu), np.ravel(sigma))
    edges = np.arange(NUM_SYMBOLS + 1, dtype=np.float64) - (SYMBOL_LIMIT + 0.5)
    scaled = (edges[None, :] - mu_q[:, None]) / sigma_q[:, None] * _INV_SQRT2
    cdf = det_erf(scaled)
    cdf[:, 0] = -1.0
    cdf[:, -1] = 1.0
    probs = 0.5 * (cdf[:, 1:] - cdf[:, :-1])
    anchor = (np.clip(round_half_away(mu_q), -SYMBOL_LIMIT, SYMBOL_LIMIT)
              + SYMBOL_LIMIT).astype(np.int64)
    return _fixed_point(probs, anchor)


def gaussian_pmf(symbol: int, mu: float, sigma: float) -> int:
    """Fixed-point probability of one symbol (entry of the renormalized table)."""
    if not -SYMBOL_LIMIT <= symbol <= SYMBOL_LIMIT:
        raise ValidationError(f"symbol {symbol} outside [-{SYMBOL_LIMIT}, {SYMBOL_LIMIT}]")
    table = gaussian_pmf_tables(np.array([mu]), np.array([sigma]))
    return int(table[0, symbol + SYMBOL_LIMIT])


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

@dataclass
class SymbolPlane:
    """Integer latent symbols plus the number of values that saturated."""

    symbols: np.ndarray
    saturated: int = 0

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.symbols.shape

    def groups(self) -> np.ndarray:
        return quadtree_groups(self.symbols.shape)

    def as_tensor(self, dtype: Optional[type] = None) -> Tensor:
        return Tensor(self.symbols.astype(np.float64), dtype=dtype)


def quantize_train(y: Tensor, rng: Union[int, np.random.Generator]) -> Tensor:
    """Additive U(-1/2, 1/2) noise with an identity gradient."""
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    noise = generator.uniform(-0.5, 0.5, size=y.shape)
    return ops.add_const(y, noise)


def quantize_infer(y: Union[Tensor, np.ndarray]) -> SymbolPlane:
    """Round half away from zero and saturate to +-255."""
    values = y.data if isinstance(y, Tensor) else np.asarray(y)
    rounded = round_half_away(values)
    saturated = int(np.count_nonzero(np.abs(rounded) > SYMBOL_LIMIT))
    if saturated:
        logger.warning(f"{saturated} latent symbols saturated at +-{SYMBOL_LIMIT}")
    symbols = np.clip(rounded, -SYMBOL_LIMIT, SYMBOL_LIMIT).astype(np.int32)
    return SymbolPlane(symbols, saturated)


# ---------------------------------------------------------------------------
# Quadtree context schedule
# ---------------------------------------------------------------------------

def quadtree_groups(shape: Tuple[int, ...]) -> np.ndarray:
    """Group index per element of a (C, h, w) latent.

    Channels split into halves a = [0, ceil(C/2)) and b; spatial phase is even
    when (y + x) is even. Groups in decoding order:
    0 = (a, even), 1 = (b, odd), 2 = (a, odd), 3 = (b, even).
    """
    c, h, w = shape
    half_a = (np.arange(c) < (c + 1) // 2)[:, None, None]
    even = ((np.arange(h)[:, None] + np.arange(w)[None, :]) % 2 == 0)[None]
    groups = np.where(half_a,
                      np.where(even, 0, 2),
                      np.where(even, 3, 1))
    return np.broadcast_to(groups, shape).astype(np.int8).copy()


def coding_order(groups: np.ndarray, group: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(c, y, x) index arrays of one group ordered by row, column, channel."""
    c, y, x = np.nonzero(groups == group)
    order = np.lexsort((c, x, y))
    return c[order], y[order], x[order]


# ---------------------------------------------------------------------------
# Differentiable likelihoods (training path)
# ---------------------------------------------------------------------------

def gaussian_likelihood(y: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """P([y - 1/2, y + 1/2]) under N(mu, sigma^2), floored at 1e-9."""
    v = np.abs(y.data.astype(np.float64) - mu.data)
    sign = np.sign(y.data.astype(np.float64) - mu.data)
    s = sigma.data.astype(np.float64)
    a = (0.5 - v) / s
    b = (-0.5 - v) / s
    raw = ndtr(a) - ndtr(b)
    active = raw > LIKELIHOOD_FLOOR
    out = np.maximum(raw, LIKELIHOOD_FLOOR)

    def backward(g: np.ndarray) -> None:
        pa = _INV_SQRT_2PI * np.exp(-0.5 * a * a)
        pb = _INV_SQRT_2PI * np.exp(-0.5 * b * b)
        g = g * active
        d_v = (pb - pa) / s
        if y.requires_grad:
            y.accumulate(g * d_v * sign)
        if mu.requires_grad:
            mu.accumulate(-g * d_v * sign)
        if sigma.requires_grad:
            sigma.accumulate(g * (b * pb - a * pa) / s)

    return make_result(out.astype(y.dtype), (y, mu, sigma), backward)


def bits_of(likelihood: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Sum of -log2 likelihood, optionally over a mask."""
    nll = ops.mul_const(ops.log2(likelihood, LIKELIHOOD_FLOOR), -1.0)
    if mask is not None:
        nll = ops.mul_const(nll, mask.astype(likelihood.dtype))
    return ops.total(nll)


# ---------------------------------------------------------------------------
# Factorized prior for hyperlatents
# ---------------------------------------------------------------------------

_KNOTS = np.concatenate(([-SYMBOL_LIMIT - 0.5], np.arange(-32.0, 33.0, 4.0),
                         [SYMBOL_LIMIT + 0.5]))


class FactorizedPrior:
    """Per-channel piecewise-linear CDF with learned bin masses."""

    def __init__(self, scope: ParamScope, channels: int):
        self.scope = scope
        self.channels = channels
        bins = len(_KNOTS) - 1
        widths = np.diff(_KNOTS)
        # start close to a unit-width Laplacian-like bump
        init = -np.abs(0.5 * (_KNOTS[:-1] + _KNOTS[1:])) / 8.0 + np.log(widths) * 0.25
        self.logits = scope.add("logits", (channels, bins), init="constant",
                                value=np.broadcast_to(init, (channels, bins)))

    def _masses(self) -> np.ndarray:
        z = self.logits.data.astype(np.float64)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    @staticmethod
    def _cdf_terms(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Fraction of each bin below ``values`` and the in-bin indicator."""
        lo, hi = _KNOTS[:-1], _KNOTS[1:]
        frac = np.clip((values[..., None] - lo) / (hi - lo), 0.0, 1.0)
        inside = (values[..., None] > lo) & (values[..., None] < hi)
        return frac, inside

    def likelihood(self, z: Tensor) -> Tensor:
        """Differentiable P([z - 1/2, z + 1/2]) per element of a (C, h, w) tensor."""
        if z.shape[0] != self.channels:
            raise ValidationError("hyperlatent channel count mismatch",
                                  details={"expected": self.channels, "got": z.shape[0]})
        masses = self._masses()
        widths = np.diff(_KNOTS)
        values = z.data.astype(np.float64)
        fu, iu = self._cdf_terms(values + 0.5)
        fl, il = self._cdf_terms(values - 0.5)
        m = masses[:, None, None, :]
        raw = np.sum(m * (fu - fl), axis=-1)
        active = raw > LIKELIHOOD_FLOOR
        out = np.maximum(raw, LIKELIHOOD_FLOOR)
        logits = self.logits

        def backward(g: np.ndarray) -> None:
            g = g * active
            if z.requires_grad:
                density = m / widths
                z.accumulate(g * np.sum(density * (iu.astype(float) - il.astype(float)), axis=-1))
            if logits.requires_grad:
                d_mass = np.sum(g[..., None] * (fu - fl), axis=(1, 2))
                dot = np.sum(d_mass * masses, axis=1, keepdims=True)
                logits.accumulate(masses * (d_mass - dot))

        return make_result(out.astype(z.dtype), (z, logits), backward)

    def compute_tables(self) -> np.ndarray:
        """(C, 511) fixed-point tables with tails folded into the extremes."""
        masses = self._masses()
        edges = np.arange(NUM_SYMBOLS + 1, dtype=np.float64) - (SYMBOL_LIMIT + 0.5)
        frac, _ = self._cdf_terms(edges)
        cdf = frac @ masses.T
        cdf[0], cdf[-1] = 0.0, 1.0
        probs = (cdf[1:] - cdf[:-1]).T
        return _fixed_point(probs, np.argmax(probs, axis=1))

    def freeze(self) -> np.ndarray:
        """Store the integer tables as a buffer; coding reads only the buffer."""
        tables = self.compute_tables().astype(np.int32)
        self.scope.set_buffer("tables", tables)
        return tables

    def tables(self) -> np.ndarray:
        tables = self.scope.buffer("tables")
        if tables is None:
            tables = self.freeze()
        return tables.astype(np.int64)


# ---------------------------------------------------------------------------
# Conditional entropy model
# ---------------------------------------------------------------------------

@dataclass
class EntropyParams:
    """Gaussian parameters for one quadtree step (full latent shape)."""

    mu: Tensor
    sigma: Tensor
    step: int

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValidationError("mu and sigma shapes differ")


@dataclass
class EntropyDims:
    latent: int
    hyper: int = 16
    hidden: int = 32
    temporal: int = 16
    context: int = 64
    feature: int = 32


class ConditionalEntropyModel:
    """Hyperprior analysis/synthesis plus the four per-step context networks."""

    def __init__(self, scope: ParamScope, dims: EntropyDims, cross_view: bool):
        self.dims = dims
        self.cross_view = cross_view
        d = dims
        self.analysis_in = Conv2d(scope.scope("h_a.0"), d.latent, d.hidden, 3, stride=2)
        self.analysis_out = Conv2d(scope.scope("h_a.1"), d.hidden, d.hyper, 3, stride=2)
        self.synthesis = Conv2d(scope.scope("h_s.0"), d.hyper, d.hidden, 3)
        self.expand = Conv2d(scope.scope("h_s.expand"), d.hidden, d.hidden * 16, 1)
        self.expand_post = Conv2d(scope.scope("h_s.post"), d.hidden, d.hidden, 3)
        if cross_view:
            self.cross_expand = Conv2d(scope.scope("cross.expand"), d.hidden, d.hidden * 16, 1)
        self.temporal = Conv2d(scope.scope("temporal"), d.feature, d.temporal, 3, stride=2)
        c_in = d.hidden + d.latent + d.temporal + (d.hidden if cross_view else 0)
        self.context_in = [Conv2d(scope.scope(f"ctx{k}.0"), c_in, d.context, 3)
                           for k in range(GROUPS)]
        self.context_out = [Conv2d(scope.scope(f"ctx{k}.1"), d.context, 2 * d.latent, 3,
                                   init="normal")
                            for k in range(GROUPS)]
        self.prior = FactorizedPrior(scope.scope("prior"), d.hyper)

    def hyper_analysis(self, y: Tensor) -> Tensor:
        return self.analysis_out(ops.silu(self.analysis_in(ops.absolute(y))))

    def hyper_base(self, z_hat: Tensor) -> Tensor:
        """Decoded hyper features at 1/64 resolution."""
        return ops.silu(self.synthesis(z_hat))

    def hyper_features(self, h0: Tensor) -> Tensor:
        return self.expand_post(ops.silu(ops.pixel_shuffle(self.expand(h0), 4)))

    def cross_features(self, fused_h0: Tensor) -> Tensor:
        return ops.silu(ops.pixel_shuffle(self.cross_expand(fused_h0), 4))

    def temporal_features(self, previous: Tensor) -> Tensor:
        return ops.silu(self.temporal(previous))

    def parameters(self, hyper: Tensor, decoded: Tensor, temporal: Tensor,
                   cross: Optional[Tensor], step: int) -> EntropyParams:
        """Mean and scale for quadtree step ``step``.

        ``decoded`` must already be zero outside groups < step.
        """
        if not 0 <= step < GROUPS:
            raise ValidationError(f"quadtree step {step} outside [0, {GROUPS})")
        parts = [hyper, decoded, temporal]
        if self.cross_view:
            if cross is None:
                raise ValidationError("cross-view context required by this entropy model")
            parts.append(cross)
        hidden = ops.silu(self.context_in[step](ops.concat(parts)))
        out = self.context_out[step](hidden)
        c = self.dims.latent
        mu = ops.slice_channels(out, 0, c)
        sigma = ops.clamp(ops.exp(ops.slice_channels(out, c, 2 * c)), SIGMA_MIN, SIGMA_MAX)
        return EntropyParams(mu, sigma, step)


def entropy_parameters(model: ConditionalEntropyModel, hyper: Tensor, decoded: Tensor,
                       temporal: Tensor, cross: Optional[Tensor], step: int) -> EntropyParams:
    return model.parameters(hyper, decoded, temporal, cross, step)


ParamsForStep = Callable[[int, np.ndarray], EntropyParams]


def latent_rate_train(model: ConditionalEntropyModel, y_tilde: Tensor, hyper: Tensor,
                      temporal: Tensor, cross: Optional[Tensor]) -> Tensor:
    """Bits of noisy latents with all four quadtree steps evaluated in parallel."""
    groups = quadtree_groups(y_tilde.shape)
    bits = None
    for step in range(GROUPS):
        visible = (groups < step).astype(y_tilde.dtype)
        decoded = ops.mul_const(y_tilde, visible)
        params = model.parameters(hyper, decoded, temporal, cross, step)
        lik = gaussian_likelihood(y_tilde, params.mu, params.sigma)
        term = bits_of(lik, groups == step)
        bits = term if bits is None else ops.add(bits, term)
    return bits


def encode_latent(plane: SymbolPlane, params_for_step: ParamsForStep) -> bytes:
    """Range-code a latent plane group by group."""
    symbols = plane.symbols
    groups = quadtree_groups(symbols.shape)
    decoded = np.zeros(symbols.shape, dtype=np.float64)
    coded: List[int] = []
    tables: List[np.ndarray] = []
    for step in range(GROUPS):
        params = params_for_step(step, decoded)
        c, y, x = coding_order(groups, step)
        tables.append(gaussian_pmf_tables(params.mu.data[c, y, x], params.sigma.data[c, y, x]))
        coded.extend((symbols[c, y, x] + SYMBOL_LIMIT).tolist())
        decoded[c, y, x] = symbols[c, y, x]
    all_tables = np.concatenate(tables) if tables else np.zeros((0, NUM_SYMBOLS), np.int64)
    return range_encode(coded, all_tables)


def decode_latent(blob: bytes, shape: Tuple[int, int, int],
                  params_for_step: ParamsForStep) -> SymbolPlane:
    """Inverse of ``encode_latent``; tables are rebuilt step by step."""
    groups = quadtree_groups(shape)
    decoded = np.zeros(shape, dtype=np.float64)
    decoder = RangeDecoder(blob)
    for step in range(GROUPS):
        params = params_for_step(step, decoded)
        c, y, x = coding_order(groups, step)
        cums = cumulative(gaussian_pmf_tables(params.mu.data[c, y, x],
                                              params.sigma.data[c, y, x]))
        values = np.empty(len(c), dtype=np.int64)
        for i in range(len(c)):
            cum = cums[i]
            target = decoder.decode_target(int(cum[-1]))
            s = int(np.searchsorted(cum, target, side="right")) - 1
            decoder.update(int(cum[s + 1] - cum[s]), int(cum[s]))
            values[i] = s - SYMBOL_LIMIT
        decoded[c, y, x] = values
    if not decoder.exhausted():
        raise CorruptStreamError("trailing bytes after latent payload")
    return SymbolPlane(decoded.astype(np.int32))


def encode_hyper(plane: SymbolPlane, prior: FactorizedPrior) -> bytes:
    tables = prior.tables()
    c = np.repeat(np.arange(plane.shape[0]), plane.shape[1] * plane.shape[2])
    return range_encode((plane.symbols.reshape(-1) + SYMBOL_LIMIT).tolist(), tables[c])


def decode_hyper(blob: bytes, shape: Tuple[int, int, int], prior: FactorizedPrior) -> SymbolPlane:
    tables = prior.tables()
    c = np.repeat(np.arange(shape[0]), shape[1] * shape[2])
    symbols = range_decode(blob, tables[c], len(c))
    return SymbolPlane((np.asarray(symbols, dtype=np.int32) - SYMBOL_LIMIT).reshape(shape))


def estimate_rate(plane: SymbolPlane, params_for_step: ParamsForStep) -> float:
    """Inference-mode bits: sum of -log2 of the fixed-point table entries."""
    symbols = plane.symbols
    groups = quadtree_groups(symbols.shape)
    decoded = np.zeros(symbols.shape, dtype=np.float64)
    bits = 0.0
    for step in range(GROUPS):
        params = params_for_step(step, decoded)
        c, y, x = coding_order(groups, step)
        tables = gaussian_pmf_tables(params.mu.data[c, y, x], params.sigma.data[c, y, x])
        freq = tables[np.arange(len(c)), symbols[c, y, x] + SYMBOL_LIMIT]
        bits += float(np.sum(-np.log2(freq / PROB_TOTAL)))
        decoded[c, y, x] = symbols[c, y, x]
    return bits


def estimate_hyper_rate(plane: SymbolPlane, prior: FactorizedPrior) -> float:
    tables = prior.tables()
    c = np.repeat(np.arange(plane.shape[0]), plane.shape[1] * plane.shape[2])
    freq = tables[c, plane.symbols.reshape(-1) + SYMBOL_LIMIT]
    return float(np.sum(-np.log2(freq / PROB_TOTAL)))


def bits_per_pixel(bits: float, height: int, width: int) -> float:
    """Rate normalized by the pixel count of both views."""
    return bits / (2.0 * height * width)
