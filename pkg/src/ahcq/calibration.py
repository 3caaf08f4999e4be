"""Quantization parameter initialization and the calibration-time searches.

MinMax turns observed ranges into uniform (s, z); the hybrid quantizer's
(alpha, beta) pair is picked by exhaustively scoring a small grid against the
layer-output objective ||X W - X_hat W||_F^2 averaged over calibration batches;
the per-channel scan and cosine-similarity analysis quantify how stable optimal
per-channel parameters are across samples (the observation channel grouping
builds on).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, ShapeError
from .quantizers import (
    HluqConfig,
    ParamSet,
    QuantParams,
    fake_quant_tensor,
    round_half_away,
)
from .tensor import Tensor, channel_stats, matmul

DEFAULT_ALPHAS = (0.1, 0.3, 0.5)
EXTENDED_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
POW2_BETAS = (0.5, 0.25, 0.125)


@dataclass(frozen=True)
class HluqSearchSpace:
    """Candidate (alpha, beta) grid for the hybrid quantizer search."""

    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    betas: tuple[float, ...] = POW2_BETAS

    def __post_init__(self):
        if not self.alphas or not self.betas:
            raise ParameterError("search space must be non-empty")
        if any(not (0.0 < a < 1.0) for a in self.alphas):
            raise ParameterError(f"alphas must lie in (0, 1): {self.alphas}")
        if any(b not in POW2_BETAS for b in self.betas):
            raise ParameterError(
                f"betas must come from {POW2_BETAS} (threshold must stay a "
                f"power of two for label-bit routing): {self.betas}"
            )
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @classmethod
    def extended(cls) -> "HluqSearchSpace":
        return cls(alphas=EXTENDED_ALPHAS, betas=POW2_BETAS)


@dataclass(frozen=True)
class ChannelParamMatrix:
    """Per-sample, per-channel optimal (s, z): array shaped [samples, channels, 2]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ShapeError(f"expected [samples, channels, 2], got {v.shape}")
        if np.any(v[:, :, 0] <= 0):
            raise ParameterError("all scales in a ChannelParamMatrix must be positive")
        object.__setattr__(self, "values", v)

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


def _minmax_unit(lo: float, hi: float, k: int) -> QuantParams:
    """Uniform (s, z) for one observed range, with the degenerate-range rule.

    A constant unit (hi == lo == c) gets s = |c| (1 if c == 0) so the single
    value reconstructs exactly; z then follows the usual formula.
    """
    lo = float(lo)
    hi = float(hi)
    if hi > lo:
        s = (hi - lo) / (2**k - 1)
    else:
        s = abs(lo) if lo != 0.0 else 1.0
    z = int(np.clip(round_half_away(-lo / s), 0, 2**k - 1))
    return QuantParams("uniform", k, s=s, z=z)


def minmax_init(t: Tensor, k: int, granularity: str,
                group_of: np.ndarray | None = None) -> ParamSet:
    """MinMax initialization at the requested granularity.

    s = (max - min) / (2^k - 1), z = clamp(round(-min/s), 0, 2^k - 1), computed
    per tensor, per channel, or per group of channels (group_of required then).
    """
    if t.data.size == 0:
        raise DomainError("cannot calibrate an empty tensor")
    if granularity == "per_tensor":
        lo = float(t.data.min())
        hi = float(t.data.max())
        return ParamSet("per_tensor", (_minmax_unit(lo, hi, k),))
    stats = channel_stats(t)
    if granularity == "per_channel":
        params = tuple(_minmax_unit(lo, hi, k)
                       for lo, hi in zip(stats.min, stats.max))
        return ParamSet("per_channel", params)
    if granularity == "per_group":
        if group_of is None:
            raise ParameterError("per_group minmax needs a group map")
        gm = np.asarray(group_of, dtype=np.int64)
        if len(gm) != t.num_channels:
            raise ShapeError("group map length does not match channel count")
        n_groups = int(gm.max()) + 1
        params = []
        for g in range(n_groups):
            members = np.where(gm == g)[0]
            if len(members) == 0:
                raise ParameterError(f"group {g} has no channels")
            params.append(_minmax_unit(stats.min[members].min(),
                                       stats.max[members].max(), k))
        return ParamSet("per_group", tuple(params), group_of=gm)
    raise ParameterError(f"unknown granularity {granularity!r}")


def _batches(x) -> list[Tensor]:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _objective(batches: list[Tensor], w: Tensor | None, cfg: HluqConfig,
               k: int) -> float:
    """Mean over batches of ||X W - X_hat W||_F^2 (W=None compares X directly)."""
    pset = ParamSet("per_tensor", (QuantParams("hluq", k, hluq=cfg),))
    total = 0.0
    for xb in batches:
        xq = fake_quant_tensor(xb, pset)
        if w is None:
            diff = xb.data.astype(np.float64) - xq.data.astype(np.float64)
        else:
            ref = matmul(xb, w)
            got = matmul(xq, w)
            diff = ref.data.astype(np.float64) - got.data.astype(np.float64)
        total += float(np.sum(diff * diff))
    return total / len(batches)


def hluq_grid_objectives(x, w: Tensor | None, k: int,
                         space: HluqSearchSpace) -> list[tuple[float, float, float]]:
    """Objective at every valid grid point, as (alpha, beta, objective) rows.

    Rows are ordered by ascending alpha then beta, which is also the tie-break
    order of the argmin. Grid points whose beta does not give an integer
    threshold at this bit-width (beta=1/8 at k=2) are skipped.
    """
    batches = _batches(x)
    lo = min(float(b.data.min()) for b in batches)
    hi = max(float(b.data.max()) for b in batches)
    r = hi - lo
    if r <= 0:
        raise ParameterError("degenerate calibration range for hybrid search")
    rows = []
    for alpha in sorted(space.alphas):
        for beta in sorted(space.betas):
            if beta * 2**k < 1 or abs(beta * 2**k - round(beta * 2**k)) > 1e-9:
                continue
            cfg = HluqConfig.from_alpha_beta(alpha, beta, r, k, offset=lo)
            rows.append((alpha, beta, _objective(batches, w, cfg, k)))
    if not rows:
        raise ParameterError("no valid grid points for this bit-width")
    return rows


def hluq_search(x, w: Tensor | None, k: int,
                space: HluqSearchSpace | None = None) -> HluqConfig:
    """Pick the grid argmin of the calibration objective.

    Ties break toward smaller alpha, then smaller beta. The calibrated range
    (and the pre-quantization offset) come from the min/max over all batches.
    """
    space = space or HluqSearchSpace()
    batches = _batches(x)
    rows = hluq_grid_objectives(batches, w, k, space)
    best = min(rows, key=lambda row: row[2])  # rows already in tie-break order
    lo = min(float(b.data.min()) for b in batches)
    hi = max(float(b.data.max()) for b in batches)
    return HluqConfig.from_alpha_beta(best[0], best[1], hi - lo, k, offset=lo)


def hluq_scale_scan(x, k: int, space: HluqSearchSpace | None = None,
                    candidates: int = 256) -> HluqConfig:
    """Exhaustive fixture-level search: the (alpha, beta) grid crossed with a
    scale scan over the calibrated range.

    Comparing quantizer families fairly requires each to scan its scale knob;
    for the hybrid map that knob is the range r (the top reconstructable
    value), scanned here over candidates*(i+1)/candidates fractions of the
    MinMax range, with the pre-shift offset fixed at the calibrated minimum.
    """
    space = space or HluqSearchSpace()
    batches = _batches(x)
    lo = min(float(b.data.min()) for b in batches)
    hi = max(float(b.data.max()) for b in batches)
    if hi <= lo:
        raise ParameterError("degenerate calibration range for hybrid search")
    y = np.concatenate([b.data for b in batches]).astype(np.float64) - lo
    with np.errstate(divide="ignore"):
        log2y = np.where(y > 0, np.log2(np.where(y > 0, y, 1.0)), np.nan)
    top = 2**k - 1
    best_cfg, best_obj = None, np.inf
    for i in range(candidates):
        r = (hi - lo) * (i + 1) / candidates
        for alpha in sorted(space.alphas):
            for beta in sorted(space.betas):
                if beta * 2**k < 1 or abs(beta * 2**k - round(beta * 2**k)) > 1e-9:
                    continue
                cfg = HluqConfig.from_alpha_beta(alpha, beta, r, k, offset=lo)
                bh = cfg.b_hat
                # same map as hluq_quant, on precomputed logs for speed
                e = round_half_away(np.log2(cfg.s1) - log2y)
                log_codes = np.where(y > 0, np.clip(e, 0, bh - 1), bh - 1)
                steps = round_half_away(y / cfg.s2_step - cfg.s1 / cfg.s2_step)
                codes = np.where(y <= cfg.s1, log_codes,
                                 bh + np.clip(steps, 0, top - bh)).astype(np.int64)
                table = np.where(np.arange(top + 1) < bh,
                                 cfg.s1 * 2.0 ** -np.arange(top + 1),
                                 cfg.s1 + cfg.s2_step * (np.arange(top + 1) - bh))
                diff = table[codes] - y
                obj = float(np.sum(diff * diff)) / len(batches)
                if obj < best_obj:
                    best_cfg, best_obj = cfg, obj
    if best_cfg is None:
        raise ParameterError("no valid grid points for this bit-width")
    return best_cfg


# 64 candidate multipliers spanning +/-50% around the MinMax scale. The init
# scale itself is always evaluated too, so the scan can never do worse than
# MinMax.
_SCAN_MULTIPLIERS = np.linspace(0.5, 1.5, 64)


def _channel_mse_scan(vals: np.ndarray, k: int) -> tuple[float, float]:
    """Best (s, z) for one channel by scanning scales around MinMax init."""
    lo = float(vals.min())
    hi = float(vals.max())
    init = _minmax_unit(lo, hi, k)
    top = 2**k - 1
    best_s, best_z, best_mse = None, None, np.inf
    for s in [init.s] + list(init.s * _SCAN_MULTIPLIERS):
        z = float(np.clip(round_half_away(-lo / s), 0, top))
        q = np.clip(round_half_away(vals / s) + z, 0, top)
        err = s * (q - z) - vals
        mse = float(np.mean(err * err))
        if mse < best_mse:
            best_s, best_z, best_mse = s, z, mse
    return best_s, best_z


def per_channel_search(samples: list[Tensor], k: int) -> ChannelParamMatrix:
    """Optimal per-channel (s, z) for each calibration sample independently.

    The zero point is re-derived from each candidate scale (z = round(-min/s))
    rather than scanned, keeping the search a 1-D scan per channel.
    """
    if len(samples) < 2:
        raise ParameterError("need at least two samples")
    chans = samples[0].num_channels
    out = np.zeros((len(samples), chans, 2), dtype=np.float64)
    for i, t in enumerate(samples):
        if t.num_channels != chans:
            raise ShapeError("samples disagree on channel count")
        moved = np.moveaxis(t.array(), t.channel_axis, 0).reshape(chans, -1)
        for c in range(chans):
            s, z = _channel_mse_scan(moved[c].astype(np.float64), k)
            out[i, c, 0] = s
            out[i, c, 1] = z
    return ChannelParamMatrix(out)


@dataclass(frozen=True)
class SimilarityReport:
    """Per-channel mean pairwise cosine similarity, plus how many zero vectors
    had to be excluded."""

    values: np.ndarray
    excluded: int


def cosine_similarity(m: ChannelParamMatrix) -> SimilarityReport:
    """Mean pairwise cosine similarity of the (s, z) vectors across samples.

    Vectors are L2-normalized per sample, so the result only reflects the
    direction of (s, z), not its magnitude.
    """
    if m.num_samples < 2:
        raise ParameterError("need at least two samples")
    vals = np.zeros(m.num_channels, dtype=np.float64)
    excluded = 0
    for c in range(m.num_channels):
        v = m.values[:, c, :]
        norms = np.sqrt(np.sum(v * v, axis=1))
        keep = norms > 0
        excluded += int(np.sum(~keep))
        vv = v[keep] / norms[keep][:, None]
        n = vv.shape[0]
        if n < 2:
            vals[c] = np.nan
            continue
        gram = vv @ vv.T
        iu = np.triu_indices(n, k=1)
        vals[c] = float(np.mean(gram[iu]))
    return SimilarityReport(values=vals, excluded=excluded)
