"""Quantizer families: uniform, log2, biased log2, and the hybrid log-uniform map.

The hybrid quantizer splits the k-bit code space at an integer threshold b_hat:
codes [0, b_hat) are log2 codes (value s1 * 2^-code, dense near zero), codes
[b_hat, 2^k - 1] are uniform codes (value s1 + s2_step * (code - b_hat)). With a
power-of-two b_hat the top bits of a code identify its segment, which is what the
datapath simulator routes on.

All rounding is half-away-from-zero. Quantizer arithmetic runs in float64; the
tensor-level helpers cast reconstructed values back to float32 storage.

Note one structural quirk of the hybrid map: code b_hat reconstructs to exactly
s1 + offset, the same value as log2 code 0 (the segments meet at s1). Re-quantizing
that value lands on the canonical log2 code 0, so code b_hat is a non-canonical
alias: same value, different label bits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError, ShapeError
from .tensor import Tensor

SCHEMES = ("uniform", "log2", "log2_biased", "hluq")
GRANULARITIES = ("per_tensor", "per_channel", "per_group")

MIN_BITS, MAX_BITS = 2, 8


def round_half_away(v):
    """Round to nearest with ties away from zero (single rule everywhere)."""
    v = np.asarray(v, dtype=np.float64)
    return np.floor(np.abs(v) + 0.5) * np.sign(v)


def _check_bits(k: int) -> int:
    k = int(k)
    if not (MIN_BITS <= k <= MAX_BITS):
        raise ParameterError(f"bit-width {k} outside [{MIN_BITS}, {MAX_BITS}]")
    return k


@dataclass(frozen=True)
class HluqConfig:
    """Hybrid quantizer layout: log2 full-scale s1, uniform step, grid threshold.

    ``b_hat`` may be any integer in [1, 2^k - 1]; calibration only ever produces
    beta * 2^k for beta in {1/2, 1/4, 1/8} (so label-bit routing works), and the
    simulator rejects non-power-of-two thresholds, but the quantizer map itself
    is defined for the full range, which the degeneration tests rely on.
    ``offset`` shifts inputs before quantization so the effective value is >= 0
    (post-GELU data has a small negative tail).
    """

    s1: float
    s2_step: float
    b_hat: int
    k: int
    offset: float = 0.0

    def __post_init__(self):
        k = _check_bits(self.k)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "b_hat", int(self.b_hat))
        if not (self.s1 > 0 and np.isfinite(self.s1)):
            raise ParameterError(f"s1 must be positive, got {self.s1}")
        if not (self.s2_step > 0 and np.isfinite(self.s2_step)):
            raise ParameterError(f"s2_step must be positive, got {self.s2_step}")
        if not (1 <= self.b_hat <= 2**k - 1):
            raise ParameterError(
                f"b_hat {self.b_hat} outside [1, {2**k - 1}] for k={k}"
            )

    @property
    def full_range(self) -> float:
        """Largest reconstructable value above offset: s1 + s2_step*(2^k-1-b_hat)."""
        return self.s1 + self.s2_step * (2**self.k - 1 - self.b_hat)

    @classmethod
    def from_alpha_beta(cls, alpha: float, beta: float, r: float, k: int,
                        offset: float = 0.0) -> "HluqConfig":
        """Build a config from the range-partition parameters.

        alpha splits the calibrated range r (s1 = alpha * r); beta allocates the
        code space (b_hat = beta * 2^k, which must land on an integer).
        """
        k = _check_bits(k)
        if not (0.0 < alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
        if r <= 0:
            raise ParameterError(f"calibrated range must be positive, got {r}")
        b_hat_f = beta * 2**k
        b_hat = int(round(b_hat_f))
        if abs(b_hat_f - b_hat) > 1e-9 or b_hat < 1:
            raise ParameterError(
                f"beta {beta} gives non-integer or zero threshold at k={k}"
            )
        s2_step = (1.0 - alpha) * r / (2**k - 1 - b_hat)
        return cls(s1=alpha * r, s2_step=s2_step, b_hat=b_hat, k=k, offset=offset)


@dataclass(frozen=True)
class QuantParams:
    """One quantization unit: scheme tag plus whichever fields that scheme uses."""

    scheme: str
    k: int
    s: float | None = None       # scale: uniform / log2 / log2_biased
    z: int | None = None         # zero point: uniform only
    bias: float | None = None    # log2_biased only
    hluq: HluqConfig | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        k = _check_bits(self.k)
        object.__setattr__(self, "k", k)
        if self.scheme == "hluq":
            if self.hluq is None:
                raise ParameterError("hluq scheme requires an HluqConfig")
            if self.hluq.k != k:
                raise ParameterError("hluq config bit-width disagrees with params")
            return
        if self.hluq is not None:
            raise ParameterError(f"scheme {self.scheme} must not carry an HluqConfig")
        if self.s is None or not (self.s > 0 and np.isfinite(self.s)):
            raise ParameterError(f"scale must be positive, got {self.s}")
        if self.scheme == "uniform":
            z = 0 if self.z is None else int(self.z)
            if not (0 <= z <= 2**k - 1):
                raise ParameterError(f"zero point {z} outside [0, {2**k - 1}]")
            object.__setattr__(self, "z", z)
        if self.scheme == "log2_biased" and self.bias is None:
            object.__setattr__(self, "bias", 0.0)


def _as_codes(arr, scalar: bool):
    codes = np.asarray(arr, dtype=np.int64)
    return int(codes) if scalar else codes


def _as_values(arr, scalar: bool):
    vals = np.asarray(arr, dtype=np.float64)
    return float(vals) if scalar else vals


def uniform_quant(x, p: QuantParams):
    """clamp(round(x/s) + z, 0, 2^k - 1)."""
    if p.scheme != "uniform":
        raise ParameterError(f"uniform_quant got scheme {p.scheme!r}")
    scalar = np.isscalar(x)
    q = round_half_away(np.asarray(x, np.float64) / p.s) + p.z
    return _as_codes(np.clip(q, 0, 2**p.k - 1), scalar)


def uniform_dequant(code, p: QuantParams):
    """s * (code - z)."""
    if p.scheme != "uniform":
        raise ParameterError(f"uniform_dequant got scheme {p.scheme!r}")
    scalar = np.isscalar(code)
    return _as_values(p.s * (np.asarray(code, np.float64) - p.z), scalar)


def _log2_codes(x, s, k: int):
    """Shared log2 code map: nonpositive inputs take the largest code, which
    reconstructs to the smallest representable magnitude (closest grid point
    to zero)."""
    y = np.asarray(x, np.float64) / s
    top = 2**k - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        e = round_half_away(-np.log2(np.where(y > 0, y, 1.0)))
    return np.where(y > 0, np.clip(e, 0, top), top)


def log2_quant(x, p: QuantParams):
    """clamp(round(-log2(x/s)), 0, 2^k - 1); x <= 0 maps to the largest code."""
    if p.scheme != "log2":
        raise ParameterError(f"log2_quant got scheme {p.scheme!r}")
    scalar = np.isscalar(x)
    return _as_codes(_log2_codes(x, p.s, p.k), scalar)


def log2_dequant(code, p: QuantParams):
    """s * 2^-code."""
    if p.scheme != "log2":
        raise ParameterError(f"log2_dequant got scheme {p.scheme!r}")
    scalar = np.isscalar(code)
    return _as_values(p.s * np.power(2.0, -np.asarray(code, np.float64)), scalar)


def log2_biased_quant(x, p: QuantParams):
    """Plain log2 on (x - bias); the bias is a calibrated per-tensor minimum."""
    if p.scheme != "log2_biased":
        raise ParameterError(f"log2_biased_quant got scheme {p.scheme!r}")
    scalar = np.isscalar(x)
    shifted = np.asarray(x, np.float64) - p.bias
    return _as_codes(_log2_codes(shifted, p.s, p.k), scalar)


def log2_biased_dequant(code, p: QuantParams):
    if p.scheme != "log2_biased":
        raise ParameterError(f"log2_biased_dequant got scheme {p.scheme!r}")
    scalar = np.isscalar(code)
    vals = p.s * np.power(2.0, -np.asarray(code, np.float64)) + p.bias
    return _as_values(vals, scalar)


def hluq_quant(x, c: HluqConfig):
    """Hybrid map; see module docstring for the code-space layout."""
    scalar = np.isscalar(x)
    y = np.asarray(x, np.float64) - c.offset
    top_uni = 2**c.k - 1 - c.b_hat
    with np.errstate(divide="ignore", invalid="ignore"):
        e = round_half_away(-np.log2(np.where(y > 0, y / c.s1, 1.0)))
    log_codes = np.where(y > 0, np.clip(e, 0, c.b_hat - 1), c.b_hat - 1)
    # divide-first form (y/s2 - s1/s2): the datapath applies a precomputed
    # reciprocal step, and it keeps exact decimal ties exact
    steps = round_half_away(y / c.s2_step - c.s1 / c.s2_step)
    uni_codes = c.b_hat + np.clip(steps, 0, top_uni)
    return _as_codes(np.where(y <= c.s1, log_codes, uni_codes), scalar)


def hluq_dequant(code, c: HluqConfig):
    scalar = np.isscalar(code)
    q = np.asarray(code, np.float64)
    log_vals = c.s1 * np.power(2.0, -q)
    uni_vals = c.s1 + c.s2_step * (q - c.b_hat)
    return _as_values(np.where(q < c.b_hat, log_vals, uni_vals) + c.offset, scalar)


def quant(x, p: QuantParams):
    """Scheme-dispatching quantize."""
    if p.scheme == "uniform":
        return uniform_quant(x, p)
    if p.scheme == "log2":
        return log2_quant(x, p)
    if p.scheme == "log2_biased":
        return log2_biased_quant(x, p)
    return hluq_quant(x, p.hluq)


def dequant(code, p: QuantParams):
    """Scheme-dispatching dequantize."""
    if p.scheme == "uniform":
        return uniform_dequant(code, p)
    if p.scheme == "log2":
        return log2_dequant(code, p)
    if p.scheme == "log2_biased":
        return log2_biased_dequant(code, p)
    return hluq_dequant(code, p.hluq)


# ---------------------------------------------------------------------------
# Tensor-level application at per-tensor / per-channel / per-group granularity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSet:
    """A granularity tag plus the matching collection of QuantParams.

    per_tensor: one entry. per_channel: one entry per channel. per_group: one
    entry per group plus ``group_of`` mapping channel index -> group index.
    """

    granularity: str
    params: tuple[QuantParams, ...]
    group_of: np.ndarray | None = None

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ParameterError(f"unknown granularity {self.granularity!r}")
        params = tuple(self.params)
        if not params:
            raise ParameterError("empty parameter set")
        schemes = {p.scheme for p in params}
        if len(schemes) != 1:
            raise ParameterError(f"mixed schemes in one set: {sorted(schemes)}")
        if self.granularity == "per_tensor" and len(params) != 1:
            raise ShapeError("per_tensor set must hold exactly one QuantParams")
        if self.granularity == "per_group":
            if self.group_of is None:
                raise ParameterError("per_group set requires a group map")
            gm = np.asarray(self.group_of, dtype=np.int64)
            if gm.min() < 0 or gm.max() >= len(params):
                raise ShapeError("group map indexes outside the parameter list")
            object.__setattr__(self, "group_of", gm)
        elif self.group_of is not None:
            raise ParameterError(f"{self.granularity} set must not carry a group map")
        object.__setattr__(self, "params", params)

    @property
    def scheme(self) -> str:
        return self.params[0].scheme

    @property
    def k(self) -> int:
        return self.params[0].k

    def param_index_for_channels(self, num_channels: int) -> np.ndarray:
        """Channel index -> index into ``params``, validating the count."""
        if self.granularity == "per_tensor":
            return np.zeros(num_channels, dtype=np.int64)
        if self.granularity == "per_channel":
            if len(self.params) != num_channels:
                raise ShapeError(
                    f"per_channel set has {len(self.params)} entries "
                    f"for {num_channels} channels"
                )
            return np.arange(num_channels, dtype=np.int64)
        if len(self.group_of) != num_channels:
            raise ShapeError(
                f"group map covers {len(self.group_of)} channels, tensor has "
                f"{num_channels}"
            )
        return self.group_of.copy()


def _broadcast_field(values: np.ndarray, t: Tensor) -> np.ndarray:
    """Shape a per-channel value vector so it broadcasts along channel_axis."""
    shape = [1] * t.rank
    shape[t.channel_axis] = t.num_channels
    return values.reshape(shape)


def quantize_tensor(t: Tensor, pset: ParamSet):
    """Quantize every element with its unit's parameters.

    Returns (codes, pset) with codes an int64 array shaped like the tensor.
    """
    idx = pset.param_index_for_channels(t.num_channels)
    x = t.array().astype(np.float64)
    k = pset.k
    scheme = pset.scheme
    if scheme == "uniform":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t)
        z = _broadcast_field(np.array([pset.params[i].z for i in idx], np.float64), t)
        codes = np.clip(round_half_away(x / s) + z, 0, 2**k - 1)
    elif scheme == "log2":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t)
        codes = _log2_codes(x, s, k)
    elif scheme == "log2_biased":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t)
        bias = _broadcast_field(np.array([pset.params[i].bias for i in idx]), t)
        codes = _log2_codes(x - bias, s, k)
    else:  # hluq
        cfgs = [pset.params[i].hluq for i in idx]
        s1 = _broadcast_field(np.array([c.s1 for c in cfgs]), t)
        s2 = _broadcast_field(np.array([c.s2_step for c in cfgs]), t)
        bh = _broadcast_field(np.array([c.b_hat for c in cfgs], np.float64), t)
        off = _broadcast_field(np.array([c.offset for c in cfgs]), t)
        y = x - off
        top = 2**k - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            e = round_half_away(-np.log2(np.where(y > 0, y / s1, 1.0)))
        log_codes = np.where(y > 0, np.clip(e, 0, bh - 1), bh - 1)
        steps = round_half_away(y / s2 - s1 / s2)
        uni_codes = bh + np.clip(steps, 0, top - bh)
        codes = np.where(y <= s1, log_codes, uni_codes)
    return codes.astype(np.int64), pset


def dequantize_tensor(codes: np.ndarray, pset: ParamSet, channel_axis: int) -> Tensor:
    """Reconstruct a float32 Tensor from integer codes and a parameter set."""
    t_like = Tensor(dims=codes.shape, data=np.zeros(codes.size, np.float32),
                    channel_axis=channel_axis)
    idx = pset.param_index_for_channels(t_like.num_channels)
    q = codes.astype(np.float64)
    scheme = pset.scheme
    if scheme == "uniform":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t_like)
        z = _broadcast_field(np.array([pset.params[i].z for i in idx], np.float64),
                             t_like)
        vals = s * (q - z)
    elif scheme == "log2":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t_like)
        vals = s * np.power(2.0, -q)
    elif scheme == "log2_biased":
        s = _broadcast_field(np.array([pset.params[i].s for i in idx]), t_like)
        bias = _broadcast_field(np.array([pset.params[i].bias for i in idx]), t_like)
        vals = s * np.power(2.0, -q) + bias
    else:
        cfgs = [pset.params[i].hluq for i in idx]
        s1 = _broadcast_field(np.array([c.s1 for c in cfgs]), t_like)
        s2 = _broadcast_field(np.array([c.s2_step for c in cfgs]), t_like)
        bh = _broadcast_field(np.array([c.b_hat for c in cfgs], np.float64), t_like)
        off = _broadcast_field(np.array([c.offset for c in cfgs]), t_like)
        vals = np.where(q < bh, s1 * np.power(2.0, -q), s1 + s2 * (q - bh)) + off
    return Tensor.from_array(vals.astype(np.float32), channel_axis=channel_axis)


def fake_quant_tensor(t: Tensor, pset: ParamSet) -> Tensor:
    """quantize -> dequantize in one step (the reconstruction error path)."""
    codes, _ = quantize_tensor(t, pset)
    return dequantize_tensor(codes, pset, t.channel_axis)


# ---------------------------------------------------------------------------
# Flat key-value text serialization (consumed by the CLI and the simulator)
# ---------------------------------------------------------------------------

_FLOAT_FIELDS = ("s", "bias", "s1", "s2_step", "offset")


def paramset_to_text(pset: ParamSet) -> str:
    """Serialize a parameter set as a flat key-value block.

    Keys: scheme, k, s, z, bias, s1, s2_step, b_hat, offset, group_map.
    Multi-unit fields are comma-joined in unit order.
    """
    def join(vals):
        return ",".join(repr(float(v)) for v in vals)

    lines = [f"scheme = {pset.scheme}", f"k = {pset.k}"]
    ps = pset.params
    if pset.scheme == "uniform":
        lines.append(f"s = {join(p.s for p in ps)}")
        lines.append("z = " + ",".join(str(p.z) for p in ps))
    elif pset.scheme == "log2":
        lines.append(f"s = {join(p.s for p in ps)}")
    elif pset.scheme == "log2_biased":
        lines.append(f"s = {join(p.s for p in ps)}")
        lines.append(f"bias = {join(p.bias for p in ps)}")
    else:
        lines.append(f"s1 = {join(p.hluq.s1 for p in ps)}")
        lines.append(f"s2_step = {join(p.hluq.s2_step for p in ps)}")
        lines.append("b_hat = " + ",".join(str(p.hluq.b_hat) for p in ps))
        lines.append(f"offset = {join(p.hluq.offset for p in ps)}")
    if pset.group_of is not None:
        lines.append("group_map = " + ",".join(str(int(g)) for g in pset.group_of))
    return "\n".join(lines) + "\n"


def paramset_from_text(text: str) -> ParamSet:
    """Inverse of paramset_to_text."""
    kv = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"malformed params line: {raw!r}")
        key, val = line.split("=", 1)
        kv[key.strip()] = val.strip()
    if "scheme" not in kv or "k" not in kv:
        raise ParameterError("params text missing scheme/k")
    scheme = kv["scheme"]
    k = int(kv["k"])

    def floats(key):
        return [float(v) for v in kv[key].split(",")]

    def ints(key):
        return [int(v) for v in kv[key].split(",")]

    if scheme == "uniform":
        params = [QuantParams("uniform", k, s=s, z=z)
                  for s, z in zip(floats("s"), ints("z"), strict=True)]
    elif scheme == "log2":
        params = [QuantParams("log2", k, s=s) for s in floats("s")]
    elif scheme == "log2_biased":
        params = [QuantParams("log2_biased", k, s=s, bias=b)
                  for s, b in zip(floats("s"), floats("bias"), strict=True)]
    elif scheme == "hluq":
        params = [
            QuantParams("hluq", k, hluq=HluqConfig(s1=s1, s2_step=s2, b_hat=bh,
                                                   k=k, offset=off))
            for s1, s2, bh, off in zip(floats("s1"), floats("s2_step"),
                                       ints("b_hat"), floats("offset"), strict=True)
        ]
    else:
        raise ParameterError(f"unknown scheme {scheme!r} in params text")

    if "group_map" in kv:
        return ParamSet("per_group", tuple(params),
                        group_of=np.array(ints("group_map"), np.int64))
    if len(params) == 1:
        return ParamSet("per_tensor", tuple(params))
    return ParamSet("per_channel", tuple(params))
