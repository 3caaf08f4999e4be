"""Deterministic synthetic fixtures: heavy-tailed post-GELU activations,
high-variance per-channel Gaussians, plain Gaussians, and toy-block weights.

All randomness comes from a counter-based generator that is fully specified
here (64-bit mix with documented constants), so the same spec yields bit-identical
tensors on any platform. Gaussian draws use an inverse-CDF rational approximation
rather than rejection sampling for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .tensor import Tensor

# 64-bit mixing constants (golden-ratio increment plus the standard two-round
# xor-multiply finalizer). State for draw i is seed + (i+1)*GOLDEN mod 2^64;
# the output function below turns that state into 64 well-mixed bits.
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

# Rational approximation coefficients for the inverse normal CDF (central region
# |p - 1/2| small and the two tails), max relative error ~1.2e-9.
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_PLOW = 0.02425


def mix_bits(seed: int, counters: np.ndarray) -> np.ndarray:
    """Counter -> 64 mixed bits. Pure function of (seed, counter)."""
    with np.errstate(over="ignore"):  # uint64 arithmetic wraps mod 2^64 by design
        z = (np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
        return z ^ (z >> np.uint64(31))


def uniform01(seed: int, start: int, count: int) -> np.ndarray:
    """count doubles in (0, 1), from counters [start, start+count)."""
    counters = np.arange(start, start + count, dtype=np.uint64)
    bits = mix_bits(seed, counters)
    # top 53 bits, centered in the bin: never exactly 0 or 1
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def inverse_normal_cdf(p: np.ndarray) -> np.ndarray:
    """Rational approximation to the standard normal quantile function."""
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D

    low = p < _ICDF_PLOW
    high = p > 1.0 - _ICDF_PLOW
    mid = ~(low | high)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        out[mid] = num * q / den
    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[low] = num / den
    if np.any(high):
        q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[high] = -num / den
    return out


def normal(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normal draws for counters [start, start+count)."""
    return inverse_normal_cdf(uniform01(seed, start, count))


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: x * Phi(x) with Phi from the error function."""
    from scipy.special import erf

    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


KINDS = ("post_gelu", "channel_varied", "gaussian", "toy_block")


@dataclass(frozen=True)
class FixtureSpec:
    """What to generate: kind, dims, mandatory seed, kind-specific knobs."""

    kind: str
    dims: tuple[int, ...]
    seed: int
    scale_min: float = 0.1     # channel_varied: low end of log-uniform channel scales
    scale_max: float = 50.0    # channel_varied: high end
    mean: float = 0.0          # gaussian
    std: float = 1.0           # gaussian

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown fixture kind {self.kind!r}")
        if any(int(d) <= 0 for d in self.dims):
            raise ParameterError(f"dims must be positive, got {self.dims}")
        if self.seed is None:
            raise ParameterError("seed is mandatory")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def header_text(self) -> str:
        lines = [
            f"kind = {self.kind}",
            f"dims = {' '.join(str(d) for d in self.dims)}",
            f"seed = {self.seed}",
        ]
        if self.kind == "channel_varied":
            lines += [f"scale_min = {self.scale_min!r}", f"scale_max = {self.scale_max!r}"]
        if self.kind == "gaussian":
            lines += [f"mean = {self.mean!r}", f"std = {self.std!r}"]
        return "\n".join(lines) + "\n"

    def file_stem(self) -> str:
        return f"{self.kind}_{'x'.join(str(d) for d in self.dims)}_s{self.seed}"


def gen(spec: FixtureSpec) -> Tensor:
    """Generate the fixture tensor for a spec. Identical spec, identical bytes."""
    n = int(np.prod(spec.dims))
    if spec.kind == "post_gelu":
        vals = gelu(normal(spec.seed, 0, n))
        return Tensor(dims=spec.dims, data=vals.astype(np.float32),
                      channel_axis=min(1, len(spec.dims) - 1))
    if spec.kind == "gaussian":
        vals = spec.mean + spec.std * normal(spec.seed, 0, n)
        return Tensor(dims=spec.dims, data=vals.astype(np.float32),
                      channel_axis=min(1, len(spec.dims) - 1))
    if spec.kind == "channel_varied":
        if len(spec.dims) != 2:
            raise ParameterError("channel_varied fixture needs dims [N, C]")
        rows, chans = spec.dims
        # counters [0, C) feed the channel scales, [C, C + N*C) the data
        u = uniform01(spec.seed, 0, chans)
        log_lo, log_hi = np.log(spec.scale_min), np.log(spec.scale_max)
        scales = np.exp(log_lo + u * (log_hi - log_lo))
        z = normal(spec.seed, chans, rows * chans).reshape(rows, chans)
        vals = z * scales[None, :]
        return Tensor(dims=spec.dims, data=vals.astype(np.float32).reshape(-1),
                      channel_axis=1)
    if spec.kind == "toy_block":
        raise ParameterError("toy_block fixtures are generated by gen_toy_block()")
    raise ParameterError(f"unknown fixture kind {spec.kind!r}")


def channel_scales(spec: FixtureSpec) -> np.ndarray:
    """The per-channel scales a channel_varied spec draws (same counters)."""
    if spec.kind != "channel_varied":
        raise ParameterError("channel scales are defined for channel_varied specs")
    chans = spec.dims[1]
    u = uniform01(spec.seed, 0, chans)
    log_lo, log_hi = np.log(spec.scale_min), np.log(spec.scale_max)
    return np.exp(log_lo + u * (log_hi - log_lo))


def gen_toy_block(seed: int, c: int, h: int, in_scales=None, b1_shift=0.0):
    """Weights and biases for a Linear-GELU-Linear block, fan-in scaled.

    When ``in_scales`` gives the input channels' magnitudes, the first weight's
    rows are scaled by their inverse, the way layers downstream of a
    normalization adapt: every input channel then carries a comparable share of
    the block output, so losing low-range channels to coarse quantization
    actually costs accuracy.

    ``b1_shift`` moves the pre-GELU operating point; around -1.3 the hidden
    activations take the concentrated-negative-lump-plus-sparse-positive-tail
    shape that makes a hybrid activation quantizer matter.

    Returns (W1[C,H], b1[H], W2[H,C], b2[C]) as Tensors; weight channel_axis is
    the output-column axis.
    """
    n1, n2 = c * h, h * c
    off = 0
    w1 = normal(seed, off, n1).reshape(c, h) / np.sqrt(c); off += n1
    if in_scales is not None:
        w1 = w1 / np.asarray(in_scales, dtype=np.float64)[:, None]
    b1 = b1_shift + 0.1 * normal(seed, off, h); off += h
    w2 = normal(seed, off, n2).reshape(h, c) / np.sqrt(h); off += n2
    b2 = 0.1 * normal(seed, off, c)
    return (
        Tensor.from_array(w1.astype(np.float32), channel_axis=1),
        Tensor.from_array(b1.astype(np.float32), channel_axis=0),
        Tensor.from_array(w2.astype(np.float32), channel_axis=1),
        Tensor.from_array(b2.astype(np.float32), channel_axis=0),
    )
