"""Functional simulator of the dual-PE datapath plus an op-count cost model.

The hybrid quantizer's power-of-two threshold makes a code's top bits a lane
label: codes at or above the threshold carry uniform-segment payloads and go to
integer multiplier-adder lanes; codes below it are log2 exponents and go to
bit-shift lanes with a fixed-point accumulator. Both lane accumulators are
exact (integers, and fixed-point with ``frac_bits`` fractional bits), so lane
results are independent of channel order; only the final dequantizing merge
runs in floating point.

Cost numbers are structural placeholders calibrated for ordering only
(float > integer > shift, DRAM far above compute); nothing here claims joules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, SimulationError
from .grouping import GroupAssignment, storage_cost, PARAM_REGISTER_BITS
from .quantizers import ParamSet
from .tensor import Tensor

LANE_LOG2 = "log2"
LANE_UNIFORM = "uniform"

DEFAULT_FRAC_BITS = 24
DEFAULT_PIPELINE_STAGES = 4

# energy units per op; ordering is the only calibrated property
DEFAULT_ENERGY = {
    "fp32_mac": 4.0,
    "int8_mul": 1.0,
    "int_mul": 0.25,   # 4-bit multiply
    "bit_shift": 0.05,
    "int_add": 0.03,
    "dec_add": 0.06,
    "dequant_fp_op": 0.5,
    "dram_bit": 100.0,
}


@dataclass(frozen=True)
class PeConfig:
    """Lane counts and cost weights for one accelerator configuration."""

    lanes: int = 64
    pe_width: int = 8
    pipeline_stages: int = DEFAULT_PIPELINE_STAGES
    frac_bits: int = DEFAULT_FRAC_BITS
    energy: dict = field(default_factory=lambda: dict(DEFAULT_ENERGY))

    def __post_init__(self):
        if self.lanes < 1 or self.pe_width < 1:
            raise ConfigError("lanes and pe_width must be positive")
        if self.frac_bits < 0:
            raise ConfigError("frac_bits must be non-negative")


@dataclass
class SimReport:
    """Per-class op counts, the routing histogram, and modeled totals."""

    counts: dict
    routed_log2: int
    routed_uniform: int
    cycles: int
    energy: float
    param_storage_bits: int
    dram_param_bits: int
    dram_data_bits: int

    @property
    def dram_traffic_bits(self) -> int:
        return self.dram_param_bits + self.dram_data_bits

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.counts):
            lines.append(f"count_{key} = {self.counts[key]}")
        lines += [
            f"routed_log2 = {self.routed_log2}",
            f"routed_uniform = {self.routed_uniform}",
            f"cycles = {self.cycles}",
            f"energy = {self.energy!r}",
            f"param_storage_bits = {self.param_storage_bits}",
            f"dram_param_bits = {self.dram_param_bits}",
            f"dram_data_bits = {self.dram_data_bits}",
            f"dram_traffic_bits = {self.dram_traffic_bits}",
        ]
        return "\n".join(lines) + "\n"


def route(code: int, b_hat: int, k: int) -> str:
    """Lane for one code, decided from its top (k - log2(b_hat)) bits."""
    if b_hat < 1 or (b_hat & (b_hat - 1)) != 0:
        raise ConfigError(f"threshold {b_hat} is not a power of two")
    if b_hat >= 2**k:
        raise ConfigError(f"threshold {b_hat} leaves no uniform codes at k={k}")
    if not (0 <= code < 2**k):
        raise SimulationError(f"code {code} outside [0, {2**k - 1}]")
    label_shift = b_hat.bit_length() - 1  # log2(b_hat)
    return LANE_UNIFORM if (code >> label_shift) >= (b_hat >> label_shift) \
        else LANE_LOG2


def route_mask(codes: np.ndarray, b_hat: int, k: int) -> np.ndarray:
    """Vectorized routing: True where a code goes to the uniform lane."""
    if b_hat < 1 or (b_hat & (b_hat - 1)) != 0:
        raise ConfigError(f"threshold {b_hat} is not a power of two")
    label_shift = b_hat.bit_length() - 1
    return (codes >> label_shift) >= (b_hat >> label_shift)


def reorder_channels(t: Tensor, grouping: GroupAssignment) -> Tensor:
    """Permute the channel axis so same-group channels sit contiguously."""
    perm = grouping.reorder
    if len(perm) != t.num_channels:
        raise ShapeError(
            f"permutation covers {len(perm)} channels, tensor has {t.num_channels}"
        )
    arr = np.take(t.array(), perm, axis=t.channel_axis)
    return Tensor.from_array(arr, channel_axis=t.channel_axis)


def inverse_reorder(t: Tensor, grouping: GroupAssignment) -> Tensor:
    """Undo reorder_channels exactly."""
    perm = grouping.inverse_reorder()
    if len(perm) != t.num_channels:
        raise ShapeError(
            f"permutation covers {len(perm)} channels, tensor has {t.num_channels}"
        )
    arr = np.take(t.array(), perm, axis=t.channel_axis)
    return Tensor.from_array(arr, channel_axis=t.channel_axis)


def _weight_scales(w_pset: ParamSet, m: int):
    """Per-output-column scale and zero point arrays for the weight codes."""
    idx = w_pset.param_index_for_channels(m)
    s = np.array([w_pset.params[i].s for i in idx], dtype=np.float64)
    z = np.array([float(w_pset.params[i].z) for i in idx], dtype=np.float64)
    return s, z


def simulate_matmul(codes_x: np.ndarray, codes_w: np.ndarray,
                    x_pset: ParamSet, w_pset: ParamSet,
                    pe: PeConfig | None = None,
                    grouping: GroupAssignment | None = None):
    """Execute a quantized [N,K] x [K,M] product the way the datapath would.

    Activations may be hybrid-coded (dual-lane) or uniform-coded (integer lane
    only, per-tensor/per-group over the K channels). Weights are uniform-coded
    with per-column (or per-group-of-columns) parameters and integer zero
    points. Returns (Y, SimReport) where Y matches an fp32

    dequantize-then-matmul reference to within float rounding; lane arithmetic
    itself is exact.
    """
    pe = pe or PeConfig()
    codes_x = np.asarray(codes_x, dtype=np.int64)
    codes_w = np.asarray(codes_w, dtype=np.int64)
    if codes_x.ndim != 2 or codes_w.ndim != 2 or codes_x.shape[1] != codes_w.shape[0]:
        raise SimulationError(
            f"code shapes do not form a matmul: {codes_x.shape} x {codes_w.shape}"
        )
    n, k_inner = codes_x.shape
    _, m = codes_w.shape
    if w_pset.scheme != "uniform":
        raise SimulationError("weight codes must be uniform-quantized")
    for p in w_pset.params:
        if float(p.z) != int(p.z):
            raise SimulationError("weight zero points must be integers in the lane")
    if grouping is not None and x_pset.group_of is not None:
        if not np.array_equal(grouping.group_of, x_pset.group_of):
            raise SimulationError("grouping disagrees with the activation group map")

    s_w, z_w = _weight_scales(w_pset, m)
    # weights enter the lanes as pre-subtracted signed integers
    w_int = codes_w - z_w.astype(np.int64)[None, :]
    colsum_w = np.sum(w_int, axis=0, dtype=np.int64)

    counts = {key: 0 for key in ("fp32_mac", "int_mul", "bit_shift", "int_add",
                                 "dec_add", "dequant_fp_op")}

    if np.any(codes_x < 0) or np.any(codes_w < 0):
        raise SimulationError("codes must be non-negative")
    if np.any(codes_x >= 2**x_pset.k) or np.any(codes_w >= 2**w_pset.k):
        raise SimulationError("codes exceed the configured bit-width")

    if x_pset.scheme == "hluq":
        if x_pset.granularity != "per_tensor":
            raise SimulationError("hybrid activations are per-tensor in the lanes")
        cfg = x_pset.params[0].hluq
        if cfg.b_hat & (cfg.b_hat - 1):
            raise ConfigError(f"threshold {cfg.b_hat} is not a power of two")
        mask_u = route_mask(codes_x, cfg.b_hat, cfg.k)
        u = np.where(mask_u, codes_x - cfg.b_hat, 0)
        # integer multiplier-adder lane
        acc_u = u @ w_int                       # exact int64
        cnt_u = mask_u.astype(np.int64) @ w_int  # sum of weights on the lane
        # bit-shift lane: fixed-point with frac_bits fractional bits; shifts
        # past 63 floor to 0 / -1 anyway, so clamp to stay in defined range
        base = w_int << pe.frac_bits            # [K, M]
        shift = np.minimum(codes_x, 63)
        shifted = base[None, :, :] >> shift[:, :, None]  # arithmetic shift
        acc_l = np.sum(np.where(mask_u[:, :, None], 0, shifted), axis=1,
                       dtype=np.int64)
        # merge at dequantization
        y = s_w[None, :] * (
            cfg.s2_step * acc_u
            + cfg.s1 * (cnt_u + acc_l * 2.0**-pe.frac_bits)
            + cfg.offset * colsum_w[None, :].astype(np.float64)
        )
        n_uniform = int(np.sum(mask_u))
        n_log2 = codes_x.size - n_uniform
        counts["int_mul"] = n_uniform * m
        counts["bit_shift"] = n_log2 * m
        counts["int_add"] = 2 * n_uniform * m   # product and weight-sum adds
        counts["dec_add"] = n_log2 * m
        counts["dequant_fp_op"] = 6 * n * m
    elif x_pset.scheme == "uniform":
        idx = x_pset.param_index_for_channels(k_inner)
        n_groups = int(idx.max()) + 1
        s_x = np.array([x_pset.params[i].s for i in range(len(x_pset.params))])
        z_x = np.array([float(x_pset.params[i].z)
                        for i in range(len(x_pset.params))])
        y = np.zeros((n, m), dtype=np.float64)
        for g in range(n_groups):
            members = np.where(idx == g)[0]
            if len(members) == 0:
                continue
            acc_g = codes_x[:, members] @ w_int[members, :]      # int64 exact
            wsum_g = np.sum(w_int[members, :], axis=0, dtype=np.int64)
            y += s_x[g] * (acc_g - z_x[g] * wsum_g[None, :].astype(np.float64))
        y *= s_w[None, :]
        counts["int_mul"] = codes_x.size * m
        counts["int_add"] = 2 * codes_x.size * m
        counts["dequant_fp_op"] = (3 * n_groups + 1) * n * m
        n_uniform = codes_x.size
        n_log2 = 0
    else:
        raise SimulationError(f"unsupported activation scheme {x_pset.scheme!r}")

    macs = n * k_inner * m
    assert counts["int_mul"] + counts["bit_shift"] == macs
    cycles = -(-macs // (pe.lanes * pe.pe_width)) + pe.pipeline_stages

    n_x_params = len(x_pset.params)
    n_w_params = len(w_pset.params)
    param_bits = (n_x_params + n_w_params) * 2 * PARAM_REGISTER_BITS
    k_x = x_pset.k
    k_w = w_pset.k
    data_bits = codes_x.size * k_x + codes_w.size * k_w
    energy = sum(counts[key] * pe.energy.get(key, 0.0) for key in counts)
    energy += (param_bits + data_bits) * pe.energy.get("dram_bit", 0.0)

    report = SimReport(
        counts=counts,
        routed_log2=n_log2,
        routed_uniform=n_uniform,
        cycles=cycles,
        energy=energy,
        param_storage_bits=param_bits,
        dram_param_bits=param_bits,
        dram_data_bits=data_bits,
    )
    return Tensor.from_array(y.astype(np.float32), channel_axis=1), report


def cost_compare(n: int, k_inner: int, m: int,
                 configs: dict[str, PeConfig] | None = None,
                 channels: int = 2048, groups: int = 4) -> dict[str, dict]:
    """Model the same [N,K]x[K,M] workload under fp32 / int8 / hybrid-int4
    lane configurations and report speedup and energy ratios against fp32.

    Measured silicon numbers are deliberately not reproduced; the table shows
    this model's own ratios.
    """
    if configs is None:
        configs = {
            "fp32": PeConfig(lanes=8),
            "int8": PeConfig(lanes=32),
            "hluq_int4": PeConfig(lanes=64),
        }
    macs = n * k_inner * m
    op_class = {"fp32": "fp32_mac", "int8": "int8_mul", "hluq_int4": "int_mul"}
    data_bits = {"fp32": 32, "int8": 8, "hluq_int4": 4}
    rows: dict[str, dict] = {}
    for name, pe in configs.items():
        cycles = -(-macs // (pe.lanes * pe.pe_width)) + pe.pipeline_stages
        opc = op_class.get(name, "int_mul")
        energy = macs * pe.energy.get(opc, 1.0)
        reg_bits, dram_bytes, reduction = storage_cost(
            channels, groups if name == "hluq_int4" else channels)
        traffic = (n * k_inner + k_inner * m) * data_bits.get(name, 32)
        energy += traffic * pe.energy.get("dram_bit", 0.0)
        rows[name] = {
            "cycles": cycles,
            "energy": energy,
            "param_register_bits": reg_bits,
            "param_reduction": reduction,
            "dram_data_bits": traffic,
        }
    base = rows.get("fp32")
    if base is not None:
        for name, row in rows.items():
            row["speedup_vs_fp32"] = base["cycles"] / row["cycles"]
            row["energy_ratio_vs_fp32"] = base["energy"] / row["energy"]
    return rows
