"""Block-wise reconstruction on a Linear-GELU-Linear toy block.

The optimizer minimizes the squared error between the float block output and
the quantized block output (block_loss) by plain gradient descent with a
cosine-decayed step, adjusting quantization scales, zero points, and a bounded
per-weight correction term.

Gradient conventions (what ste_grad computes):
  * data path through a quantizer: straight-through, gated to zero where the
    code clamps at a band edge;
  * scale path: the local derivative of the real forward, i.e. the rounded code
    stays fixed (d/ds of s*(q - z) is q - z, clamped codes included). This
    matches central finite differences of the actual forward at points away
    from rounding/clamp boundaries, which is what the gradient checks verify,
    and it makes a z=0 quantizer whose inputs all saturate at the low edge
    receive exactly zero scale gradient;
  * zero points stay continuous during optimization; they only receive gradient
    from clamped elements (-s), again matching finite differences;
  * the weight correction is added after quantize-dequantize and clipped to
    half a quantization step, so its gradient is exact where unclipped.

Because each quantizer's output is piecewise constant in everything upstream
of it, finite differences of the full loss can only validate the site nearest
the output; the gradient checks therefore exercise one quantization site at a
time, with the others disabled.

All reconstruction arithmetic runs in float64 with sequential ascending-k
matmul accumulation, so identical (seed, data, config) gives bit-identical
loss trajectories regardless of BLAS threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .calibration import HluqSearchSpace, hluq_search, minmax_init
from .errors import DivergenceError, ParameterError, ShapeError
from .quantizers import HluqConfig, ParamSet, QuantParams, round_half_away
from .tensor import Tensor

DIVERGENCE_FACTOR = 1e6

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu64(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x), via the error function."""
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu64_grad(x: np.ndarray) -> np.ndarray:
    """d/dx of exact GELU: Phi(x) + x * phi(x)."""
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def seqmm64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sequential ascending-k float64 matmul (deterministic accumulation)."""
    n, k = a.shape
    k2, m = b.shape
    if k != k2:
        raise ShapeError(f"inner dims disagree: {a.shape} x {b.shape}")
    acc = np.zeros((n, m), dtype=np.float64)
    for i in range(k):
        acc += a[:, i : i + 1] * b[i : i + 1, :]
    return acc


@dataclass(frozen=True)
class ToyBlock:
    """Linear-1 -> GELU -> Linear-2 weights; the quantization sites live in the
    ReconConfig, not here."""

    w1: Tensor  # [C, H], output columns are channels
    b1: Tensor  # [H]
    w2: Tensor  # [H, C]
    b2: Tensor  # [C]

    def __post_init__(self):
        c, h = self.w1.dims
        h2, c2 = self.w2.dims
        if h != h2 or c != c2 or self.b1.dims != (h,) or self.b2.dims != (c,):
            raise ShapeError("toy block weight/bias dims are inconsistent")

    @property
    def in_features(self) -> int:
        return self.w1.dims[0]

    @property
    def hidden(self) -> int:
        return self.w1.dims[1]


@dataclass(frozen=True)
class ReconConfig:
    """Which quantizer sits at each site, plus optimizer knobs.

    input_mode: 'off' | 'per_tensor' | 'per_channel' | 'per_group'
        (per_group starts with one group per channel; the progressive grouping
        driver merges them at milestones)
    act_mode: 'off' | 'uniform' | 'hluq'    (per-tensor either way)
    weight_mode: 'off' | 'per_channel' | 'per_group'
    """

    k_w: int = 4
    k_a: int = 4
    input_mode: str = "per_group"
    act_mode: str = "hluq"
    weight_mode: str = "per_channel"
    weight_groups: int = 32
    iters: int = 2000
    lr: float = 0.1
    seed: int = 0
    search_space: HluqSearchSpace = field(default_factory=HluqSearchSpace)

    def __post_init__(self):
        if self.input_mode not in ("off", "per_tensor", "per_channel", "per_group"):
            raise ParameterError(f"bad input_mode {self.input_mode!r}")
        if self.act_mode not in ("off", "uniform", "hluq"):
            raise ParameterError(f"bad act_mode {self.act_mode!r}")
        if self.weight_mode not in ("off", "per_channel", "per_group"):
            raise ParameterError(f"bad weight_mode {self.weight_mode!r}")
        if self.iters < 0 or self.lr < 0:
            raise ParameterError("iters and lr must be non-negative")


# ---------------------------------------------------------------------------
# Quantization sites (2-D values, units along axis 1)
# ---------------------------------------------------------------------------

def _norm_step(g: np.ndarray, lr: float) -> np.ndarray:
    """RMS-normalized descent step: families with wildly different gradient
    magnitudes (log-scales vs zero points vs weight corrections) all move at
    most lr per iteration in their own natural units."""
    g = np.asarray(g, dtype=np.float64)
    rms = float(np.sqrt(np.mean(g * g)))
    if rms == 0.0:
        return np.zeros_like(g)
    return lr * g / rms


class IdentitySite:
    """Disabled site: passes values through untouched."""

    learnable_names: tuple[str, ...] = ()

    def fq(self, v):
        return v, None

    def backward(self, cache, dv):
        return dv, {}

    def apply_grads(self, grads, lr):
        pass

    def get_learnables(self):
        return {}

    def set_learnables(self, vals):
        pass


class UniformSite:
    """Uniform quantize-dequantize over axis-1 units with shared group params.

    th_s holds log-scales (positivity by construction); z is continuous during
    optimization.
    """

    def __init__(self, group_of: np.ndarray, s: np.ndarray, z: np.ndarray, k: int):
        self.group_of = np.asarray(group_of, dtype=np.int64)
        self.th_s = np.log(np.asarray(s, dtype=np.float64))
        self.z = np.asarray(z, dtype=np.float64).copy()
        self.k = k

    learnable_names = ("th_s", "z")

    @property
    def num_groups(self) -> int:
        return len(self.th_s)

    def fq(self, v):
        top = 2**self.k - 1
        s_el = np.exp(self.th_s)[self.group_of][None, :]
        z_el = self.z[self.group_of][None, :]
        raw = round_half_away(v / s_el) + z_el
        in_band = (raw >= 0) & (raw <= top)
        code = np.clip(raw, 0, top)
        vq = s_el * (code - z_el)
        return vq, (s_el, z_el, code, in_band)

    def backward(self, cache, dv):
        s_el, z_el, code, in_band = cache
        dx = dv * in_band
        # d vq / d s = code - z everywhere (the rounded code is locally constant),
        # which is exactly what central differences of the forward measure; a
        # z=0 quantizer saturating at the low edge therefore gets zero gradient
        per_col_s = np.sum(dv * (code - z_el) * s_el, axis=0)
        per_col_z = np.sum(dv * s_el * (in_band - 1.0), axis=0)
        g = self.num_groups
        return dx, {
            "th_s": np.bincount(self.group_of, weights=per_col_s, minlength=g),
            "z": np.bincount(self.group_of, weights=per_col_z, minlength=g),
        }

    def apply_grads(self, grads, lr):
        self.th_s -= _norm_step(grads["th_s"], lr)
        self.z -= _norm_step(grads["z"], lr)

    def get_learnables(self):
        return {"th_s": self.th_s, "z": self.z}

    def set_learnables(self, vals):
        self.th_s = vals["th_s"].copy()
        self.z = vals["z"].copy()

    def regroup(self, old_to_new: np.ndarray, centroids: np.ndarray) -> None:
        """Adopt clustered centroids as the shared group parameters."""
        self.group_of = np.asarray(old_to_new, np.int64)[self.group_of]
        self.th_s = np.log(centroids[:, 0])
        self.z = centroids[:, 1].copy()

    def to_paramset(self) -> ParamSet:
        s = np.exp(self.th_s)
        top = 2**self.k - 1
        params = tuple(
            QuantParams("uniform", self.k, s=float(si),
                        z=int(np.clip(round_half_away(zi), 0, top)))
            for si, zi in zip(s, self.z)
        )
        if len(params) == 1:
            return ParamSet("per_tensor", params)
        if np.array_equal(self.group_of, np.arange(len(self.group_of))) \
                and len(params) == len(self.group_of):
            return ParamSet("per_channel", params)
        return ParamSet("per_group", params, group_of=self.group_of.copy())


class HluqSite:
    """Per-tensor hybrid quantize-dequantize; threshold and offset stay fixed."""

    def __init__(self, cfg: HluqConfig):
        self.th1 = float(np.log(cfg.s1))
        self.th2 = float(np.log(cfg.s2_step))
        self.b_hat = cfg.b_hat
        self.offset = cfg.offset
        self.k = cfg.k

    learnable_names = ("th1", "th2")

    def fq(self, v):
        s1 = math.exp(self.th1)
        s2 = math.exp(self.th2)
        top_uni = 2**self.k - 1 - self.b_hat
        y = v - self.offset
        log_branch = y <= s1
        with np.errstate(divide="ignore", invalid="ignore"):
            e = round_half_away(-np.log2(np.where(y > 0, y / s1, 1.0)))
        in_log = log_branch & (y > 0) & (e <= self.b_hat - 1)
        c = np.where(y > 0, np.clip(e, 0, self.b_hat - 1), self.b_hat - 1)
        pow2 = np.power(2.0, -c)
        u_raw = round_half_away(y / s2 - s1 / s2)
        in_uni = (~log_branch) & (u_raw <= top_uni)
        u = np.clip(u_raw, 0, top_uni)
        vq = np.where(log_branch, s1 * pow2, s1 + s2 * u) + self.offset
        return vq, (log_branch, in_log, in_uni, pow2, u, s1, s2)

    def backward(self, cache, dv):
        log_branch, in_log, in_uni, pow2, u, s1, s2 = cache
        dx = dv * (in_log | in_uni)
        # scale paths are ungated: clamped codes still scale with s1/s2 in the
        # forward (s1*2^-(b_hat-1) at the log floor, s1 + s2*top at the ceiling)
        ds1 = np.sum(dv * np.where(log_branch, pow2, 1.0))
        ds2 = np.sum(dv * np.where(log_branch, 0.0, u))
        return dx, {"th1": ds1 * s1, "th2": ds2 * s2}

    def apply_grads(self, grads, lr):
        self.th1 -= float(_norm_step(np.array([grads["th1"]]), lr)[0])
        self.th2 -= float(_norm_step(np.array([grads["th2"]]), lr)[0])

    def get_learnables(self):
        return {"th1": np.array([self.th1]), "th2": np.array([self.th2])}

    def set_learnables(self, vals):
        self.th1 = float(vals["th1"][0])
        self.th2 = float(vals["th2"][0])

    def to_config(self) -> HluqConfig:
        return HluqConfig(s1=math.exp(self.th1), s2_step=math.exp(self.th2),
                          b_hat=self.b_hat, k=self.k, offset=self.offset)


class WeightSite:
    """Uniform per-column (or per-group) weight quantization plus a bounded
    additive correction applied after dequantization (clipped to half a step)."""

    def __init__(self, group_of, s, z, k, shape):
        self.uni = UniformSite(group_of, s, z, k)
        self.p = np.zeros(shape, dtype=np.float64)

    learnable_names = ("th_s", "z", "p")

    def fq(self, w):
        wq, cache = self.uni.fq(w)
        s_el = cache[0]
        bound = 0.5 * s_el
        clipped_lo = self.p < -bound
        clipped_hi = self.p > bound
        p_eff = np.clip(self.p, -bound, bound)
        return wq + p_eff, (cache, clipped_lo, clipped_hi)

    def backward(self, cache, dv):
        uni_cache, clipped_lo, clipped_hi = cache
        s_el = uni_cache[0]
        _, grads = self.uni.backward(uni_cache, dv)
        # the clip bound +/- s/2 moves with the scale
        clip_term = dv * (clipped_hi.astype(np.float64)
                          - clipped_lo.astype(np.float64)) * 0.5 * s_el
        per_col = np.sum(clip_term, axis=0)
        grads["th_s"] = grads["th_s"] + np.bincount(
            self.uni.group_of, weights=per_col, minlength=self.uni.num_groups)
        grads["p"] = dv * ~(clipped_lo | clipped_hi)
        return None, grads

    def apply_grads(self, grads, lr):
        self.uni.th_s -= _norm_step(grads["th_s"], lr)
        self.uni.z -= _norm_step(grads["z"], lr)
        # the correction's natural unit is its own clip bound (half a step)
        bound = 0.5 * np.exp(self.uni.th_s)[self.uni.group_of][None, :]
        self.p -= _norm_step(grads["p"], lr) * bound

    def get_learnables(self):
        return {"th_s": self.uni.th_s, "z": self.uni.z, "p": self.p}

    def set_learnables(self, vals):
        self.uni.th_s = vals["th_s"].copy()
        self.uni.z = vals["z"].copy()
        self.p = vals["p"].reshape(self.p.shape).copy()


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass
class ReconState:
    """Snapshot of a reconstruction run."""

    iteration: int
    loss_history: np.ndarray
    initial_loss: float
    final_loss: float
    sites: dict

    def site(self, name):
        return self.sites[name]


def block_loss(o: Tensor, o_hat: Tensor) -> float:
    """Sum of squared differences, accumulated in float64."""
    if o.dims != o_hat.dims:
        raise ShapeError(f"block outputs disagree: {o.dims} vs {o_hat.dims}")
    d = o.data.astype(np.float64) - o_hat.data.astype(np.float64)
    return float(np.sum(d * d))


def forward_fp(block: ToyBlock, x: Tensor) -> Tensor:
    """Float reference path: Linear-1 -> exact GELU -> Linear-2."""
    out = _forward_fp64(block, x.array().astype(np.float64))
    return Tensor.from_array(out.astype(np.float32), channel_axis=1)


def _forward_fp64(block: ToyBlock, x64: np.ndarray) -> np.ndarray:
    h = seqmm64(x64, block.w1.array().astype(np.float64)) \
        + block.b1.data.astype(np.float64)[None, :]
    a = gelu64(h)
    return seqmm64(a, block.w2.array().astype(np.float64)) \
        + block.b2.data.astype(np.float64)[None, :]


class ReconEngine:
    """Holds the quantization sites for one block and drives optimization."""

    SITE_ORDER = ("input", "w1", "act", "w2")

    def __init__(self, block: ToyBlock, batches: list[Tensor], cfg: ReconConfig):
        if not batches:
            raise ParameterError("need at least one calibration batch")
        for b in batches:
            if b.rank != 2 or b.dims[1] != block.in_features:
                raise ShapeError(
                    f"batch dims {b.dims} do not fit block with "
                    f"{block.in_features} input channels"
                )
        self.block = block
        self.cfg = cfg
        self.x64 = [b.array().astype(np.float64) for b in batches]
        self.w1_64 = block.w1.array().astype(np.float64)
        self.w2_64 = block.w2.array().astype(np.float64)
        self.b1_64 = block.b1.data.astype(np.float64)
        self.b2_64 = block.b2.data.astype(np.float64)
        self.refs = [_forward_fp64(block, xb) for xb in self.x64]
        self.sites = self._init_sites(batches)
        self.loss_history: list[float] = []
        self.iteration = 0

    # -- site construction ---------------------------------------------------

    def _init_sites(self, batches: list[Tensor]) -> dict:
        cfg = self.cfg
        sites: dict = {}

        if cfg.input_mode == "off":
            sites["input"] = IdentitySite()
        else:
            gran = "per_channel" if cfg.input_mode == "per_group" else cfg.input_mode
            stacked = Tensor.from_array(
                np.concatenate([b.array() for b in batches], axis=0), channel_axis=1)
            pset = minmax_init(stacked, cfg.k_a, gran)
            c = self.block.in_features
            if gran == "per_tensor":
                group_of = np.zeros(c, dtype=np.int64)
                s = np.array([pset.params[0].s])
                z = np.array([float(pset.params[0].z)])
            else:
                group_of = np.arange(c, dtype=np.int64)
                s = np.array([p.s for p in pset.params])
                z = np.array([float(p.z) for p in pset.params])
            sites["input"] = UniformSite(group_of, s, z, cfg.k_a)

        sites["w1"] = self._init_weight_site(self.w1_64)
        sites["w2"] = self._init_weight_site(self.w2_64)

        if cfg.act_mode == "off":
            sites["act"] = IdentitySite()
        else:
            acts = []
            for xb in self.x64:
                h = seqmm64(xb, self.w1_64) + self.b1_64[None, :]
                acts.append(Tensor.from_array(gelu64(h).astype(np.float32),
                                              channel_axis=1))
            if cfg.act_mode == "hluq":
                w2_t = Tensor.from_array(self.w2_64.astype(np.float32),
                                         channel_axis=1)
                hcfg = hluq_search(acts, w2_t, cfg.k_a, cfg.search_space)
                sites["act"] = HluqSite(hcfg)
            else:
                stacked = Tensor.from_array(
                    np.concatenate([a.array() for a in acts], axis=0),
                    channel_axis=1)
                pset = minmax_init(stacked, cfg.k_a, "per_tensor")
                h = self.block.hidden
                sites["act"] = UniformSite(np.zeros(h, np.int64),
                                           np.array([pset.params[0].s]),
                                           np.array([float(pset.params[0].z)]),
                                           cfg.k_a)
        return sites

    def _init_weight_site(self, w64: np.ndarray):
        cfg = self.cfg
        if cfg.weight_mode == "off":
            return IdentitySite()
        wt = Tensor.from_array(w64.astype(np.float32), channel_axis=1)
        pset = minmax_init(wt, cfg.k_w, "per_channel")
        s = np.array([p.s for p in pset.params])
        z = np.array([float(p.z) for p in pset.params])
        cols = w64.shape[1]
        if cfg.weight_mode == "per_channel":
            return WeightSite(np.arange(cols, dtype=np.int64), s, z, cfg.k_w,
                              w64.shape)
        from .grouping import cluster_channel_params

        assign, centroids = cluster_channel_params(s, z, cfg.weight_groups,
                                                   seed=cfg.seed)
        return WeightSite(assign, centroids[:, 0], centroids[:, 1], cfg.k_w,
                          w64.shape)

    # -- forward / backward ---------------------------------------------------

    def _forward(self, x64: np.ndarray, want_cache: bool):
        sites = self.sites
        xq, c_in = sites["input"].fq(x64)
        w1q, c_w1 = sites["w1"].fq(self.w1_64)
        h = seqmm64(xq, w1q) + self.b1_64[None, :]
        a = gelu64(h)
        aq, c_act = sites["act"].fq(a)
        w2q, c_w2 = sites["w2"].fq(self.w2_64)
        o = seqmm64(aq, w2q) + self.b2_64[None, :]
        if not want_cache:
            return o, None
        return o, (xq, c_in, w1q, c_w1, h, aq, c_act, w2q, c_w2)

    def loss_on_batch(self, idx: int) -> float:
        o, _ = self._forward(self.x64[idx], want_cache=False)
        d = o - self.refs[idx]
        return float(np.sum(d * d))

    def full_loss(self) -> float:
        """Mean per-batch loss over the whole calibration set."""
        return float(np.mean([self.loss_on_batch(i) for i in range(len(self.x64))]))

    def ste_grad(self, batch_idx: int):
        """Loss and gradients for one calibration batch (see module docstring
        for the backward conventions)."""
        x64 = self.x64[batch_idx]
        o, cache = self._forward(x64, want_cache=True)
        xq, c_in, w1q, c_w1, h, aq, c_act, w2q, c_w2 = cache
        diff = o - self.refs[batch_idx]
        loss = float(np.sum(diff * diff))
        do = 2.0 * diff

        grads: dict[str, dict] = {}
        dw2 = seqmm64(aq.T.copy(), do)
        _, grads["w2"] = self.sites["w2"].backward(c_w2, dw2)
        daq = seqmm64(do, w2q.T.copy())
        da, grads["act"] = self.sites["act"].backward(c_act, daq)
        dh = da * gelu64_grad(h)
        dw1 = seqmm64(xq.T.copy(), dh)
        _, grads["w1"] = self.sites["w1"].backward(c_w1, dw1)
        dxq = seqmm64(dh, w1q.T.copy())
        _, grads["input"] = self.sites["input"].backward(c_in, dxq)
        return loss, grads

    # -- optimization ----------------------------------------------------------

    def lr_at(self, t: int) -> float:
        """Cosine decay from cfg.lr toward zero over cfg.iters steps. With the
        RMS-normalized steps, cfg.lr is the largest per-iteration move of any
        parameter family in its natural units."""
        if self.cfg.iters <= 1:
            return self.cfg.lr
        return self.cfg.lr * 0.5 * (1.0 + math.cos(math.pi * (t - 1) / self.cfg.iters))

    def run(self, hook=None) -> ReconState:
        """cfg.iters descent steps, cycling batches; hook(t) fires after the
        parameter update of iteration t (milestone regrouping plugs in here)."""
        initial = self.full_loss()
        n_batches = len(self.x64)
        for t in range(1, self.cfg.iters + 1):
            self.iteration = t
            idx = (t - 1) % n_batches
            loss, grads = self.ste_grad(idx)
            if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(initial, 1e-30):
                raise DivergenceError(
                    f"loss {loss:.6g} at iteration {t} exceeds "
                    f"{DIVERGENCE_FACTOR:.0e} x initial ({initial:.6g})"
                )
            self.loss_history.append(loss)
            lr = self.lr_at(t)
            for name in self.SITE_ORDER:
                self.sites[name].apply_grads(grads[name], lr)
            if hook is not None:
                hook(t)
        final = self.full_loss()
        return ReconState(
            iteration=self.iteration,
            loss_history=np.array(self.loss_history, dtype=np.float64),
            initial_loss=initial,
            final_loss=final,
            sites=self.sites,
        )

    # -- progressive-grouping interface ---------------------------------------

    def input_group_params(self):
        site = self.sites["input"]
        if not isinstance(site, UniformSite):
            raise ParameterError("input site is not a grouped uniform quantizer")
        return np.exp(site.th_s), site.z.copy()

    def input_group_of(self) -> np.ndarray:
        return self.sites["input"].group_of.copy()

    def regroup_input_site(self, old_to_new: np.ndarray,
                           centroids: np.ndarray) -> None:
        self.sites["input"].regroup(old_to_new, centroids)

    # -- flattened learnable vector (for gradient checking) --------------------

    def pack(self) -> np.ndarray:
        chunks = []
        for name in self.SITE_ORDER:
            vals = self.sites[name].get_learnables()
            for key in self.sites[name].learnable_names:
                chunks.append(np.asarray(vals[key], np.float64).reshape(-1))
        return np.concatenate(chunks) if chunks else np.zeros(0)

    def unpack(self, vec: np.ndarray) -> None:
        off = 0
        for name in self.SITE_ORDER:
            site = self.sites[name]
            vals = site.get_learnables()
            new = {}
            for key in site.learnable_names:
                size = np.asarray(vals[key]).size
                new[key] = vec[off : off + size].reshape(np.asarray(vals[key]).shape)
                off += size
            site.set_learnables(new)
        if off != len(vec):
            raise ShapeError(f"vector length {len(vec)} != learnable count {off}")

    def pack_grads(self, grads: dict) -> np.ndarray:
        chunks = []
        for name in self.SITE_ORDER:
            site = self.sites[name]
            for key in site.learnable_names:
                chunks.append(np.asarray(grads[name][key], np.float64).reshape(-1))
        return np.concatenate(chunks) if chunks else np.zeros(0)


def forward_quant(block: ToyBlock, x: Tensor, state: ReconState) -> Tensor:
    """Quantized path using a snapshot's sites (identity sites pass through,
    making this bit-identical to forward_fp when quantization is disabled)."""
    x64 = x.array().astype(np.float64)
    xq, _ = state.site("input").fq(x64)
    w1q, _ = state.site("w1").fq(block.w1.array().astype(np.float64))
    h = seqmm64(xq, w1q) + block.b1.data.astype(np.float64)[None, :]
    a = gelu64(h)
    aq, _ = state.site("act").fq(a)
    w2q, _ = state.site("w2").fq(block.w2.array().astype(np.float64))
    o = seqmm64(aq, w2q) + block.b2.data.astype(np.float64)[None, :]
    return Tensor.from_array(o.astype(np.float32), channel_axis=1)


def reconstruct(block: ToyBlock, calib_batches: list[Tensor], iters: int,
                lr: float, seed: int, cfg: ReconConfig | None = None,
                hook=None) -> ReconState:
    """Run gradient-descent reconstruction and return the final state."""
    base = cfg or ReconConfig()
    from dataclasses import replace

    cfg = replace(base, iters=iters, lr=lr, seed=seed)
    engine = ReconEngine(block, calib_batches, cfg)
    return engine.run(hook=hook)
