"""Channel grouping: deterministic k-means over per-channel (s, z) pairs,
the progressive group-count schedule used during block reconstruction, and the
parameter-storage cost model.

Scales and zero points have incommensurable units, so points are standardized
per feature before clustering; centroids are reported as plain means of the
original points in each cluster (exact for singleton clusters, which keeps
G == C grouping bit-exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import mix_bits
from .errors import ParameterError, ShapeError
from .quantizers import ParamSet, QuantParams, round_half_away

PARAM_REGISTER_BITS = 18  # bits per stored scale or zero point
DEFAULT_GROUPS = 4

_KMEANS_MAX_ITERS = 100


@dataclass(frozen=True)
class GroupAssignment:
    """channel -> group map, the shared (s, z) per group, and the permutation
    that makes same-group channels contiguous (stable by original index)."""

    group_of: np.ndarray
    centroids: np.ndarray  # [G, 2] as (s, z)
    reorder: np.ndarray

    def __post_init__(self):
        gm = np.asarray(self.group_of, dtype=np.int64)
        cen = np.asarray(self.centroids, dtype=np.float64)
        if cen.ndim != 2 or cen.shape[1] != 2:
            raise ShapeError(f"centroids must be [G, 2], got {cen.shape}")
        g = cen.shape[0]
        if gm.min() < 0 or gm.max() >= g:
            raise ShapeError("group map points outside the centroid list")
        counts = np.bincount(gm, minlength=g)
        if np.any(counts == 0):
            raise ParameterError("every group must be non-empty")
        perm = np.asarray(self.reorder, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(len(gm))):
            raise ShapeError("reorder is not a permutation of the channels")
        object.__setattr__(self, "group_of", gm)
        object.__setattr__(self, "centroids", cen)
        object.__setattr__(self, "reorder", perm)

    @property
    def num_groups(self) -> int:
        return self.centroids.shape[0]

    def inverse_reorder(self) -> np.ndarray:
        return np.argsort(self.reorder, kind="stable")

    def to_text(self) -> str:
        lines = [f"groups = {self.num_groups}"]
        lines.append("centroid_s = " + ",".join(repr(float(s))
                                                for s in self.centroids[:, 0]))
        lines.append("centroid_z = " + ",".join(repr(float(z))
                                                for z in self.centroids[:, 1]))
        lines.append("channel_map = " + ",".join(str(int(g)) for g in self.group_of))
        lines.append("permutation = " + ",".join(str(int(p)) for p in self.reorder))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GroupAssignment":
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        cen = np.stack([
            np.array([float(v) for v in kv["centroid_s"].split(",")]),
            np.array([float(v) for v in kv["centroid_z"].split(",")]),
        ], axis=1)
        return cls(
            group_of=np.array([int(v) for v in kv["channel_map"].split(",")]),
            centroids=cen,
            reorder=np.array([int(v) for v in kv["permutation"].split(",")]),
        )


def _stable_reorder(group_of: np.ndarray) -> np.ndarray:
    return np.argsort(group_of, kind="stable")


def _seed_indices(points: np.ndarray, k: int, seed: int) -> list[int]:
    """Farthest-point seeding: a seeded first pick, then greedy max-min."""
    n = len(points)
    first = int(mix_bits(seed, np.array([0], dtype=np.uint64))[0] % np.uint64(n))
    chosen = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))  # ties -> lowest index, deterministic
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return chosen


def kmeans(points, k: int, seed: int):
    """Lloyd's algorithm with farthest-point init and empty-cluster repair.

    Runs to an assignment fixpoint (or 100 iterations); per-iteration distortion
    is non-increasing by construction and asserted. If k exceeds the number of
    distinct points it is reduced to that count. Returns (centroids, assignment)
    with centroids sorted by ascending first feature.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ShapeError(f"points must be 2-D, got shape {pts.shape}")
    n = len(pts)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    distinct = len(np.unique(pts, axis=0))
    if k > distinct:
        k = distinct

    centroids = pts[_seed_indices(pts, k, seed)].copy()
    assign = None
    prev_distortion = np.inf
    for _it in range(_KMEANS_MAX_ITERS):
        d2 = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        distortion = float(np.sum(d2[np.arange(n), new_assign]))
        assert distortion <= prev_distortion + 1e-9, "Lloyd distortion increased"
        prev_distortion = distortion
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for g in range(k):
            members = assign == g
            if np.any(members):
                centroids[g] = pts[members].mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(np.sum((pts - centroids[g]) ** 2, axis=1)))
                centroids[g] = pts[far]
    # drop clusters that still ended empty (duplicated centroids can starve one)
    counts = np.bincount(assign, minlength=k)
    if np.any(counts == 0):
        keep = np.where(counts > 0)[0]
        dense = np.full(k, -1, dtype=np.int64)
        dense[keep] = np.arange(len(keep))
        assign = dense[assign]
        centroids = centroids[keep]
        k = len(keep)
    # canonical order: ascending first feature (scale)
    order = np.argsort(centroids[:, 0], kind="stable")
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return centroids[order], remap[assign]


def _standardize(pts: np.ndarray) -> np.ndarray:
    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (pts - mean) / std


def cluster_channel_params(s: np.ndarray, z: np.ndarray, k: int, seed: int):
    """Cluster per-channel (s, z) in standardized space.

    Returns (group_of, centroids[G, 2]) where each centroid is the plain mean of
    its member channels' original (s, z), so singleton clusters are exact.
    """
    pts = np.stack([np.asarray(s, np.float64), np.asarray(z, np.float64)], axis=1)
    _, assign = kmeans(_standardize(pts), k, seed)
    g = int(assign.max()) + 1
    centroids = np.zeros((g, 2), dtype=np.float64)
    for i in range(g):
        centroids[i] = pts[assign == i].mean(axis=0)
    return assign, centroids


def apply_grouping(pset: ParamSet, k: int, seed: int) -> GroupAssignment:
    """Group a per-channel uniform parameter set into k shared (s, z) pairs."""
    if pset.granularity != "per_channel" or pset.scheme != "uniform":
        raise ParameterError("grouping expects per-channel uniform parameters")
    s = np.array([p.s for p in pset.params])
    z = np.array([float(p.z) for p in pset.params])
    assign, centroids = cluster_channel_params(s, z, k, seed)
    return GroupAssignment(group_of=assign, centroids=centroids,
                           reorder=_stable_reorder(assign))


def grouped_minmax_paramset(assignment: GroupAssignment,
                            per_channel: ParamSet) -> ParamSet:
    """Per-group MinMax parameters over the union of member channel ranges.

    This is the granularity-comparison construction: channel range is a subset
    of its group's range, which is a subset of the tensor range, so grouped
    quantization error always lands between per-channel and per-tensor for the
    MinMax family, on any fixture.
    """
    if per_channel.granularity != "per_channel" or per_channel.scheme != "uniform":
        raise ParameterError("need per-channel uniform parameters")
    k = per_channel.k
    top = 2**k - 1
    params = []
    for g in range(assignment.num_groups):
        members = np.where(assignment.group_of == g)[0]
        if len(members) == 1:  # singleton groups keep their exact channel params
            params.append(per_channel.params[int(members[0])])
            continue
        los = [-per_channel.params[c].s * per_channel.params[c].z for c in members]
        his = [per_channel.params[c].s * (top - per_channel.params[c].z)
               for c in members]
        lo, hi = min(los), max(his)
        if hi > lo:
            s = (hi - lo) / top
        else:
            s = abs(lo) if lo != 0.0 else 1.0
        z = int(np.clip(round_half_away(-lo / s), 0, top))
        params.append(QuantParams("uniform", k, s=s, z=z))
    return ParamSet("per_group", tuple(params), group_of=assignment.group_of)


def grouped_paramset(assignment: GroupAssignment, k_bits: int,
                     reference: ParamSet | None = None) -> ParamSet:
    """Materialize a per-group uniform ParamSet from an assignment.

    With G == C every centroid is its own channel's original (s, z), so codes
    match per-channel quantization bit-exactly (the reference set, when given,
    supplies the exact original params for singleton groups).
    """
    params = []
    counts = np.bincount(assignment.group_of, minlength=assignment.num_groups)
    for g in range(assignment.num_groups):
        s_g, z_g = assignment.centroids[g]
        if reference is not None and counts[g] == 1:
            ch = int(np.where(assignment.group_of == g)[0][0])
            params.append(reference.params[ch])
            continue
        z_int = int(np.clip(round_half_away(z_g), 0, 2**k_bits - 1))
        params.append(QuantParams("uniform", k_bits, s=float(s_g), z=z_int))
    return ParamSet("per_group", tuple(params), group_of=assignment.group_of)


@dataclass(frozen=True)
class MilestoneSchedule:
    """When to re-cluster and to how many groups: ordered (iteration, groups)."""

    total_iters: int
    milestones: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ms = tuple((int(t), int(g)) for t, g in self.milestones)
        iters = [t for t, _ in ms]
        groups = [g for _, g in ms]
        if any(t <= 0 for t in iters) or iters != sorted(set(iters)):
            raise ParameterError(f"milestone iterations must strictly increase: {iters}")
        if iters and iters[-1] > self.total_iters:
            raise ParameterError(
                f"milestone {iters[-1]} beyond total iterations {self.total_iters}"
            )
        if any(g < 1 for g in groups) or groups != sorted(set(groups), reverse=True):
            raise ParameterError(f"group targets must strictly decrease: {groups}")
        object.__setattr__(self, "milestones", ms)

    @property
    def final_groups(self) -> int | None:
        return self.milestones[-1][1] if self.milestones else None

    def target_at(self, t: int) -> int | None:
        for mt, g in self.milestones:
            if mt == t:
                return g
        return None

    @classmethod
    def default(cls, channels: int, k: int, total_iters: int) -> "MilestoneSchedule":
        """Geometric decay toward k groups at 25/50/75% of the run, skipping
        stops that are not strictly below the starting channel count."""
        targets, cur = [], channels
        for g in (64, 16, k):
            g = max(g, k)
            if g < cur:
                targets.append(g)
                cur = g
        fracs = (0.25, 0.5, 0.75)[3 - len(targets):]
        ms = tuple((max(1, int(round(f * total_iters))), g)
                   for f, g in zip(fracs, targets))
        return cls(total_iters=total_iters, milestones=ms)


def progressive_cag(engine, schedule: MilestoneSchedule, seed: int = 0):
    """Run block reconstruction, re-clustering the input-site channel params at
    each milestone (the engine starts per-channel: one group per channel).

    Returns (GroupAssignment, ReconState).
    """
    if schedule.total_iters != engine.cfg.iters:
        raise ParameterError(
            f"schedule covers {schedule.total_iters} iterations, engine runs "
            f"{engine.cfg.iters}"
        )

    def hook(t: int) -> None:
        target = schedule.target_at(t)
        if target is None:
            return
        s, z = engine.input_group_params()
        old_to_new, centroids = cluster_channel_params(s, z, target, seed=seed + t)
        engine.regroup_input_site(old_to_new, centroids)

    state = engine.run(hook=hook)
    s, z = engine.input_group_params()
    group_of = engine.input_group_of()
    centroids = np.stack([s, z], axis=1)
    assignment = GroupAssignment(group_of=group_of, centroids=centroids,
                                 reorder=_stable_reorder(group_of))
    return assignment, state


def storage_cost(channels: int, groups: int,
                 bits_per_param: int = PARAM_REGISTER_BITS):
    """Register bits, DRAM bytes per transfer, and the relative reduction of
    grouped (s, z) storage versus per-channel storage."""
    if not (channels >= groups >= 1):
        raise ParameterError(f"need channels >= groups >= 1, got {channels}, {groups}")
    registers_bits = groups * 2 * bits_per_param
    dram_bytes = -(-registers_bits // 8)
    reduction = 1.0 - groups / channels
    return registers_bits, dram_bytes, reduction
