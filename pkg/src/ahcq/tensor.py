"""Dense float32 tensor with a named channel axis, plus the binary container format.

Everything downstream (quantizers, calibration, the datapath simulator) moves data
through this module, so the arithmetic here is deliberately boring: float32 storage,
sequential ascending-k accumulation in ``matmul`` so results are bit-reproducible,
and a little-endian container that round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, ShapeError

MAGIC = b"AHCT"
CONTAINER_VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sHBBB")  # magic, version, dtype, rank, channel_axis


@dataclass(frozen=True)
class Tensor:
    """Immutable row-major float32 array with an explicit channel axis.

    ``channel_axis`` designates which axis holds "channels": axis 1 (C) for an
    [N, C] activation, or the output-channel axis of a weight matrix. It is
    metadata only; no operation infers it from shape.
    """

    dims: tuple[int, ...]
    data: np.ndarray  # 1-D float32, length == prod(dims)
    channel_axis: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0 or any(d <= 0 for d in dims):
            raise ShapeError(f"dims must be positive, got {dims}")
        if not (0 <= self.channel_axis < len(dims)):
            raise ShapeError(
                f"channel_axis {self.channel_axis} out of range for rank {len(dims)}"
            )
        arr = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1)
        if arr.size != int(np.prod(dims)):
            raise ShapeError(
                f"data length {arr.size} != product of dims {int(np.prod(dims))}"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("tensor data must be finite (no NaN/Inf)")
        arr.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", arr)

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def num_channels(self) -> int:
        return self.dims[self.channel_axis]

    def array(self) -> np.ndarray:
        """Read-only view shaped to ``dims``."""
        return self.data.reshape(self.dims)

    @classmethod
    def from_array(cls, arr, channel_axis: int = 0) -> "Tensor":
        a = np.asarray(arr, dtype=np.float32)
        return cls(dims=a.shape, data=a.reshape(-1), channel_axis=channel_axis)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel (min, max, mean) triples along the tensor's channel axis."""

    min: np.ndarray
    max: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        if not (len(self.min) == len(self.max) == len(self.mean)):
            raise ShapeError("channel stat arrays must have equal length")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with sequential ascending-k float32 accumulation.

    out[n, m] = sum_k a[n, k] * b[k, m], each partial sum rounded in float32 in
    ascending k order, so two runs on identical inputs are bit-identical and a
    scalar-loop oracle reproduces the result exactly.
    """
    if a.rank != 2 or b.rank != 2:
        raise ShapeError(f"matmul needs rank-2 tensors, got ranks {a.rank}, {b.rank}")
    n, k = a.dims
    k2, m = b.dims
    if k != k2:
        raise ShapeError(f"inner dims disagree: {a.dims} x {b.dims}")
    av = a.array()
    bv = b.array()
    acc = np.zeros((n, m), dtype=np.float32)
    for i in range(k):
        acc += av[:, i : i + 1] * bv[i : i + 1, :]
    return Tensor.from_array(acc, channel_axis=1)


def channel_stats(t: Tensor) -> ChannelStats:
    """Exact per-channel min/max/mean over all non-channel axes."""
    if t.data.size == 0:
        raise DomainError("channel_stats of an empty tensor")
    moved = np.moveaxis(t.array(), t.channel_axis, 0)
    flat = moved.reshape(moved.shape[0], -1).astype(np.float64)
    return ChannelStats(
        min=flat.min(axis=1).astype(np.float32),
        max=flat.max(axis=1).astype(np.float32),
        mean=flat.mean(axis=1).astype(np.float32),
    )


def write_container(t: Tensor) -> bytes:
    """Serialize to the AHCT byte layout (little-endian, f32 row-major payload)."""
    if t.rank > 255:
        raise FormatError("container supports rank <= 255")
    header = _HEADER.pack(MAGIC, CONTAINER_VERSION, DTYPE_F32, t.rank, t.channel_axis)
    dims = struct.pack(f"<{t.rank}I", *t.dims)
    payload = t.data.astype("<f4").tobytes()
    return header + dims + payload


def read_container(blob: bytes) -> Tensor:
    """Parse AHCT bytes back into a Tensor; rejects bad magic/version/sizes."""
    if len(blob) < _HEADER.size:
        raise FormatError(f"container truncated: {len(blob)} bytes < header")
    magic, version, dtype, rank, channel_axis = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype tag {dtype}")
    if rank == 0:
        raise FormatError("container rank must be >= 1")
    off = _HEADER.size
    if len(blob) < off + 4 * rank:
        raise FormatError("container truncated inside dims")
    dims = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    count = int(np.prod(dims)) if rank else 0
    expected = off + 4 * count
    if len(blob) != expected:
        raise FormatError(
            f"declared size {expected} bytes != payload size {len(blob)} bytes"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
    return Tensor(dims=dims, data=data, channel_axis=channel_axis)


def save(t: Tensor, path) -> None:
    with open(path, "wb") as f:
        f.write(write_container(t))


def load(path) -> Tensor:
    with open(path, "rb") as f:
        return read_container(f.read())
