"""Dense tensor values and the scalar numerics the rest of the toolkit builds on.

Storage precision is 32-bit; every reduction (dot products, norms, sums)
accumulates in 64-bit. All values are immutable after construction and all
functions here are pure, so concurrent use needs no locking.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateRanking,
    DegenerateVector,
    DimensionMismatch,
    EmptyInput,
    InvalidValue,
)

__all__ = ["Tensor", "vec_angle", "kendall_tau", "mean_stack"]


class Tensor:
    """An immutable dense tensor: float32 values in row-major order plus an optional name.

    Non-finite values are rejected at construction; NaN/Inf never propagate
    silently into angles or rankings.
    """

    __slots__ = ("array", "name")

    def __init__(self, data, name: str | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise InvalidValue(
                f"tensor {name or '<unnamed>'} contains non-finite values"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "name", name)

    def __setattr__(self, key, value):
        raise AttributeError("Tensor is immutable")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def size(self) -> int:
        return int(self.array.size)

    def tobytes(self) -> bytes:
        """Raw little-endian float32 bytes in row-major order."""
        return self.array.astype("<f4", copy=False).tobytes()

    def bitwise_equal(self, other: "Tensor") -> bool:
        return self.shape == other.shape and self.tobytes() == other.tobytes()

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.shape})"


def _as_flat_f64(x, label: str) -> np.ndarray:
    if isinstance(x, Tensor):
        x = x.array
    arr = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{label} contains non-finite values")
    return arr


def vec_angle(u, v) -> float:
    """Angle in radians, in [0, pi], between two flat vectors.

    Computed as arccos of the cosine similarity with 64-bit accumulation of
    the dot product and norms; the cosine is clamped to [-1, 1] so rounding
    can never produce NaN. Bitwise-identical and bitwise-negated inputs
    short-circuit to exactly 0.0 and pi.
    """
    a = _as_flat_f64(u, "u")
    b = _as_flat_f64(v, "v")
    if a.size != b.size:
        raise DimensionMismatch(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DegenerateVector("empty vectors have no direction")
    naa = float(np.dot(a, a))
    nbb = float(np.dot(b, b))
    if naa == 0.0 or nbb == 0.0:
        raise DegenerateVector("zero-norm vector has no direction")
    if np.array_equal(a, b):
        return 0.0
    if np.array_equal(a, -b):
        return math.pi
    cos = float(np.dot(a, b)) / math.sqrt(naa * nbb)
    cos = min(1.0, max(-1.0, cos))
    return math.acos(cos)


def kendall_tau(a, b) -> float:
    """Kendall tau-b (tie-corrected) rank correlation over all index pairs.

    Larger value means larger rank. Counts of concordant/discordant/tied
    pairs are exact integers, so results match an all-pairs oracle exactly.
    """
    x = _as_flat_f64(a, "a")
    y = _as_flat_f64(b, "b")
    if x.size != y.size:
        raise DimensionMismatch(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise DimensionMismatch("need at least 2 entries for correlation")
    iu = np.triu_indices(n, k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu].astype(np.int64)
    sy = np.sign(y[:, None] - y[None, :])[iu].astype(np.int64)
    c_minus_d = int(np.sum(sx * sy))
    n0 = n * (n - 1) // 2
    tied_x = int(np.sum(sx == 0))
    tied_y = int(np.sum(sy == 0))
    denom_x = n0 - tied_x
    denom_y = n0 - tied_y
    if denom_x == 0 or denom_y == 0:
        raise DegenerateRanking("all-tied vector: tie-corrected denominator is zero")
    return c_minus_d / math.sqrt(denom_x * denom_y)


def mean_stack(
    tensors: Sequence[Tensor], weights: Sequence[float] | None = None
) -> Tensor:
    """Elementwise weighted mean of same-shape tensors.

    Accumulates in 64-bit and rounds once to storage precision. Weights are
    normalized by their sum; ``None`` means uniform. A single input is
    reproduced exactly.
    """
    tensors = list(tensors)
    if not tensors:
        raise EmptyInput("mean_stack needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionMismatch(f"shape mismatch: {t.shape} vs {shape}")
    if weights is not None:
        weights = [float(w) for w in weights]
        if len(weights) != len(tensors):
            raise DimensionMismatch(
                f"{len(weights)} weights for {len(tensors)} tensors"
            )
        if any(not math.isfinite(w) or w < 0.0 for w in weights):
            raise InvalidValue("weights must be finite and non-negative")
        if sum(weights) <= 0.0:
            raise InvalidValue("weights must sum to a positive value")

    names = {t.name for t in tensors}
    name = names.pop() if len(names) == 1 else None
    if len(tensors) == 1:
        return Tensor(tensors[0].array, name=name)

    if weights is None:
        acc = np.zeros(shape, dtype=np.float64)
        for t in tensors:
            acc += t.array.astype(np.float64)
        out = acc / len(tensors)
    else:
        acc = np.zeros(shape, dtype=np.float64)
        for t, w in zip(tensors, weights):
            acc += w * t.array.astype(np.float64)
        out = acc / sum(weights)
    return Tensor(out.astype(np.float32), name=name)
