"""Dense N-dimensional float32 arrays and the kernels everything else builds on.

A Tensor is an immutable row-major float32 array. All kernels are
deterministic: identical inputs give bitwise-identical outputs run to
run. Reductions and matrix products accumulate in 64-bit and round the
result to 32-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class Shape4:
    """Batch/channel/height/width geometry of an image tensor.

    The canonical full-size image shape is c=3, h=224, w=224; toy models
    use smaller, pool-divisible sizes.
    """

    n: int
    c: int
    h: int
    w: int

    def __post_init__(self):
        for field in ("n", "c", "h", "w"):
            if getattr(self, field) < 1:
                raise ShapeError(f"Shape4.{field} must be >= 1, got {getattr(self, field)}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)


class Tensor:
    """Immutable dense float32 array; shape non-empty, every dim >= 1."""

    __slots__ = ("_a",)

    def __init__(self, values, shape=None):
        a = np.array(values, dtype=np.float32, order="C")
        if shape is not None:
            a = a.reshape(tuple(shape))
        if a.ndim == 0:
            raise ShapeError("tensor shape must be non-empty (rank >= 1)")
        if any(d < 1 for d in a.shape):
            raise ShapeError(f"every dimension must be >= 1, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "_a", a)

    @classmethod
    def _wrap(cls, a: np.ndarray) -> "Tensor":
        """Take ownership of a freshly created contiguous float32 array."""
        t = object.__new__(cls)
        a.setflags(write=False)
        object.__setattr__(t, "_a", a)
        return t

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(tuple(shape), dtype=np.float32))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor":
        return cls._wrap(np.full(tuple(shape), value, dtype=np.float32))

    @property
    def array(self) -> np.ndarray:
        """Read-only float32 ndarray view of the data."""
        return self._a

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def rank(self) -> int:
        return self._a.ndim

    @property
    def size(self) -> int:
        return self._a.size

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view (length == product of shape)."""
        return self._a.reshape(-1)

    def __getitem__(self, index) -> float:
        if not isinstance(index, tuple):
            index = (index,)
        if len(index) != self.rank:
            raise ShapeError(f"need a full {self.rank}-d index, got {len(index)} components")
        return float(self._a[index])

    def tolist(self):
        return self._a.tolist()

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)})"


def flat_offset(shape, index) -> int:
    """Row-major offset of a multi-index."""
    if len(index) != len(shape):
        raise ShapeError(f"index rank {len(index)} != shape rank {len(shape)}")
    off = 0
    for d, i in zip(shape, index):
        if not 0 <= i < d:
            raise ShapeError(f"index {tuple(index)} out of bounds for shape {tuple(shape)}")
        off = off * d + i
    return off


def multi_index(shape, offset: int) -> tuple[int, ...]:
    """Inverse of flat_offset."""
    idx = []
    for d in reversed(shape):
        idx.append(offset % d)
        offset //= d
    if offset:
        raise ShapeError(f"offset out of bounds for shape {tuple(shape)}")
    return tuple(reversed(idx))


def _mm64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """float32 matrix product with 64-bit accumulation."""
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 product [m x k]·[k x n] -> [m x n]."""
    if a.rank != 2 or b.rank != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor._wrap(_mm64(a.array, b.array))


def map_unary(t: Tensor, f) -> Tensor:
    """Apply a scalar function elementwise; result rounded to float32."""
    out = np.fromiter((f(float(x)) for x in t.flat), dtype=np.float64, count=t.size)
    return Tensor._wrap(out.astype(np.float32).reshape(t.shape))


def reduce(t: Tensor, axis: int, op: str) -> Tensor:
    """Collapse one axis with sum, max or mean.

    sum/mean accumulate left-to-right along the axis in 64-bit;
    reducing a rank-1 tensor yields shape [1].
    """
    if not 0 <= axis < t.rank:
        raise ShapeError(f"axis {axis} out of range for rank {t.rank}")
    moved = np.moveaxis(t.array, axis, 0)
    n = moved.shape[0]
    if op == "max":
        out = np.array(moved[0], dtype=np.float32)
        for i in range(1, n):
            np.maximum(out, moved[i], out=out)
    elif op in ("sum", "mean"):
        acc = moved[0].astype(np.float64)
        for i in range(1, n):
            acc = acc + moved[i]
        if op == "mean":
            acc = acc / n
        out = acc.astype(np.float32)
    else:
        raise ValueError(f"unknown reduce op {op!r}; expected sum, max or mean")
    out_shape = t.shape[:axis] + t.shape[axis + 1 :]
    if not out_shape:
        out_shape = (1,)
    return Tensor._wrap(np.ascontiguousarray(out.reshape(out_shape)))
