"""Dense float32 tensor primitives.

Tensors are plain numpy ndarrays: row-major (C order), float32, rank >= 1,
every axis size >= 1. All operations here validate their inputs, never
mutate them, and return materialized row-major results, so downstream
oracle comparisons stay bit-exact. Treat every array handed to or returned
from this package as immutable.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Tensor shapes violate an operation's contract."""


class AxisError(ValueError):
    """Axis argument is out of range or malformed."""


def as_tensor(data, dims: Sequence[int] | None = None) -> np.ndarray:
    """Coerce `data` to a contiguous float32 tensor, optionally reshaped."""
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if dims is not None:
        arr = reshape(np.ascontiguousarray(arr), dims)
    _check_dims(arr.shape)
    return np.ascontiguousarray(arr)


def _check_dims(dims: Sequence[int]) -> None:
    if len(dims) < 1:
        raise ShapeError("tensor rank must be >= 1")
    if any(int(d) < 1 for d in dims):
        raise ShapeError(f"every axis size must be >= 1, got {tuple(dims)}")


def _check_axis(t: np.ndarray, axis: int) -> int:
    if not -t.ndim <= axis < t.ndim:
        raise AxisError(f"axis {axis} out of range for rank-{t.ndim} tensor")
    return axis % t.ndim


def reshape(t: np.ndarray, new_dims: Sequence[int]) -> np.ndarray:
    """Reinterpret the flat row-major data under new axis sizes."""
    new_dims = tuple(int(d) for d in new_dims)
    _check_dims(new_dims)
    n = int(np.prod(new_dims))
    if n != t.size:
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} values) to {new_dims} ({n} values)")
    return np.ascontiguousarray(t).reshape(new_dims)


def transpose2(t: np.ndarray, axis_a: int, axis_b: int) -> np.ndarray:
    """Swap two axes and materialize the result row-major."""
    a = _check_axis(t, axis_a)
    b = _check_axis(t, axis_b)
    if a == b:
        raise AxisError(f"transpose axes must be distinct, got {axis_a} and {axis_b}")
    return np.ascontiguousarray(np.swapaxes(t, a, b))


def repeat_axis(t: np.ndarray, axis: int, times: int) -> np.ndarray:
    """Tile the whole tensor `times` times along `axis` (block repeat)."""
    axis = _check_axis(t, axis)
    if times < 1:
        raise ShapeError(f"times must be >= 1, got {times}")
    if times == 1:
        return np.ascontiguousarray(t)
    return np.ascontiguousarray(np.concatenate([t] * times, axis=axis))


def concat(parts: Sequence[np.ndarray], axis: int) -> np.ndarray:
    if not parts:
        raise ShapeError("concat needs at least one part")
    axis = _check_axis(parts[0], axis)
    ref = parts[0].shape
    for k, p in enumerate(parts[1:], start=1):
        if p.ndim != len(ref):
            raise ShapeError(f"part {k} has rank {p.ndim}, expected {len(ref)}")
        for ax, (da, db) in enumerate(zip(ref, p.shape)):
            if ax != axis and da != db:
                raise ShapeError(f"part {k} disagrees on axis {ax}: {db} != {da}")
    return np.ascontiguousarray(np.concatenate(parts, axis=axis))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def relu(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, t.dtype.type(0))


def sigmoid(t: np.ndarray) -> np.ndarray:
    # Two-branch form avoids exp overflow for large negative inputs.
    out = np.empty_like(t)
    pos = t >= 0
    np.divide(1.0, 1.0 + np.exp(-t, where=pos, out=np.zeros_like(t)), out=out, where=pos)
    ez = np.exp(t, where=~pos, out=np.zeros_like(t))
    np.divide(ez, 1.0 + ez, out=out, where=~pos)
    return out


def slice_axis(t: np.ndarray, axis: int, start: int, length: int) -> np.ndarray:
    axis = _check_axis(t, axis)
    if length < 1:
        raise ShapeError(f"slice length must be >= 1, got {length}")
    if start < 0 or start + length > t.shape[axis]:
        raise ShapeError(
            f"slice [{start}, {start + length}) out of range for axis {axis} of size {t.shape[axis]}"
        )
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, start + length)
    return np.ascontiguousarray(t[tuple(index)])
