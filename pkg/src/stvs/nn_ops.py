"""Convolution and resampling primitives.

conv2d is cross-correlation over [C, H, W] maps via im2col plus one matmul
per row chunk; the reduction over (in_ch, kh, kw) follows the kernel's flat
layout for every output element, so results are reproducible regardless of
how the BLAS parallelizes independent outputs. conv3d_window applies a
3-frame temporal kernel by stacking the window into channels and reusing
the same machinery. Backward passes live here too, next to the layouts
they invert; they are exercised by the gradient-check suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, ShapeError, as_tensor

# im2col row-chunk budget; keeps peak memory bounded at large spatial sizes
# without changing any per-output reduction order.
_COL_BYTES_BUDGET = 64 * 1024 * 1024


@dataclass(frozen=True)
class Conv2dWeights:
    """2D kernel [out_ch, in_ch, kh, kw] with bias, dilation, stride, padding."""

    kernel: np.ndarray
    bias: np.ndarray
    dilation: int = 1
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_tensor(self.kernel))
        object.__setattr__(self, "bias", as_tensor(self.bias))
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv2d kernel must be rank 4, got {self.kernel.shape}")
        o, _, kh, kw = self.kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel spatial sizes must be odd, got {kh}x{kw}")
        if self.bias.shape != (o,):
            raise ShapeError(f"bias must have shape ({o},), got {self.bias.shape}")
        if self.dilation < 1 or self.stride < 1 or self.padding < 0:
            raise ShapeError("dilation/stride must be >= 1 and padding >= 0")

    @classmethod
    def same(cls, kernel, bias, dilation: int = 1) -> "Conv2dWeights":
        """Stride-1 weights padded so spatial size is preserved."""
        kernel = as_tensor(kernel)
        pad = dilation * (kernel.shape[-1] - 1) // 2
        if kernel.shape[-2] != kernel.shape[-1]:
            raise ShapeError("same-padding helper expects square kernels")
        return cls(kernel=kernel, bias=bias, dilation=dilation, stride=1, padding=pad)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


@dataclass(frozen=True)
class Conv3dWeights:
    """3-frame temporal kernel [out_ch, in_ch, 3, kh, kw] with bias.

    Stride is 1 and spatial padding is chosen so H and W are preserved.
    """

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_tensor(self.kernel))
        object.__setattr__(self, "bias", as_tensor(self.bias))
        if self.kernel.ndim != 5:
            raise ShapeError(f"conv3d kernel must be rank 5, got {self.kernel.shape}")
        o, _, kt, kh, kw = self.kernel.shape
        if kt != 3:
            raise ShapeError(f"temporal kernel size must be 3, got {kt}")
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel spatial sizes must be odd, got {kh}x{kw}")
        if self.bias.shape != (o,):
            raise ShapeError(f"bias must have shape ({o},), got {self.bias.shape}")

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


def _out_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, r0: int, r1: int, ow: int,
            stride: int, dilation: int) -> np.ndarray:
    """Patch matrix [C*kh*kw, (r1-r0)*ow] for output rows [r0, r1)."""
    c = xp.shape[0]
    sc, sh, sw = xp.strides
    base = xp[:, r0 * stride:, :]
    view = np.lib.stride_tricks.as_strided(
        base,
        shape=(c, kh, kw, r1 - r0, ow),
        strides=(sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )
    return view.reshape(c * kh * kw, (r1 - r0) * ow)


def _pad_spatial(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)))


def _conv2d_raw(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                stride: int, dilation: int, ph: int, pw: int) -> np.ndarray:
    o, c, kh, kw = kernel.shape
    _, h, w = x.shape
    oh = _out_size(h, kh, stride, dilation, ph)
    ow = _out_size(w, kw, stride, dilation, pw)
    if oh < 1 or ow < 1:
        raise ShapeError(f"non-positive output size {oh}x{ow} for input {h}x{w}")
    xp = _pad_spatial(x, ph, pw)
    wmat = kernel.reshape(o, c * kh * kw)
    out = np.empty((o, oh, ow), dtype=x.dtype)
    chunk = max(1, _COL_BYTES_BUDGET // max(1, c * kh * kw * ow * x.dtype.itemsize))
    for r0 in range(0, oh, chunk):
        r1 = min(oh, r0 + chunk)
        cols = _im2col(xp, kh, kw, r0, r1, ow, stride, dilation)
        out[:, r0:r1, :] = (wmat @ cols).reshape(o, r1 - r0, ow)
    out += bias[:, None, None]
    return out


def _conv2d_backward_raw(x: np.ndarray, kernel: np.ndarray, dy: np.ndarray,
                         stride: int, dilation: int, ph: int, pw: int):
    """Gradients (dx, dkernel, dbias) of _conv2d_raw for upstream dy."""
    o, c, kh, kw = kernel.shape
    _, h, w = x.shape
    _, oh, ow = dy.shape
    xp = _pad_spatial(x, ph, pw)
    cols = _im2col(xp, kh, kw, 0, oh, ow, stride, dilation)
    dy_mat = dy.reshape(o, oh * ow)
    dkernel = (dy_mat @ cols.T).reshape(kernel.shape)
    dbias = dy_mat.sum(axis=1)
    dcols = (kernel.reshape(o, c * kh * kw).T @ dy_mat).reshape(c, kh, kw, oh, ow)
    dxp = np.zeros_like(xp)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, ki * dilation: ki * dilation + oh * stride: stride,
                kj * dilation: kj * dilation + ow * stride: stride] += dcols[:, ki, kj]
    dx = dxp[:, ph: ph + h, pw: pw + w] if (ph or pw) else dxp
    return np.ascontiguousarray(dx), dkernel, dbias


def conv2d(x: np.ndarray, w: Conv2dWeights) -> np.ndarray:
    """Cross-correlate a [C, H, W] map with zero spatial padding value."""
    if x.ndim != 3:
        raise ShapeError(f"conv2d expects a [C, H, W] input, got {x.shape}")
    if x.shape[0] != w.in_channels:
        raise ShapeError(f"channel mismatch: input {x.shape[0]}, kernel {w.in_channels}")
    return _conv2d_raw(x, w.kernel, w.bias, w.stride, w.dilation, w.padding, w.padding)


def conv3d_window_raw(frames, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """conv3d_window on raw arrays (any dtype); no validation."""
    o, c, _, kh, kw = kernel.shape
    _, h, w_ = frames[0].shape
    # channel index c*3 + t matches the kernel's flattened (c, t) layout
    stacked = np.stack(frames, axis=1).reshape(c * 3, h, w_)
    return _conv2d_raw(stacked, kernel.reshape(o, c * 3, kh, kw), bias,
                       1, 1, (kh - 1) // 2, (kw - 1) // 2)


def conv3d_window(frames, w: Conv3dWeights) -> np.ndarray:
    """Apply a 3-frame temporal kernel to one window of 3 [C, H, W] frames.

    Spatial size is preserved (stride 1, same padding); the output is
    sum over t and c of kernel[:, c, t] correlated with frames[t][c], plus bias.
    """
    if len(frames) != 3:
        raise ShapeError(f"conv3d_window expects 3 frames, got {len(frames)}")
    shape = frames[0].shape
    for k, f in enumerate(frames[1:], start=1):
        if f.shape != shape:
            raise ShapeError(f"frame {k} shape {f.shape} disagrees with {shape}")
    if len(shape) != 3 or shape[0] != w.in_channels:
        raise ShapeError(f"channel mismatch: frames {shape}, kernel {w.in_channels} channels")
    return conv3d_window_raw(frames, w.kernel, w.bias)


def conv3d_window_backward(frames, kernel: np.ndarray, dy: np.ndarray):
    """Gradients (dframes, dkernel, dbias) of conv3d_window."""
    o, c, _, kh, kw = kernel.shape
    _, h, w_ = frames[0].shape
    stacked = np.stack(frames, axis=1).reshape(c * 3, h, w_)
    dstacked, dk, db = _conv2d_backward_raw(
        stacked, kernel.reshape(o, c * 3, kh, kw), dy, 1, 1, (kh - 1) // 2, (kw - 1) // 2)
    dsplit = dstacked.reshape(c, 3, h, w_)
    dframes = tuple(np.ascontiguousarray(dsplit[:, t]) for t in range(3))
    return dframes, dk.reshape(kernel.shape), db


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 non-overlapping max pooling; spatial sizes must be even."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool2 expects a [C, H, W] input, got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial sizes, got {h}x{w}")
    return np.ascontiguousarray(x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4)))


def _resize_axes(in_size: int, out_size: int):
    # source coordinate (i + 0.5) * in/out - 0.5, clamped to the valid range
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = (src - lo).astype(DTYPE)
    return lo, hi, frac


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample (align-corners-false); allows up- and downscaling."""
    if x.ndim != 3:
        raise ShapeError(f"resize expects a [C, H, W] input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {out_h}x{out_w}")
    _, h, w = x.shape
    r0, r1, fr = _resize_axes(h, out_h)
    c0, c1, fc = _resize_axes(w, out_w)
    tl = x[:, r0[:, None], c0[None, :]]
    tr = x[:, r0[:, None], c1[None, :]]
    bl = x[:, r1[:, None], c0[None, :]]
    br = x[:, r1[:, None], c1[None, :]]
    top = tl + (tr - tl) * fc[None, None, :]
    bot = bl + (br - bl) * fc[None, None, :]
    return top + (bot - top) * fr[None, :, None]


def resize_nearest(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resample on the same source-coordinate grid."""
    if x.ndim != 3:
        raise ShapeError(f"resize expects a [C, H, W] input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {out_h}x{out_w}")
    _, h, w = x.shape
    r0, r1, fr = _resize_axes(h, out_h)
    c0, c1, fc = _resize_axes(w, out_w)
    rows = np.where(fr >= 0.5, r1, r0)
    cols = np.where(fc >= 0.5, c1, c0)
    return np.ascontiguousarray(x[:, rows[:, None], cols[None, :]])


def upsample_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample; rejects downscaling requests."""
    _, h, w = x.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"upsample cannot shrink {h}x{w} to {out_h}x{out_w}")
    return resize_bilinear(x, out_h, out_w)


def upsample_nearest(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    _, h, w = x.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"upsample cannot shrink {h}x{w} to {out_h}x{out_w}")
    return resize_nearest(x, out_h, out_w)


def upsample(x: np.ndarray, out_h: int, out_w: int, mode: str = "bilinear") -> np.ndarray:
    if mode == "bilinear":
        return upsample_bilinear(x, out_h, out_w)
    if mode == "nearest":
        return upsample_nearest(x, out_h, out_w)
    raise ValueError(f"unknown upsample mode {mode!r}")
