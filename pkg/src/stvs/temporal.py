"""The 3-frame temporal module.

A TemporalBlock holds per-frame feature maps for 3 consecutive frames. The
module runs sequential 3-frame temporal convolutions whose out-of-window
neighbors come from a cyclic padding scheme, adds a per-frame 2D residual
correction after each temporal convolution to recover spatial detail, and
interleaves a fixed channel permutation (the temporal shuffle) between
convolutions to push the temporal kernels toward cross-frame mixing.

Cyclic padding is realized the fast way: the 3-frame sequence is repeated
into a virtual 9-frame sequence and each window is a 3-wide slide over it.
The repeat costs nothing here because the expanded sequence aliases the
original frames; no feature data is copied or reorganized. The slow
explicit-reorganization baseline lives in stvs.bench for cross-checking
and timing.

The temporal shuffle concatenates the 3 frames' channels into 3*C slots,
splits them sequentially into C groups of 3, transposes groups against
group-members (reshape [3C] -> [C, 3] -> transpose -> [3, C] -> flatten),
and splits back into 3 frames. Slot contents move intact; nothing is mixed
within a spatial map. The permutation sends input slot 3j + i to output
slot i*C + j.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import tensor, trace
from .nn_ops import Conv2dWeights, Conv3dWeights, conv2d, conv3d_window
from .tensor import ShapeError


class PaddingPolicy(Enum):
    """How out-of-window frames are supplied to the temporal convolutions.

    EQ6_LITERAL: first conv pads cyclically (frame 3 before frame 1, frame 1
    after frame 3), the second conv replicates its edge frames, and later
    convs pad cyclically again. CYCLIC_ALL pads every conv cyclically.
    ZERO_PAD supplies zero frames (the conventional baseline).
    """

    EQ6_LITERAL = "eq6-literal"
    CYCLIC_ALL = "cyclic-all"
    ZERO_PAD = "zero-pad"


class TemporalBlock:
    """Per-frame features for 3 frames, stored as one [3, C, H, W] array."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = tensor.as_tensor(data)
        if data.ndim != 4 or data.shape[0] != 3:
            raise ShapeError(f"temporal block must be [3, C, H, W], got {data.shape}")
        self.data = data

    @classmethod
    def from_frames(cls, frames: Sequence[np.ndarray]) -> "TemporalBlock":
        if len(frames) != 3:
            raise ShapeError(f"temporal block needs exactly 3 frames, got {len(frames)}")
        shape = frames[0].shape
        for k, f in enumerate(frames[1:], start=1):
            if f.shape != shape:
                raise ShapeError(f"frame {k} shape {f.shape} disagrees with {shape}")
        return cls(np.stack([np.asarray(f, dtype=tensor.DTYPE) for f in frames]))

    @property
    def frames(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.data[0], self.data[1], self.data[2])

    @property
    def channels_per_frame(self) -> int:
        return self.data.shape[1]

    @property
    def spatial(self) -> tuple[int, int]:
        return (self.data.shape[2], self.data.shape[3])


@dataclass(frozen=True)
class TemporalModuleWeights:
    """Per-layer temporal kernels and their 2D residual corrections."""

    conv3d: tuple[Conv3dWeights, ...]
    res2d: tuple[Conv2dWeights, ...]

    def __post_init__(self):
        if len(self.conv3d) != len(self.res2d):
            raise ShapeError("need one residual conv per temporal conv")
        if len(self.conv3d) == 0:
            raise ShapeError("temporal module needs at least one layer")
        for k, (w3, w2) in enumerate(zip(self.conv3d, self.res2d), start=1):
            if w3.out_channels != w3.in_channels:
                raise ShapeError(f"temporal conv {k} must preserve channels")
            if w2.out_channels != w3.out_channels or w2.in_channels != w3.in_channels:
                raise ShapeError(f"residual conv {k} channel mismatch")

    @property
    def num_layers(self) -> int:
        return len(self.conv3d)


def cyclic_expand(block: TemporalBlock) -> list[np.ndarray]:
    """Repeat the 3 frames into the 9-frame sequence [T1 T2 T3 T1 T2 T3 T1 T2 T3].

    The result aliases the block's frames (a repeat of references), which is
    what makes the subsequent sliding windows free of data movement. Windows
    taken at start offsets 2, 3, 4 are the cyclically padded windows for
    output frames 1, 2, 3.
    """
    f1, f2, f3 = block.frames
    return [f1, f2, f3] * 3


def window_source_indices(policy: PaddingPolicy, layer_index: int):
    """Frame indices (None for a zero frame) feeding each output frame's window."""
    cyclic = ((2, 0, 1), (0, 1, 2), (1, 2, 0))
    if policy is PaddingPolicy.CYCLIC_ALL:
        return cyclic
    if policy is PaddingPolicy.ZERO_PAD:
        return ((None, 0, 1), (0, 1, 2), (1, 2, None))
    if policy is PaddingPolicy.EQ6_LITERAL:
        # even layers replicate their edge frames, odd layers pad cyclically
        if layer_index % 2 == 0:
            return ((0, 0, 1), (0, 1, 2), (1, 2, 2))
        return cyclic
    raise ValueError(f"unknown padding policy {policy!r}")


def _layer_windows(block: TemporalBlock, policy: PaddingPolicy, layer_index: int):
    if policy is PaddingPolicy.CYCLIC_ALL or (
            policy is PaddingPolicy.EQ6_LITERAL and layer_index % 2 == 1):
        expanded = cyclic_expand(block)
        return [expanded[i + 1: i + 4] for i in (1, 2, 3)]
    sources = window_source_indices(policy, layer_index)
    frames = block.frames
    zero = None
    windows = []
    for srcs in sources:
        window = []
        for s in srcs:
            if s is None:
                if zero is None:
                    zero = np.zeros_like(frames[0])
                window.append(zero)
            else:
                window.append(frames[s])
        windows.append(window)
    return windows


def tm_conv3d_layer(block: TemporalBlock, w: Conv3dWeights,
                    policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL,
                    layer_index: int = 1) -> TemporalBlock:
    """One temporal convolution over the 3 frames with padded windows.

    Output frame i is conv3d_window over the i-th 3-wide sliding window of
    the (virtually) expanded sequence; the padding policy decides what the
    out-of-window neighbors are.
    """
    if block.channels_per_frame != w.in_channels:
        raise ShapeError(
            f"block has {block.channels_per_frame} channels, kernel wants {w.in_channels}")
    if layer_index < 1:
        raise ShapeError(f"layer_index must be >= 1, got {layer_index}")
    trace.record("tm_conv3d")
    windows = _layer_windows(block, policy, layer_index)
    return TemporalBlock.from_frames([conv3d_window(win, w) for win in windows])


def residual_fix(st: TemporalBlock, src: TemporalBlock, w: Conv2dWeights) -> TemporalBlock:
    """Add a per-frame 2D conv of `src` onto `st` (spatial detail recovery)."""
    if st.data.shape != src.data.shape:
        raise ShapeError(f"shape mismatch: {st.data.shape} vs {src.data.shape}")
    trace.record("tm_residual")
    return TemporalBlock.from_frames(
        [tensor.add(st_f, conv2d(src_f, w)) for st_f, src_f in zip(st.frames, src.frames)])


def shuffle_frames_array(data: np.ndarray) -> np.ndarray:
    """Shuffle permutation on a raw [3, C, H, W] array (any dtype).

    Frame-major flattening gives 3C channel slots; regrouping them as C
    groups of 3 and transposing realizes out[i*C + j] = in[3j + i].
    """
    _, c, h, w = data.shape
    return np.ascontiguousarray(data.reshape(c, 3, h, w).swapaxes(0, 1))


def shuffle_frames_array_inverse(data: np.ndarray) -> np.ndarray:
    """Inverse permutation on a raw [3, C, H, W] array: out[3j + i] = in[i*C + j]."""
    _, c, h, w = data.shape
    return np.ascontiguousarray(data.swapaxes(0, 1)).reshape(3, c, h, w)


def temporal_shuffle(block: TemporalBlock) -> TemporalBlock:
    """Fixed cross-frame channel permutation: output slot i*C + j <- input slot 3j + i."""
    trace.record("tm_shuffle")
    return TemporalBlock(shuffle_frames_array(block.data))


def temporal_shuffle_inverse(block: TemporalBlock) -> TemporalBlock:
    """Inverse permutation: output slot 3j + i <- input slot i*C + j."""
    return TemporalBlock(shuffle_frames_array_inverse(block.data))


def temporal_module_forward(block: TemporalBlock, w: TemporalModuleWeights,
                            policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL,
                            shuffle_enabled: bool = True,
                            residual_last: bool = True) -> TemporalBlock:
    """Run the full temporal module.

    Each layer applies the padded temporal convolution, adds the residual
    2D correction of its own input, and (except after the final layer)
    applies the temporal shuffle when enabled.
    """
    if block.channels_per_frame != w.conv3d[0].in_channels:
        raise ShapeError(
            f"block has {block.channels_per_frame} channels, "
            f"weights want {w.conv3d[0].in_channels}")
    x = block
    last = w.num_layers
    for k in range(1, last + 1):
        st = tm_conv3d_layer(x, w.conv3d[k - 1], policy, layer_index=k)
        if k < last or residual_last:
            st = residual_fix(st, x, w.res2d[k - 1])
        x = temporal_shuffle(st) if (shuffle_enabled and k < last) else st
    return x
