"""Multi-scale dilated-convolution attention.

Attention maps are computed from the deepest encoder features by four
parallel 3x3 convolutions at dilations 1, 2, 4, 6 (same padding), fused by
a 1x1 convolution over the concatenated branches and rectified. The maps
are injected into a decoder stage by upsampling to the stage's resolution
and concatenating onto the feature channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor, trace
from .nn_ops import Conv2dWeights, conv2d, upsample
from .tensor import ShapeError

BRANCH_DILATIONS = (1, 2, 4, 6)


@dataclass(frozen=True)
class AttentionWeights:
    branch_convs: tuple[Conv2dWeights, Conv2dWeights, Conv2dWeights, Conv2dWeights]
    fuse_conv: Conv2dWeights

    def __post_init__(self):
        if len(self.branch_convs) != len(BRANCH_DILATIONS):
            raise ShapeError(f"expected {len(BRANCH_DILATIONS)} branches")
        out = self.branch_convs[0].out_channels
        for w, d in zip(self.branch_convs, BRANCH_DILATIONS):
            if w.dilation != d:
                raise ShapeError(f"branch dilations must be {BRANCH_DILATIONS}")
            if w.out_channels != out:
                raise ShapeError("branches must agree on output channels")
        if self.fuse_conv.in_channels != len(BRANCH_DILATIONS) * out:
            raise ShapeError("fuse conv input must cover all branch channels")


def attention_forward(f5: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """Fused multi-dilation attention over the deepest encoder features."""
    if f5.ndim != 3 or f5.shape[0] != w.branch_convs[0].in_channels:
        raise ShapeError(
            f"input {f5.shape} does not match branch input channels "
            f"{w.branch_convs[0].in_channels}")
    trace.record("attention_forward")
    branches = [conv2d(f5, bw) for bw in w.branch_convs]
    fused = conv2d(tensor.concat(branches, axis=0), w.fuse_conv)
    return tensor.relu(fused)


def attention_inject(feat: np.ndarray, a: np.ndarray, mode: str = "bilinear") -> np.ndarray:
    """Upsample attention to the feature's spatial size and concatenate channels."""
    if feat.ndim != 3 or a.ndim != 3:
        raise ShapeError("attention_inject expects [C, H, W] inputs")
    if a.shape[1] > feat.shape[1] or a.shape[2] > feat.shape[2]:
        raise ShapeError(
            f"attention {a.shape[1:]} larger than target features {feat.shape[1:]}")
    trace.record("attention_inject")
    up = upsample(a, feat.shape[1], feat.shape[2], mode=mode)
    return tensor.concat([feat, up], axis=0)
