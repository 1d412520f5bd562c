import numpy as np
import pytest

from stvs.attention import BRANCH_DILATIONS, AttentionWeights, attention_forward, attention_inject
from stvs.bench import naive_conv2d_loop, rel_err
from stvs.nn_ops import Conv2dWeights, upsample_bilinear
from stvs.tensor import ShapeError


def _weights(rng, in_ch=3, branch_ch=2, scale=1.0):
    branches = tuple(
        Conv2dWeights.same((rng.standard_normal((branch_ch, in_ch, 3, 3)) * scale).astype(np.float32),
                           (rng.standard_normal(branch_ch) * scale).astype(np.float32),
                           dilation=d)
        for d in BRANCH_DILATIONS)
    fuse = Conv2dWeights((rng.standard_normal((branch_ch, 4 * branch_ch, 1, 1)) * scale).astype(np.float32),
                         (rng.standard_normal(branch_ch) * scale).astype(np.float32))
    return AttentionWeights(branch_convs=branches, fuse_conv=fuse)


def test_zero_input_gives_bias_constant_map():
    rng = np.random.default_rng(30)
    w = _weights(rng)
    out = attention_forward(np.zeros((3, 8, 8), dtype=np.float32), w)
    # zero input leaves only biases, so every channel is a constant map
    for ch in range(out.shape[0]):
        assert np.all(out[ch] == out[ch, 0, 0])
    assert np.all(np.isfinite(out))


def test_zero_branch_kernels_fuse_identity_yields_fused_biases():
    branch_ch = 2
    branches = tuple(
        Conv2dWeights.same(np.zeros((branch_ch, 3, 3, 3), np.float32),
                           np.array([0.5 * (b + 1), -1.0], np.float32), dilation=d)
        for b, d in enumerate(BRANCH_DILATIONS))
    # fuse passes branch 0's channels straight through
    fuse_k = np.zeros((branch_ch, 4 * branch_ch, 1, 1), dtype=np.float32)
    fuse_k[0, 0] = 1.0
    fuse_k[1, 1] = 1.0
    w = AttentionWeights(branch_convs=branches,
                         fuse_conv=Conv2dWeights(fuse_k, np.zeros(branch_ch, np.float32)))
    rng = np.random.default_rng(31)
    out = attention_forward(rng.standard_normal((3, 6, 6)).astype(np.float32), w)
    assert np.allclose(out[0], 0.5)   # relu(0.5)
    assert np.allclose(out[1], 0.0)   # relu(-1.0)


def test_forward_matches_composed_conv_oracle():
    rng = np.random.default_rng(32)
    w = _weights(rng, in_ch=2, branch_ch=2, scale=0.4)
    x = rng.standard_normal((2, 9, 9)).astype(np.float32)
    got = attention_forward(x, w)
    branch_outs = [
        naive_conv2d_loop(x, bw.kernel, bw.bias, dilation=bw.dilation, padding=bw.padding)
        for bw in w.branch_convs]
    stackd = np.concatenate(branch_outs, axis=0)
    fused = naive_conv2d_loop(stackd.astype(np.float32), w.fuse_conv.kernel, w.fuse_conv.bias)
    want = np.maximum(fused, 0.0)
    assert rel_err(got, want) <= 1e-5


def test_spatial_size_preserved_for_all_dilations():
    rng = np.random.default_rng(33)
    w = _weights(rng, in_ch=2, branch_ch=1)
    for size in (13, 16, 20):
        out = attention_forward(rng.standard_normal((2, size, size)).astype(np.float32), w)
        assert out.shape[1:] == (size, size)


def test_channel_mismatch():
    rng = np.random.default_rng(34)
    w = _weights(rng, in_ch=3)
    with pytest.raises(ShapeError):
        attention_forward(np.zeros((5, 8, 8), dtype=np.float32), w)


def test_inject_constant_attention():
    rng = np.random.default_rng(35)
    feat = rng.standard_normal((3, 8, 8)).astype(np.float32)
    a = np.full((2, 4, 4), 0.7, dtype=np.float32)
    out = attention_inject(feat, a)
    assert out.shape == (5, 8, 8)
    assert np.array_equal(out[:3], feat)  # original channels bit-exact
    assert np.all(out[3:] == np.float32(0.7))


def test_inject_same_size_is_pure_concat():
    rng = np.random.default_rng(36)
    feat = rng.standard_normal((2, 6, 6)).astype(np.float32)
    a = rng.standard_normal((1, 6, 6)).astype(np.float32)
    out = attention_inject(feat, a)
    assert np.array_equal(out[:2], feat)
    assert np.array_equal(out[2:], a)


def test_inject_matches_upsample_concat_oracle():
    rng = np.random.default_rng(37)
    feat = rng.standard_normal((2, 16, 16)).astype(np.float32)
    a = rng.standard_normal((3, 8, 8)).astype(np.float32)
    out = attention_inject(feat, a)
    want = np.concatenate([feat, upsample_bilinear(a, 16, 16)], axis=0)
    assert np.array_equal(out, want)


def test_inject_rejects_oversized_attention():
    feat = np.zeros((2, 4, 4), dtype=np.float32)
    a = np.zeros((1, 8, 8), dtype=np.float32)
    with pytest.raises(ShapeError):
        attention_inject(feat, a)


def test_weights_validation():
    rng = np.random.default_rng(38)
    good = _weights(rng)
    bad_branches = tuple(
        Conv2dWeights.same(b.kernel, b.bias, dilation=1) for b in good.branch_convs)
    with pytest.raises(ShapeError):
        AttentionWeights(branch_convs=bad_branches, fuse_conv=good.fuse_conv)
