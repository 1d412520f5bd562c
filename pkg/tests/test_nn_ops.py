import numpy as np
import pytest

from stvs.bench import naive_conv2d_loop, naive_conv3d_window_loop, rel_err
from stvs.nn_ops import (Conv2dWeights, Conv3dWeights, conv2d, conv3d_window,
                         maxpool2, resize_bilinear, upsample_bilinear,
                         upsample_nearest)
from stvs.tensor import ShapeError


def _w2(kernel, bias, **kw):
    return Conv2dWeights(np.asarray(kernel, np.float32), np.asarray(bias, np.float32), **kw)


class TestConv2d:
    def test_identity_kernel(self):
        x = np.arange(9, dtype=np.float32).reshape(1, 3, 3)
        w = _w2(np.ones((1, 1, 1, 1)), [0.0])
        assert np.array_equal(conv2d(x, w), x)

    def test_all_ones_kernel_interior(self):
        c = 2.5
        x = np.full((1, 5, 5), c, dtype=np.float32)
        w = _w2(np.ones((1, 1, 3, 3)), [0.0], padding=1)
        out = conv2d(x, w)
        assert out.shape == (1, 5, 5)
        assert np.allclose(out[0, 1:-1, 1:-1], 9 * c)

    def test_random_vs_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 5, 5)).astype(np.float32)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        got = conv2d(x, _w2(k, b, padding=1))
        want = naive_conv2d_loop(x, k, b, padding=1)
        assert rel_err(got, want) <= 1e-6

    @pytest.mark.parametrize("stride,dilation,padding", [(1, 1, 0), (2, 1, 1), (1, 2, 2), (2, 2, 0)])
    def test_stride_dilation_vs_oracle(self, stride, dilation, padding):
        rng = np.random.default_rng(stride * 7 + dilation * 3 + padding)
        x = rng.standard_normal((3, 8, 8)).astype(np.float32)
        k = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(2).astype(np.float32)
        got = conv2d(x, _w2(k, b, stride=stride, dilation=dilation, padding=padding))
        want = naive_conv2d_loop(x, k, b, stride=stride, dilation=dilation, padding=padding)
        assert got.shape == want.shape
        assert rel_err(got, want) <= 1e-6

    def test_exhaustive_small_shapes_vs_oracle(self):
        rng = np.random.default_rng(4)
        worst = 0.0
        for c in (1, 2, 4):
            for h in (3, 5, 8):
                x = rng.standard_normal((c, h, h)).astype(np.float32)
                k = rng.standard_normal((2, c, 3, 3)).astype(np.float32)
                b = rng.standard_normal(2).astype(np.float32)
                got = conv2d(x, _w2(k, b, padding=1))
                worst = max(worst, rel_err(got, naive_conv2d_loop(x, k, b, padding=1)))
        assert worst <= 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        y = rng.standard_normal((2, 6, 6)).astype(np.float32)
        w = _w2(rng.standard_normal((3, 2, 3, 3)), np.zeros(3), padding=1)
        lhs = conv2d((2.0 * x + 0.5 * y).astype(np.float32), w)
        rhs = 2.0 * conv2d(x, w) + 0.5 * conv2d(y, w)
        assert rel_err(lhs, rhs) <= 1e-5

    def test_channel_mismatch(self):
        x = np.zeros((2, 4, 4), dtype=np.float32)
        with pytest.raises(ShapeError):
            conv2d(x, _w2(np.zeros((1, 3, 3, 3)), [0.0]))

    def test_non_positive_output(self):
        x = np.zeros((1, 2, 2), dtype=np.float32)
        with pytest.raises(ShapeError):
            conv2d(x, _w2(np.zeros((1, 1, 5, 5)), [0.0]))


class TestConv3dWindow:
    def test_temporal_identity_kernel(self):
        rng = np.random.default_rng(6)
        frames = [rng.standard_normal((2, 4, 4)).astype(np.float32) for _ in range(3)]
        k = np.zeros((2, 2, 3, 3, 3), dtype=np.float32)
        for c in range(2):
            k[c, c, 1, 1, 1] = 1.0  # middle frame, center tap
        out = conv3d_window(frames, Conv3dWeights(k, np.zeros(2, np.float32)))
        assert rel_err(out, frames[1]) <= 1e-7

    def test_scalar_sum_fixture(self):
        # frames [1], [2], [3], all-ones 1x1x1-spatial temporal kernel -> 1+2+3 = 6
        frames = [np.full((1, 1, 1), v, dtype=np.float32) for v in (1.0, 2.0, 3.0)]
        k = np.ones((1, 1, 3, 1, 1), dtype=np.float32)
        out = conv3d_window(frames, Conv3dWeights(k, np.zeros(1, np.float32)))
        assert out.reshape(()) == np.float32(6.0)

    def test_random_vs_loop_oracle(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for c in (1, 2, 4):
            frames = [rng.standard_normal((c, 6, 6)).astype(np.float32) for _ in range(3)]
            k = rng.standard_normal((3, c, 3, 3, 3)).astype(np.float32)
            b = rng.standard_normal(3).astype(np.float32)
            got = conv3d_window(frames, Conv3dWeights(k, b))
            worst = max(worst, rel_err(got, naive_conv3d_window_loop(frames, k, b)))
        assert worst <= 1e-6

    def test_frame_shape_disagreement(self):
        frames = [np.zeros((1, 4, 4), dtype=np.float32)] * 2 + [np.zeros((1, 5, 4), dtype=np.float32)]
        k = np.zeros((1, 1, 3, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            conv3d_window(frames, Conv3dWeights(k, np.zeros(1, np.float32)))

    def test_linearity(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((3, 2, 5, 5)).astype(np.float32)
        b = rng.standard_normal((3, 2, 5, 5)).astype(np.float32)
        w = Conv3dWeights(rng.standard_normal((2, 2, 3, 3, 3)).astype(np.float32),
                          np.zeros(2, np.float32))
        lhs = conv3d_window(tuple((3.0 * a + 0.25 * b).astype(np.float32)), w)
        rhs = 3.0 * conv3d_window(tuple(a), w) + 0.25 * conv3d_window(tuple(b), w)
        assert rel_err(lhs, rhs) <= 1e-5


class TestPoolAndResize:
    def test_maxpool_fixture(self):
        x = np.array([[[1, 2], [3, 4]]], dtype=np.float32)
        assert maxpool2(x).reshape(()) == np.float32(4.0)

    def test_maxpool_constant(self):
        x = np.full((3, 6, 4), 1.25, dtype=np.float32)
        out = maxpool2(x)
        assert out.shape == (3, 3, 2)
        assert np.all(out == np.float32(1.25))

    def test_maxpool_odd_size_rejected(self):
        with pytest.raises(ShapeError):
            maxpool2(np.zeros((1, 3, 3), dtype=np.float32))

    def test_upsample_preserves_constants_exactly(self):
        x = np.full((2, 3, 3), 0.73, dtype=np.float32)
        out = upsample_bilinear(x, 7, 9)
        assert out.shape == (2, 7, 9)
        assert np.all(out == np.float32(0.73))

    def test_upsample_single_pixel(self):
        x = np.full((1, 1, 1), 5.0, dtype=np.float32)
        out = upsample_bilinear(x, 4, 4)
        assert np.all(out == np.float32(5.0))

    def test_upsample_2x2_to_4x4_formula_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((1, 2, 2)).astype(np.float32)
        got = upsample_bilinear(x, 4, 4)
        want = np.empty((1, 4, 4), dtype=np.float64)
        for i in range(4):
            for j in range(4):
                si = min(max((i + 0.5) * 2 / 4 - 0.5, 0.0), 1.0)
                sj = min(max((j + 0.5) * 2 / 4 - 0.5, 0.0), 1.0)
                i0, j0 = int(np.floor(si)), int(np.floor(sj))
                i1, j1 = min(i0 + 1, 1), min(j0 + 1, 1)
                fi, fj = si - i0, sj - j0
                top = x[0, i0, j0] + (x[0, i0, j1] - x[0, i0, j0]) * fj
                bot = x[0, i1, j0] + (x[0, i1, j1] - x[0, i1, j0]) * fj
                want[0, i, j] = top + (bot - top) * fi
        assert rel_err(got, want) <= 1e-6

    def test_upsample_bounds(self):
        rng = np.random.default_rng(10)
        x = rng.random((2, 5, 5), dtype=np.float32)
        out = upsample_bilinear(x, 13, 11)
        assert out.min() >= x.min() - 1e-6
        assert out.max() <= x.max() + 1e-6

    def test_upsample_rejects_downscale(self):
        with pytest.raises(ShapeError):
            upsample_bilinear(np.zeros((1, 8, 8), dtype=np.float32), 4, 8)

    def test_downscale_via_resize(self):
        x = np.full((1, 8, 8), 0.5, dtype=np.float32)
        out = resize_bilinear(x, 4, 4)
        assert out.shape == (1, 4, 4)
        assert np.all(out == np.float32(0.5))

    def test_nearest_mode(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = upsample_nearest(x, 4, 4)
        assert out.shape == (1, 4, 4)
        assert set(np.unique(out)) == {1.0, 2.0, 3.0, 4.0}


def test_conv_weights_validation():
    with pytest.raises(ShapeError):
        Conv2dWeights(np.zeros((1, 1, 2, 2), np.float32), np.zeros(1, np.float32))
    with pytest.raises(ShapeError):
        Conv3dWeights(np.zeros((1, 1, 2, 3, 3), np.float32), np.zeros(1, np.float32))
    with pytest.raises(ShapeError):
        Conv2dWeights(np.zeros((2, 1, 3, 3), np.float32), np.zeros(1, np.float32))
