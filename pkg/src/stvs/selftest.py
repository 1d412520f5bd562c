"""Oracle-equivalence self test.

Every suite cross-checks a fast path against an independent slow oracle
(or a round-trip identity) and reports one pass/fail line. This is the
same battery the test suite runs, packaged for the command line.
"""

from __future__ import annotations

import io
import tempfile
from pathlib import Path

import numpy as np

from . import bench, media, metrics, network, temporal, tensor, train
from .nn_ops import Conv2dWeights, Conv3dWeights, conv2d, conv3d_window, resize_bilinear


def _suite_tensor_identities() -> str:
    rng = np.random.default_rng(0)
    t = tensor.as_tensor(rng.standard_normal((4, 6)))
    rt = tensor.reshape(tensor.reshape(t, (24,)), (4, 6))
    assert np.array_equal(rt, t)
    tt = tensor.transpose2(tensor.transpose2(t, 0, 1), 0, 1)
    assert np.array_equal(tt, t)
    rep = tensor.repeat_axis(t, 0, 3)
    for b in range(3):
        assert np.array_equal(tensor.slice_axis(rep, 0, b * 4, 4), t)
    return "reshape/transpose/repeat round trips exact"


def _suite_conv2d_oracle() -> str:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(6):
        c, o = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        h = int(rng.integers(3, 9))
        dil = int(rng.integers(1, 3))
        x = rng.standard_normal((c, h, h)).astype(np.float32)
        k = rng.standard_normal((o, c, 3, 3)).astype(np.float32)
        b = rng.standard_normal(o).astype(np.float32)
        pad = dil
        got = conv2d(x, Conv2dWeights(k, b, dilation=dil, padding=pad))
        want = bench.naive_conv2d_loop(x, k, b, dilation=dil, padding=pad)
        worst = max(worst, bench.rel_err(got, want))
    assert worst <= 1e-6, f"rel err {worst:.3e}"
    return f"conv2d vs loop oracle, max rel err {worst:.2e}"


def _suite_conv3d_oracle() -> str:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(4):
        c, o = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h = int(rng.integers(3, 8))
        frames = [rng.standard_normal((c, h, h)).astype(np.float32) for _ in range(3)]
        k = rng.standard_normal((o, c, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(o).astype(np.float32)
        got = conv3d_window(frames, Conv3dWeights(k, b))
        want = bench.naive_conv3d_window_loop(frames, k, b)
        worst = max(worst, bench.rel_err(got, want))
    assert worst <= 1e-6, f"rel err {worst:.3e}"
    return f"conv3d_window vs loop oracle, max rel err {worst:.2e}"


def _suite_cyclic_fast_vs_naive() -> str:
    rng = np.random.default_rng(3)
    worst = 0.0
    for policy in temporal.PaddingPolicy:
        for layer in (1, 2, 3):
            c = int(rng.integers(1, 17))
            h = int(rng.integers(4, 33))
            block = temporal.TemporalBlock(rng.standard_normal((3, c, h, h)).astype(np.float32))
            w = Conv3dWeights(rng.standard_normal((c, c, 3, 3, 3)).astype(np.float32) * 0.2,
                              rng.standard_normal(c).astype(np.float32) * 0.1)
            fast = temporal.tm_conv3d_layer(block, w, policy, layer_index=layer)
            naive = bench.naive_cyclic_conv3d(block, w, policy, layer_index=layer)
            worst = max(worst, bench.rel_err(fast.data, naive.data))
    assert worst <= 1e-6, f"rel err {worst:.3e}"
    return f"fast cyclic conv vs reorganization oracle, max rel err {worst:.2e}"


def _suite_shuffle() -> str:
    rng = np.random.default_rng(4)
    for _ in range(10):
        c = int(rng.integers(1, 65))
        h = int(rng.integers(1, 17))
        block = temporal.TemporalBlock(rng.standard_normal((3, c, h, h)).astype(np.float32))
        fast = temporal.temporal_shuffle(block)
        assert np.array_equal(fast.data, bench.naive_shuffle(block).data)
        back = temporal.temporal_shuffle_inverse(fast)
        assert np.array_equal(back.data, block.data)
    return "shuffle vs slot oracle bit-exact; inverse is bit-identity"


def _suite_cyclic_equivariance() -> str:
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        c, h = 8, 12
        block = temporal.TemporalBlock(rng.standard_normal((3, c, h, h)).astype(np.float32))
        weights = temporal.TemporalModuleWeights(
            conv3d=tuple(Conv3dWeights(
                rng.standard_normal((c, c, 3, 3, 3)).astype(np.float32) * 0.2,
                np.zeros(c, dtype=np.float32)) for _ in range(3)),
            res2d=tuple(Conv2dWeights.same(
                rng.standard_normal((c, c, 3, 3)).astype(np.float32) * 0.2,
                np.zeros(c, dtype=np.float32)) for _ in range(3)))
        out = temporal.temporal_module_forward(
            block, weights, policy=temporal.PaddingPolicy.CYCLIC_ALL, shuffle_enabled=False)
        rotated = temporal.TemporalBlock(np.roll(block.data, -1, axis=0))
        out_rot = temporal.temporal_module_forward(
            rotated, weights, policy=temporal.PaddingPolicy.CYCLIC_ALL, shuffle_enabled=False)
        worst = max(worst, bench.rel_err(np.roll(out.data, -1, axis=0), out_rot.data))
    assert worst <= 1e-6, f"rel err {worst:.3e}"
    return f"cyclic equivariance under frame rotation, max rel err {worst:.2e}"


def _suite_upsample_formula() -> str:
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 2, 2)).astype(np.float32)
    got = resize_bilinear(x, 4, 4)
    want = np.empty_like(got)
    for i in range(4):
        for j in range(4):
            si = min(max((i + 0.5) * 0.5 - 0.5, 0.0), 1.0)
            sj = min(max((j + 0.5) * 0.5 - 0.5, 0.0), 1.0)
            i0, j0 = int(np.floor(si)), int(np.floor(sj))
            i1, j1 = min(i0 + 1, 1), min(j0 + 1, 1)
            fi, fj = si - i0, sj - j0
            top = x[:, i0, j0] + (x[:, i0, j1] - x[:, i0, j0]) * fj
            bot = x[:, i1, j0] + (x[:, i1, j1] - x[:, i1, j0]) * fj
            want[:, i, j] = top + (bot - top) * fi
    assert bench.rel_err(got, want) <= 1e-6
    return "bilinear upsample matches per-pixel formula"


def _suite_metrics() -> str:
    rng = np.random.default_rng(7)
    gt = (rng.random((8, 8)) > 0.6).astype(np.float64)
    if gt.sum() in (0, gt.size):
        gt[3, 3] = 1.0
        gt[0, 0] = 0.0
    fm = metrics.f_max(gt, gt)
    sm = metrics.s_measure(gt, gt)
    m = metrics.mae(gt, gt)
    assert abs(fm - 1.0) <= 1e-7 and abs(sm - 1.0) <= 1e-6 and m == 0.0
    assert metrics.f_max(rng.random((4, 4)), np.zeros((4, 4))) == 0.0
    assert metrics.s_measure(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    assert metrics.s_measure(np.ones((4, 4)), np.zeros((4, 4))) == 0.0
    return "perfect prediction scores (1.0, 1.0, 0.0); empty-mask conventions hold"


def _suite_gradcheck() -> str:
    for op in ("conv2d", "conv3d_window", "residual_add", "bce"):
        report = train.fd_gradcheck(op, seed=0)
        assert report.passed, str(report)
    report = train.fd_gradcheck("shuffle", seed=0)
    assert report.passed and report.max_abs_err == 0.0, str(report)
    return "conv2d/conv3d/residual/bce pass FD; shuffle gradient exact"


def _suite_persistence() -> str:
    cfg = network.NetworkConfig.toy()
    store = network.init_weights(cfg, seed=11)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "weights.stvs"
        network.save_weights(store, path)
        loaded = network.load_weights(path)
        assert store.names() == loaded.names()
        for name in store.names():
            assert np.array_equal(store[name], loaded[name])
        corrupted = Path(tmp) / "bad.stvs"
        corrupted.write_bytes(b"NOPE" + path.read_bytes()[4:])
        try:
            network.load_weights(corrupted)
        except network.FormatError:
            pass
        else:
            raise AssertionError("corrupted magic was accepted")
    return "weight store round trip bit-exact; corruption rejected"


def _suite_image_roundtrip() -> str:
    rng = np.random.default_rng(8)
    q = np.round(rng.random((1, 6, 5)) * 255.0) / 255.0
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "map.pgm"
        media.write_gray(path, q.astype(np.float32))
        back = media.read_image(path)
    assert np.array_equal(back, q.astype(np.float32))
    return "8-bit grayscale round trip lossless"


SUITES = (
    ("tensor-identities", _suite_tensor_identities),
    ("conv2d-oracle", _suite_conv2d_oracle),
    ("conv3d-oracle", _suite_conv3d_oracle),
    ("cyclic-fast-vs-naive", _suite_cyclic_fast_vs_naive),
    ("shuffle-oracle", _suite_shuffle),
    ("cyclic-equivariance", _suite_cyclic_equivariance),
    ("upsample-formula", _suite_upsample_formula),
    ("metric-fixtures", _suite_metrics),
    ("gradient-checks", _suite_gradcheck),
    ("weight-persistence", _suite_persistence),
    ("image-roundtrip", _suite_image_roundtrip),
)


def run_selftest(out: io.TextIOBase | None = None) -> bool:
    """Run every suite; print one line each; True when all pass."""
    import sys

    out = out or sys.stdout
    all_ok = True
    for name, fn in SUITES:
        try:
            detail = fn()
            print(f"PASS {name}: {detail}", file=out)
        except Exception as exc:  # noqa: BLE001 - report and keep going
            all_ok = False
            print(f"FAIL {name}: {exc}", file=out)
    return all_ok
