"""Naive reference oracles and microbenchmarks.

The oracles recompute operations the slow, obvious way (explicit loops and
explicit data reorganization) so the fast paths have something independent
to be checked against. The benchmarks time fast versus naive on identical
inputs, but only after asserting equivalence in the same run; a report
without a passing equivalence field would be meaningless.

Timing is median-of-trials with warmup excluded, pinned to one BLAS
thread for stability. The cyclic-padding comparison is the interesting
one: the fast path prepares every convolution window by repeating frame
references and sliding over them (no feature data moves), while the naive
baseline materializes each window with explicit copies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .nn_ops import Conv2dWeights, Conv3dWeights, conv3d_window
from .temporal import (PaddingPolicy, TemporalBlock, cyclic_expand,
                       temporal_shuffle, tm_conv3d_layer)

# Informational reference figures for the original GPU implementation of
# this scheme; reported next to measurements, never compared numerically.
REFERENCE_GPU_PADDING_SPEEDUP = 5.0
REFERENCE_GPU_FPS = 50.0


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference scaled by the larger magnitude present."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-12)
    return float(np.abs(a - b).max(initial=0.0)) / scale


# ---------------------------------------------------------------------------
# naive oracles


def naive_conv2d_loop(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                      stride: int = 1, dilation: int = 1, padding: int = 0) -> np.ndarray:
    """Brute-force conv2d in float64 with explicit loops; small shapes only."""
    o_ch, c_ch, kh, kw = kernel.shape
    _, h, w = x.shape
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (w + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    xp = np.pad(np.asarray(x, dtype=np.float64),
                ((0, 0), (padding, padding), (padding, padding)))
    kern = np.asarray(kernel, dtype=np.float64)
    out = np.zeros((o_ch, oh, ow), dtype=np.float64)
    for o in range(o_ch):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for c in range(c_ch):
                    for ki in range(kh):
                        for kj in range(kw):
                            acc += kern[o, c, ki, kj] * xp[
                                c, i * stride + ki * dilation, j * stride + kj * dilation]
                out[o, i, j] = acc + float(bias[o])
    return out


def naive_conv3d_window_loop(frames, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Brute-force conv3d_window in float64 (stride 1, same padding)."""
    o_ch, c_ch, _, kh, kw = kernel.shape
    _, h, w = frames[0].shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = [np.pad(np.asarray(f, dtype=np.float64), ((0, 0), (ph, ph), (pw, pw)))
              for f in frames]
    kern = np.asarray(kernel, dtype=np.float64)
    out = np.zeros((o_ch, h, w), dtype=np.float64)
    for o in range(o_ch):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for c in range(c_ch):
                    for t in range(3):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += kern[o, c, t, ki, kj] * padded[t][c, i + ki, j + kj]
                out[o, i, j] = acc + float(bias[o])
    return out


def naive_window_reorganize(block: TemporalBlock, policy: PaddingPolicy,
                            layer_index: int = 1) -> list[np.ndarray]:
    """Materialize the 3 padded windows by explicit copy (the slow baseline)."""
    frames = block.frames
    windows = []
    for i in range(3):
        if policy is PaddingPolicy.CYCLIC_ALL or (
                policy is PaddingPolicy.EQ6_LITERAL and layer_index % 2 == 1):
            parts = [frames[(i - 1) % 3], frames[i], frames[(i + 1) % 3]]
        elif policy is PaddingPolicy.EQ6_LITERAL:
            parts = [frames[max(i - 1, 0)], frames[i], frames[min(i + 1, 2)]]
        elif policy is PaddingPolicy.ZERO_PAD:
            zero = np.zeros_like(frames[0])
            parts = [frames[i - 1] if i >= 1 else zero,
                     frames[i],
                     frames[i + 1] if i + 1 <= 2 else zero]
        else:
            raise ValueError(f"unknown padding policy {policy!r}")
        windows.append(np.stack(parts))
    return windows


def naive_cyclic_conv3d(block: TemporalBlock, w: Conv3dWeights,
                        policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL,
                        layer_index: int = 1) -> TemporalBlock:
    """Reorganize-then-convolve baseline, semantically equal to tm_conv3d_layer."""
    windows = naive_window_reorganize(block, policy, layer_index)
    return TemporalBlock.from_frames(
        [conv3d_window((win[0], win[1], win[2]), w) for win in windows])


def naive_shuffle(block: TemporalBlock) -> TemporalBlock:
    """Slot-by-slot copy loop: out[i*C + j] = in[3j + i]."""
    c = block.channels_per_frame
    h, w = block.spatial
    slots_in = block.data.reshape(3 * c, h, w)
    slots_out = np.empty_like(slots_in)
    for i in range(3):
        for j in range(c):
            slots_out[i * c + j] = slots_in[3 * j + i]
    return TemporalBlock(slots_out.reshape(3, c, h, w))


# ---------------------------------------------------------------------------
# timing harness


@dataclass
class BenchReport:
    op: str
    shape: str
    trials: int
    fast_ns: float
    naive_ns: float
    equivalence_max_rel_err: float
    copy_ns: float | None = None
    reference_note: str = ""

    def __post_init__(self):
        if self.trials < 30:
            raise ValueError(f"need at least 30 trials, got {self.trials}")

    @property
    def speedup(self) -> float:
        return self.naive_ns / self.fast_ns if self.fast_ns > 0 else float("inf")

    def lines(self) -> list[str]:
        out = [
            f"bench {self.op} [{self.shape}] median of {self.trials} trials:",
            f"  fast path   : {self.fast_ns / 1e6:10.4f} ms",
            f"  naive path  : {self.naive_ns / 1e6:10.4f} ms",
            f"  speedup     : {self.speedup:10.2f}x",
            f"  equivalence : max rel err {self.equivalence_max_rel_err:.3e}",
        ]
        if self.copy_ns is not None:
            out.append(f"  plain copy  : {self.copy_ns / 1e6:10.4f} ms "
                       f"(fast/copy = {self.fast_ns / self.copy_ns:.2f}x)")
        if self.reference_note:
            out.append(f"  reference   : {self.reference_note}")
        return out


def _median_ns(fn, trials: int, warmup: int = 5) -> float:
    for _ in range(warmup):
        fn()
    times = np.empty(trials, dtype=np.float64)
    for k in range(trials):
        t0 = time.perf_counter_ns()
        fn()
        times[k] = time.perf_counter_ns() - t0
    return float(np.median(times))


def _random_block(rng, c: int, h: int, w: int) -> TemporalBlock:
    return TemporalBlock(rng.standard_normal((3, c, h, w)).astype(np.float32))


def bench_padding(c: int = 64, h: int = 64, w: int = 64, trials: int = 30,
                  seed: int = 0) -> BenchReport:
    """Fast cyclic window preparation vs explicit reorganization."""
    rng = np.random.default_rng(seed)
    block = _random_block(rng, c, h, w)

    def fast():
        expanded = cyclic_expand(block)
        return [expanded[i + 1: i + 4] for i in (1, 2, 3)]

    def naive():
        return naive_window_reorganize(block, PaddingPolicy.CYCLIC_ALL)

    err = max(rel_err(np.stack(fw), nw) for fw, nw in zip(fast(), naive()))
    if err > 1e-6:
        raise AssertionError(f"cyclic padding equivalence failed (rel err {err:.3e})")
    with threadpool_limits(limits=1):
        fast_ns = _median_ns(fast, trials)
        naive_ns = _median_ns(naive, trials)
    return BenchReport(
        op="cyclic-pad", shape=f"C={c} {h}x{w}", trials=trials,
        fast_ns=fast_ns, naive_ns=naive_ns, equivalence_max_rel_err=err,
        reference_note=(f"original GPU implementation reports "
                        f"{REFERENCE_GPU_PADDING_SPEEDUP:.0f}x for this scheme "
                        f"(informational, not compared)"))


def bench_shuffle(c: int = 64, h: int = 64, w: int = 64, trials: int = 30,
                  seed: int = 0) -> BenchReport:
    """Vectorized shuffle vs per-slot loop, with a plain-copy yardstick."""
    rng = np.random.default_rng(seed)
    block = _random_block(rng, c, h, w)
    fast_out = temporal_shuffle(block)
    naive_out = naive_shuffle(block)
    if not np.array_equal(fast_out.data, naive_out.data):
        raise AssertionError("shuffle equivalence failed (not bit-identical)")
    with threadpool_limits(limits=1):
        fast_ns = _median_ns(lambda: temporal_shuffle(block), trials)
        naive_ns = _median_ns(lambda: naive_shuffle(block), trials)
        copy_ns = _median_ns(lambda: block.data.copy(), trials)
    return BenchReport(
        op="shuffle", shape=f"C={c} {h}x{w}", trials=trials,
        fast_ns=fast_ns, naive_ns=naive_ns, equivalence_max_rel_err=0.0,
        copy_ns=copy_ns)


def bench_conv3d(c: int = 64, h: int = 64, w: int = 64, trials: int = 30,
                 seed: int = 0) -> BenchReport:
    """Full temporal conv layer: sliding-view windows vs reorganized copies."""
    rng = np.random.default_rng(seed)
    block = _random_block(rng, c, h, w)
    weights = Conv3dWeights(
        kernel=(rng.standard_normal((c, c, 3, 3, 3)) * 0.05).astype(np.float32),
        bias=np.zeros(c, dtype=np.float32))
    fast_out = tm_conv3d_layer(block, weights, PaddingPolicy.CYCLIC_ALL)
    naive_out = naive_cyclic_conv3d(block, weights, PaddingPolicy.CYCLIC_ALL)
    err = rel_err(fast_out.data, naive_out.data)
    if err > 1e-6:
        raise AssertionError(f"conv3d equivalence failed (rel err {err:.3e})")
    with threadpool_limits(limits=1):
        fast_ns = _median_ns(lambda: tm_conv3d_layer(block, weights, PaddingPolicy.CYCLIC_ALL),
                             trials)
        naive_ns = _median_ns(lambda: naive_cyclic_conv3d(block, weights, PaddingPolicy.CYCLIC_ALL),
                              trials)
    return BenchReport(
        op="conv3d", shape=f"C={c} {h}x{w}", trials=trials,
        fast_ns=fast_ns, naive_ns=naive_ns, equivalence_max_rel_err=err)


def bench_forward(cfg=None, trials: int = 30, seed: int = 0) -> BenchReport:
    """Whole-network forward; reports one canonical prediction per run."""
    from .network import NetworkConfig, NetworkWeights, init_weights, network_forward

    cfg = cfg or NetworkConfig.toy()
    rng = np.random.default_rng(seed)
    store = init_weights(cfg, seed)
    weights = NetworkWeights.from_store(store, cfg)
    frames = tuple(rng.random((3, cfg.input_size, cfg.input_size), dtype=np.float32)
                   for _ in range(3))
    first = network_forward(frames, weights, cfg).canonical()
    second = network_forward(frames, weights, cfg).canonical()
    err = rel_err(first, second)
    with threadpool_limits(limits=1):
        ns = _median_ns(lambda: network_forward(frames, weights, cfg), trials, warmup=2)
    return BenchReport(
        op="forward", shape=f"input={cfg.input_size} enc={list(cfg.encoder_channels)}",
        trials=trials, fast_ns=ns, naive_ns=ns, equivalence_max_rel_err=err,
        reference_note=(f"{1e9 / ns:.2f} predictions/s here; original GPU "
                        f"implementation reports {REFERENCE_GPU_FPS:.0f} FPS "
                        f"(informational, not compared)"))
