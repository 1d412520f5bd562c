"""Network assembly: encoder, recurrent decoder, weight store, init.

The network takes 3 consecutive frames. A shared-weight encoder builds a
5-level feature pyramid per frame (two 3x3 conv+ReLU per stage, 2x2 max
pool between stages). Attention maps come from the deepest features. The
decoder runs coarse to fine; every stage fuses its encoder skip with the
recurrent features from the next-coarser stage, injects attention, runs
the temporal module over the 3 frames, and emits a per-frame sigmoid side
output. The recurrent features are the 2x-upsampled sum of the stage's
temporal output and its pre-temporal features.

Stage numbering follows resolution: stage 1 is the finest (full input
resolution, the final prediction), stage 5 the coarsest. The canonical
per-clip prediction is the middle frame of stage 1.

Weight names are dotted paths, frozen for file-format stability:

    encoder.s{k}.conv{1|2}.{kernel|bias}          k in 1..5
    attention.branch{b}.{kernel|bias}             b in 1..4
    attention.fuse.{kernel|bias}
    decoder.s{d}.inner.{kernel|bias}              d in 1..5
    decoder.s{d}.outer.{kernel|bias}
    decoder.s{d}.tm.conv3d_{n}.{kernel|bias}      n in 1..num_tm_convs
    decoder.s{d}.tm.res2d_{n}.{kernel|bias}
    decoder.s{d}.side.{kernel|bias}

The weight file is binary little-endian: magic "STVS", u32 version (1),
u32 tensor count, then per tensor: u16 name length, UTF-8 name, u8 rank,
u32 dims[rank], and rank-product float32 values.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from . import tensor, trace
from .attention import BRANCH_DILATIONS, AttentionWeights, attention_forward, attention_inject
from .nn_ops import Conv2dWeights, Conv3dWeights, conv2d, maxpool2, upsample
from .temporal import (PaddingPolicy, TemporalBlock, TemporalModuleWeights,
                       temporal_module_forward)
from .tensor import ShapeError

WEIGHT_MAGIC = b"STVS"
WEIGHT_VERSION = 1


class FormatError(ValueError):
    """Weight file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MissingWeightError(KeyError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_size: int = 256
    encoder_channels: tuple[int, int, int, int, int] = (64, 128, 256, 512, 1024)
    tm_channels: int = 64
    attention_channels: int = 64
    padding_policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL
    num_tm_convs: int = 3
    shuffle_enabled: bool = True
    attention_enabled: bool = True
    upsample_mode: str = "bilinear"
    tm_enabled: bool = True

    def __post_init__(self):
        if self.input_size % 16 != 0 or self.input_size < 16:
            raise ValueError(f"input_size must be a positive multiple of 16, got {self.input_size}")
        if len(self.encoder_channels) != 5:
            raise ValueError("encoder_channels must list exactly 5 stages")
        if any(c < 1 for c in self.encoder_channels):
            raise ValueError("encoder channel counts must be positive")
        if self.num_tm_convs not in (1, 3, 5):
            raise ValueError(f"num_tm_convs must be 1, 3 or 5, got {self.num_tm_convs}")
        if self.upsample_mode not in ("bilinear", "nearest"):
            raise ValueError(f"upsample_mode must be bilinear or nearest, got {self.upsample_mode}")
        if self.tm_channels < 1 or self.attention_channels < 1:
            raise ValueError("channel counts must be positive")
        if not isinstance(self.padding_policy, PaddingPolicy):
            object.__setattr__(self, "padding_policy", PaddingPolicy(self.padding_policy))
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))

    @classmethod
    def toy(cls, **overrides) -> "NetworkConfig":
        """Desk-scale configuration used by the test and selftest suites."""
        base = dict(input_size=64, encoder_channels=(8, 16, 32, 64, 64),
                    tm_channels=16, attention_channels=16)
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> str:
        d = {
            "input_size": self.input_size,
            "encoder_channels": list(self.encoder_channels),
            "tm_channels": self.tm_channels,
            "attention_channels": self.attention_channels,
            "padding_policy": self.padding_policy.value,
            "num_tm_convs": self.num_tm_convs,
            "shuffle_enabled": self.shuffle_enabled,
            "attention_enabled": self.attention_enabled,
            "upsample_mode": self.upsample_mode,
            "tm_enabled": self.tm_enabled,
        }
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        d = json.loads(text)
        if "encoder_channels" in d:
            d["encoder_channels"] = tuple(d["encoder_channels"])
        if "padding_policy" in d:
            d["padding_policy"] = PaddingPolicy(d["padding_policy"])
        return cls(**d)


class WeightStore:
    """Ordered map of parameter name to float32 tensor; finite values only."""

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if not name:
            raise ValueError("weight names must be non-empty")
        arr = tensor.as_tensor(value)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"weight {name!r} contains non-finite values")
        self._tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._tensors[name]
        except KeyError:
            raise MissingWeightError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()


def save_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<II", WEIGHT_VERSION, len(store)))
        for name, t in store.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(path) -> WeightStore:
    with open(path, "rb") as f:
        blob = f.read()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated while reading {what}", off)
        chunk = blob[off: off + n]
        off += n
        return chunk

    if take(4, "magic") != WEIGHT_MAGIC:
        raise FormatError(f"bad magic, expected {WEIGHT_MAGIC!r}", 0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != WEIGHT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    store = WeightStore()
    for k in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"name length of tensor {k}"))
        name_off = off
        try:
            name = take(name_len, f"name of tensor {k}").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"tensor {k} name is not valid UTF-8", name_off) from None
        if not name:
            raise FormatError(f"tensor {k} has an empty name", name_off)
        if name in store:
            raise FormatError(f"duplicate tensor name {name!r}", name_off)
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        if rank < 1:
            raise FormatError(f"tensor {name!r} has rank 0", off - 1)
        dims_off = off
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        if any(d < 1 for d in dims):
            raise FormatError(f"tensor {name!r} has a zero dimension", dims_off)
        n = math.prod(dims)
        data_off = off
        data = np.frombuffer(take(4 * n, f"data of {name!r}"), dtype="<f4")
        arr = data.reshape(dims).astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"tensor {name!r} contains non-finite values", data_off)
        store[name] = arr
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes after last tensor", off)
    return store


def _weight_specs(cfg: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Kernel/bias names and shapes in the frozen creation (and draw) order."""
    enc = cfg.encoder_channels
    tmc, attc = cfg.tm_channels, cfg.attention_channels
    specs: list[tuple[str, tuple[int, ...]]] = []

    def conv(name: str, out_ch: int, in_ch: int, *k: int) -> None:
        specs.append((f"{name}.kernel", (out_ch, in_ch, *k)))
        specs.append((f"{name}.bias", (out_ch,)))

    for k in range(1, 6):
        in_ch = 3 if k == 1 else enc[k - 2]
        conv(f"encoder.s{k}.conv1", enc[k - 1], in_ch, 3, 3)
        conv(f"encoder.s{k}.conv2", enc[k - 1], enc[k - 1], 3, 3)
    if cfg.attention_enabled:
        for b in range(1, 5):
            conv(f"attention.branch{b}", attc, enc[4], 3, 3)
        conv("attention.fuse", attc, 4 * attc, 1, 1)
    for d in range(1, 6):
        inner_in = enc[d - 1] + (tmc if d < 5 else 0)
        conv(f"decoder.s{d}.inner", tmc, inner_in, 3, 3)
        conv(f"decoder.s{d}.outer", tmc, tmc + (attc if cfg.attention_enabled else 0), 3, 3)
        if cfg.tm_enabled:
            for n in range(1, cfg.num_tm_convs + 1):
                conv(f"decoder.s{d}.tm.conv3d_{n}", tmc, tmc, 3, 3, 3)
                conv(f"decoder.s{d}.tm.res2d_{n}", tmc, tmc, 3, 3)
        conv(f"decoder.s{d}.side", 1, tmc, 1, 1)
    return specs


def init_weights(cfg: NetworkConfig, seed: int) -> WeightStore:
    """He-scaled random weights, reproducible across platforms.

    A single PCG64 stream seeded with `seed` supplies every kernel in the
    frozen spec order; biases are zero and consume no draws.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    store = WeightStore()
    for name, shape in _weight_specs(cfg):
        if name.endswith(".bias"):
            store[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = math.prod(shape[1:])
            std = math.sqrt(2.0 / fan_in)
            store[name] = (rng.standard_normal(shape) * std).astype(np.float32)
    return store


def _conv2d_from(store: WeightStore, name: str, dilation: int = 1) -> Conv2dWeights:
    return Conv2dWeights.same(store[f"{name}.kernel"], store[f"{name}.bias"], dilation=dilation)


@dataclass(frozen=True)
class DecoderStageWeights:
    inner: Conv2dWeights
    outer: Conv2dWeights
    tm: TemporalModuleWeights | None
    side: Conv2dWeights


@dataclass(frozen=True)
class NetworkWeights:
    encoder: tuple[tuple[Conv2dWeights, Conv2dWeights], ...]
    attention: AttentionWeights | None
    decoder: tuple[DecoderStageWeights, ...]  # index d-1 -> stage d

    @classmethod
    def from_store(cls, store: WeightStore, cfg: NetworkConfig) -> "NetworkWeights":
        encoder = tuple(
            (_conv2d_from(store, f"encoder.s{k}.conv1"), _conv2d_from(store, f"encoder.s{k}.conv2"))
            for k in range(1, 6))
        att = None
        if cfg.attention_enabled:
            branches = tuple(
                _conv2d_from(store, f"attention.branch{b}", dilation=d)
                for b, d in zip(range(1, 5), BRANCH_DILATIONS))
            att = AttentionWeights(branch_convs=branches,
                                   fuse_conv=_conv2d_from(store, "attention.fuse"))
        stages = []
        for d in range(1, 6):
            tm = None
            if cfg.tm_enabled:
                tm = TemporalModuleWeights(
                    conv3d=tuple(
                        Conv3dWeights(store[f"decoder.s{d}.tm.conv3d_{n}.kernel"],
                                      store[f"decoder.s{d}.tm.conv3d_{n}.bias"])
                        for n in range(1, cfg.num_tm_convs + 1)),
                    res2d=tuple(
                        _conv2d_from(store, f"decoder.s{d}.tm.res2d_{n}")
                        for n in range(1, cfg.num_tm_convs + 1)))
            stages.append(DecoderStageWeights(
                inner=_conv2d_from(store, f"decoder.s{d}.inner"),
                outer=_conv2d_from(store, f"decoder.s{d}.outer"),
                tm=tm,
                side=_conv2d_from(store, f"decoder.s{d}.side")))
        return cls(encoder=encoder, attention=att, decoder=tuple(stages))


@dataclass
class SaliencyResult:
    """Per-stage, per-frame saliency maps in [0, 1]; stage 1 is full resolution."""

    stages: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)

    def canonical(self) -> np.ndarray:
        """Middle frame of the finest stage: the per-clip prediction."""
        return self.stages[1][1]


def encoder_forward(frame: np.ndarray,
                    stages: Sequence[tuple[Conv2dWeights, Conv2dWeights]]) -> tuple:
    """5-level feature pyramid; pooling happens between stages 1-4 and 5."""
    if frame.ndim != 3 or frame.shape[0] != stages[0][0].in_channels:
        raise ShapeError(f"encoder expects [{stages[0][0].in_channels}, H, W], got {frame.shape}")
    feats = []
    x = frame
    for k, (w1, w2) in enumerate(stages):
        trace.record("encoder_stage")
        x = tensor.relu(conv2d(x, w1))
        x = tensor.relu(conv2d(x, w2))
        feats.append(x)
        if k < len(stages) - 1:
            x = maxpool2(x)
    return tuple(feats)


def decoder_stage(f_d: Sequence[np.ndarray],
                  r_prev: Sequence[np.ndarray] | None,
                  a: Sequence[np.ndarray] | None,
                  w: DecoderStageWeights,
                  cfg: NetworkConfig,
                  produce_recurrent: bool = True):
    """One decoder stage over the 3 frames.

    Returns (temporal output block, recurrent features for the next-finer
    stage or None, per-frame sigmoid side outputs). With no recurrent input
    (the coarsest stage) the skip is convolved alone.
    """
    xs = []
    for i in range(3):
        x = f_d[i] if r_prev is None else tensor.concat([f_d[i], r_prev[i]], axis=0)
        trace.record("decoder_conv_inner")
        x = tensor.relu(conv2d(x, w.inner))
        if a is not None:
            x = attention_inject(x, a[i], mode=cfg.upsample_mode)
        trace.record("decoder_conv_outer")
        x = tensor.relu(conv2d(x, w.outer))
        xs.append(x)
    pre = TemporalBlock.from_frames(xs)
    if w.tm is not None:
        st = temporal_module_forward(pre, w.tm, policy=cfg.padding_policy,
                                     shuffle_enabled=cfg.shuffle_enabled)
    else:
        st = pre
    r_out = None
    if produce_recurrent:
        h, w_ = st.spatial
        r_out = tuple(
            upsample(tensor.add(st_f, x_f), 2 * h, 2 * w_, mode=cfg.upsample_mode)
            for st_f, x_f in zip(st.frames, pre.frames))
    sides = []
    for st_f in st.frames:
        trace.record("side_head")
        sides.append(tensor.sigmoid(conv2d(st_f, w.side)))
    return st, r_out, tuple(sides)


def network_forward(clip, weights, cfg: NetworkConfig) -> SaliencyResult:
    """Full forward pass over one 3-frame clip.

    `clip` is anything with a `.frames` triple (or a plain 3-sequence) of
    [3, S, S] RGB tensors; `weights` is a WeightStore or NetworkWeights.
    """
    frames = getattr(clip, "frames", clip)
    if len(frames) != 3:
        raise ShapeError(f"expected 3 frames, got {len(frames)}")
    s = cfg.input_size
    for k, f in enumerate(frames):
        if f.shape != (3, s, s):
            raise ShapeError(f"frame {k} must be [3, {s}, {s}], got {f.shape}")
    if isinstance(weights, WeightStore):
        weights = NetworkWeights.from_store(weights, cfg)

    pyramids = [encoder_forward(f, weights.encoder) for f in frames]
    a = None
    if weights.attention is not None:
        a = tuple(attention_forward(p[4], weights.attention) for p in pyramids)

    result = SaliencyResult()
    r = None
    for d in range(5, 0, -1):
        f_d = tuple(p[d - 1] for p in pyramids)
        st, r, sides = decoder_stage(f_d, r, a, weights.decoder[d - 1], cfg,
                                     produce_recurrent=(d > 1))
        result.stages[d] = sides
    return result


def config_with(cfg: NetworkConfig, **overrides) -> NetworkConfig:
    return replace(cfg, **overrides)
