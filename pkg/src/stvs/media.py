"""Frame and mask I/O, clip assembly, and augmentation.

Only binary PPM (P6, RGB) and PGM (P5, grayscale) with maxval 255 are
supported; they are bit-exactly specifiable and need no decoder. Values
are scaled to [0, 1] on read; writes quantize with round(v * 255).

Frame order within a directory is the lexicographic order of file stems,
so zero-padded numeric names (00001.ppm, 00002.ppm, ...) behave as
expected. Re-sampling interval k keeps every (k+1)-th frame before
grouping into overlapping 3-frame clips; a directory holding a single
image yields one clip of that image tripled.

Quantization ties round down: an all-0.5 map stores byte 127.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .nn_ops import resize_bilinear
from .tensor import ShapeError


class ImageFormatError(ValueError):
    pass


_IMAGE_SUFFIXES = (".ppm", ".pgm")


@dataclass(frozen=True)
class FrameClip:
    """3 consecutive RGB frames [3, H, W] in [0, 1] plus their provenance."""

    frames: tuple[np.ndarray, np.ndarray, np.ndarray]
    paths: tuple[str, str, str]
    indices: tuple[int, int, int]

    def __post_init__(self):
        if len(self.frames) != 3:
            raise ShapeError(f"a clip holds exactly 3 frames, got {len(self.frames)}")
        shape = self.frames[0].shape
        for k, f in enumerate(self.frames):
            if f.ndim != 3 or f.shape != shape:
                raise ShapeError(f"clip frame {k} has shape {f.shape}, expected {shape}")


def _read_header(blob: bytes, path) -> tuple[bytes, int, int, int, int]:
    if len(blob) < 2:
        raise ImageFormatError(f"{path}: file too short for a netpbm header")
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: bad magic {magic!r}, expected P5 or P6")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated header")
        try:
            fields.append(int(blob[start:pos]))
        except ValueError:
            raise ImageFormatError(
                f"{path}: non-numeric header field {blob[start:pos]!r}") from None
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ImageFormatError(f"{path}: missing whitespace after header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: non-positive image size {width}x{height}")
    return magic, width, height, maxval, pos


def read_image(path) -> np.ndarray:
    """Read a P6 file as [3, H, W] or a P5 file as [1, H, W], scaled to [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    magic, width, height, _, pos = _read_header(blob, path)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = blob[pos: pos + need]
    if len(payload) != need:
        raise ImageFormatError(
            f"{path}: truncated payload, expected {need} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1)).astype(np.float32) / 255.0


def _quantize(plane: np.ndarray) -> np.ndarray:
    # round(v * 255) with ties rounding down (0.5 stores 127)
    return np.ceil(plane.astype(np.float64) * 255.0 - 0.5).astype(np.uint8)


def write_gray(path, t: np.ndarray) -> None:
    """Write a [1, H, W] map in [0, 1] as binary PGM with round(v * 255)."""
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[0] != 1:
        raise ShapeError(f"write_gray expects [1, H, W], got shape {t.shape}")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ValueError("write_gray values must lie in [0, 1]")
    _, h, w = t.shape
    data = _quantize(t[0])
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def write_rgb(path, t: np.ndarray) -> None:
    """Write a [3, H, W] image in [0, 1] as binary PPM."""
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[0] != 3:
        raise ShapeError(f"write_rgb expects [3, H, W], got shape {t.shape}")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ValueError("write_rgb values must lie in [0, 1]")
    _, h, w = t.shape
    data = _quantize(t).transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def resize_to(t: np.ndarray, out_h: int = 256, out_w: int = 256) -> np.ndarray:
    """Bilinear resize (up or down) on the shared source-coordinate formula."""
    if t.shape[1] == out_h and t.shape[2] == out_w:
        return t
    return resize_bilinear(t, out_h, out_w)


def list_frames(frames_dir) -> list[Path]:
    root = Path(frames_dir)
    files = [p for p in root.iterdir()
             if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: p.stem)


def clip_iter(frames_dir, interval: int = 0) -> Iterator[FrameClip]:
    """Sliding 3-frame clips over the directory, re-sampled by `interval`.

    Keeps frames 0, k+1, 2(k+1), ... for interval k, then yields every
    window of 3 consecutive kept frames. A single still image is tripled
    into one clip.
    """
    if not 0 <= interval <= 6:
        raise ValueError(f"interval must be in 0..6, got {interval}")
    files = list_frames(frames_dir)
    if len(files) == 1:
        frame = read_image(files[0])
        yield FrameClip(frames=(frame, frame, frame),
                        paths=(str(files[0]),) * 3, indices=(0, 0, 0))
        return
    kept = list(range(0, len(files), interval + 1))
    if len(kept) < 3:
        raise ValueError(
            f"need at least 3 frames after interval-{interval} re-sampling, "
            f"found {len(kept)} of {len(files)}")
    for a, b, c in zip(kept, kept[1:], kept[2:]):
        frames = tuple(read_image(files[i]) for i in (a, b, c))
        yield FrameClip(frames=frames,
                        paths=tuple(str(files[i]) for i in (a, b, c)),
                        indices=(a, b, c))


def hflip_clip(clip: FrameClip) -> FrameClip:
    """Mirror every frame about the vertical axis."""
    flipped = tuple(np.ascontiguousarray(f[:, :, ::-1]) for f in clip.frames)
    return FrameClip(frames=flipped, paths=clip.paths, indices=clip.indices)


def hflip_mask(mask: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(mask[:, :, ::-1])


def clip_resized(clip: FrameClip, size: int) -> FrameClip:
    frames = tuple(resize_to(f, size, size) for f in clip.frames)
    return FrameClip(frames=frames, paths=clip.paths, indices=clip.indices)
