"""Raster frames, PPM I/O and the resampling primitives used by the rest of the pipeline.

Pixels are held as ``(height, width, 3)`` uint8 numpy arrays. Frames are
read-only once built; every operation returns a new frame.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PpmError

FRAME_NAME = "frame_{:06d}.ppm"


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect must be at least 1x1, got {self.w}x{self.h}")

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def area(self) -> int:
        return self.w * self.h


class Frame:
    """An 8-bit RGB raster. ``pixels`` has shape (height, width, 3)."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        arr.flags.writeable = False
        self.pixels = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Frame":
        # Takes ownership of a freshly computed array without another copy.
        f = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.flags.writeable = False
        f.pixels = arr
        return f

    @classmethod
    def filled(cls, width: int, height: int, rgb=(0, 0, 0)) -> "Frame":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = np.asarray(rgb, dtype=np.uint8)
        return cls._wrap(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def full_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"Frame({self.width}x{self.height})"


# --- PPM ------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PpmError("malformed header: unexpected end of header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise PpmError("malformed header: missing whitespace after maxval")
    return tokens, pos + 1


def decode_ppm(data: bytes) -> Frame:
    if data[:2] != b"P6":
        magic = data[:2].decode("latin-1", "replace")
        raise PpmError(f"unsupported magic {magic!r} (only binary P6 is accepted)")
    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PpmError(f"malformed header: non-integer field in {tokens!r}") from None
    if width < 1 or height < 1:
        raise PpmError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval} (must be 255)")
    need = width * height * 3
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise PpmError(f"truncated pixel data: expected {need} bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return Frame._wrap(arr.copy())


def encode_ppm(frame: Frame) -> bytes:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + frame.pixels.tobytes()


def load_ppm(path) -> Frame:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def save_ppm(frame: Frame, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame))


def frame_path(directory, index: int) -> Path:
    """Path of the ``index``-th frame (1-based) in a directory of frames."""
    return Path(directory) / FRAME_NAME.format(index)


def count_frames(directory) -> int:
    """Number of consecutive frame_%06d.ppm files starting at 000001."""
    n = 0
    while os.path.exists(frame_path(directory, n + 1)):
        n += 1
    return n


# --- resampling -------------------------------------------------------------

def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def downsample_box(frame: Frame, fx: int, fy: int) -> Frame:
    """Box-average by integer factors, rounding each mean half-up."""
    if fx < 1 or fy < 1:
        raise ValueError(f"factors must be >= 1, got {fx}, {fy}")
    if frame.width % fx or frame.height % fy:
        raise ValueError(
            f"{frame.width}x{frame.height} is not divisible by factors {fx}x{fy}")
    if fx == 1 and fy == 1:
        return frame
    h, w = frame.height // fy, frame.width // fx
    n = fx * fy
    sums = frame.pixels.reshape(h, fy, w, fx, 3).astype(np.int64).sum(axis=(1, 3))
    # floor(sum/n + 1/2) in integer arithmetic
    return Frame._wrap((2 * sums + n) // (2 * n))


def _bilinear_axis(n_src: int, factor: int):
    pos = (np.arange(n_src * factor) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, pos - i0


def upsample_bilinear(frame: Frame, fx: int, fy: int) -> Frame:
    """Bilinear upscale with half-pixel-centre alignment and clamped edges."""
    if fx < 1 or fy < 1:
        raise ValueError(f"factors must be >= 1, got {fx}, {fy}")
    if fx == 1 and fy == 1:
        return frame
    src = frame.pixels.astype(np.float64)
    x0, x1, wx = _bilinear_axis(frame.width, fx)
    y0, y1, wy = _bilinear_axis(frame.height, fy)
    wx = wx[None, :, None]
    rows = src[:, x0] + wx * (src[:, x1] - src[:, x0])
    wy = wy[:, None, None]
    out = rows[y0] + wy * (rows[y1] - rows[y0])
    return Frame._wrap(_round_half_up(out))


def _check_inside(rect: Rect, width: int, height: int, what: str) -> None:
    if rect.x0 < 0 or rect.y0 < 0 or rect.x1 > width or rect.y1 > height:
        raise ValueError(f"{what} {rect} out of bounds for {width}x{height} frame")


def crop(frame: Frame, r: Rect) -> Frame:
    _check_inside(r, frame.width, frame.height, "crop region")
    ys, xs = r.slices()
    return Frame._wrap(frame.pixels[ys, xs].copy())


def paste(dst: Frame, src: Frame, x0: int, y0: int) -> Frame:
    r = Rect(x0, y0, src.width, src.height)
    _check_inside(r, dst.width, dst.height, "paste region")
    out = dst.pixels.copy()
    ys, xs = r.slices()
    out[ys, xs] = src.pixels
    return Frame._wrap(out)


LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_luma(frame: Frame) -> np.ndarray:
    """Rec.601 luma as a float64 (height, width) plane, unrounded."""
    p = frame.pixels.astype(np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]
