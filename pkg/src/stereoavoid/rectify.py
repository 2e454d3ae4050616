"""
Rectification by precomputed integer lookup maps.

Each output pixel ``p`` of the rectified image takes the value of the source
pixel ``(mx[p], my[p])``. Two implementations are provided: a random-access
gather and a forward-only row stream that keeps a bounded line buffer.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .imgio import DecodeError, GrayImage


class BufferDepthError(IndexError):
    """A map entry reaches further than the streaming line buffer allows."""

    def __init__(self, x: int, y: int, src_y: int, depth: int):
        super().__init__(
            f"pixel ({x},{y}) reads source row {src_y}, outside the "
            f"+/-{depth} row window of the line buffer"
        )
        self.x, self.y, self.src_y, self.depth = x, y, src_y, depth


@dataclass(frozen=True)
class StereoCalibration:
    """Rectified stereo rig: baseline in metres, focal length and principal point in pixels."""

    baseline_m: float
    focal_px: float
    cx: float
    cy: float
    d_max: int

    def __post_init__(self):
        if not self.baseline_m > 0:
            raise ValueError("baseline_m must be positive")
        if not self.focal_px > 0:
            raise ValueError("focal_px must be positive")
        if not 0 < self.d_max <= 256:
            raise ValueError("d_max must be in (0, 256]")

    def depth(self, disparity):
        return self.focal_px * self.baseline_m / np.asarray(disparity, dtype=np.float64)

    def disparity(self, depth):
        return self.focal_px * self.baseline_m / np.asarray(depth, dtype=np.float64)


@dataclass(frozen=True)
class RectificationMaps:
    """Integer source coordinates ``mx[y, x]`` and ``my[y, x]`` for every output pixel."""

    mx: np.ndarray
    my: np.ndarray

    def __post_init__(self):
        mx = np.asarray(self.mx)
        my = np.asarray(self.my)
        if mx.shape != my.shape or mx.ndim != 2:
            raise ValueError(f"map shapes differ or are not 2-D: {mx.shape} vs {my.shape}")
        if not (np.issubdtype(mx.dtype, np.integer) and np.issubdtype(my.dtype, np.integer)):
            raise TypeError("rectification maps must be integer-valued")
        if mx.size and (mx.min() < 0 or my.min() < 0):
            raise ValueError("rectification maps must be non-negative")
        object.__setattr__(self, "mx", mx.astype(np.int64))
        object.__setattr__(self, "my", my.astype(np.int64))

    @property
    def shape(self):
        return self.mx.shape

    @classmethod
    def identity(cls, width: int, height: int) -> "RectificationMaps":
        ys, xs = np.mgrid[0:height, 0:width]
        return cls(xs, ys)

    def row_displacement(self) -> int:
        """Largest vertical offset ``|my - y|``; the line buffer depth the maps need."""
        ys = np.arange(self.shape[0])[:, None]
        return int(np.abs(self.my - ys).max()) if self.my.size else 0


def _check_bounds(img: GrayImage, maps: RectificationMaps):
    if maps.shape != img.shape:
        raise ValueError(f"maps {maps.shape} do not match image {img.shape}")
    bad = (maps.mx >= img.width) | (maps.my >= img.height)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise IndexError(f"map entry at ({x},{y}) points outside the {img.width}x{img.height} source")


def apply_rectification(img: GrayImage, maps: RectificationMaps) -> GrayImage:
    """Nearest-neighbour gather ``out[p] = img[my[p], mx[p]]``."""
    _check_bounds(img, maps)
    return GrayImage(img.data[maps.my, maps.mx])


def iter_rows(img: GrayImage) -> Iterator[np.ndarray]:
    for row in img.data:
        yield row


def apply_rectification_streaming(
    rows: Iterable[np.ndarray],
    maps: RectificationMaps,
    depth: Optional[int] = None,
) -> Iterator[np.ndarray]:
    """
    Rectify a forward-only stream of source rows.

    Output row ``y`` is emitted as soon as source row ``y + depth`` has been
    read. At most ``2 * depth + 1`` source rows are buffered.

    Args:
        rows: source image rows, top to bottom.
        maps: rectification maps; the output has the same size.
        depth: line-buffer half-depth. Defaults to the maps' largest vertical
            displacement.

    Yields:
        Rectified rows, top to bottom.

    Raises:
        BufferDepthError: some ``my[y, x]`` lies outside ``[y - depth, y + depth]``.
    """
    H, W = maps.shape
    if depth is None:
        depth = maps.row_displacement()
    if depth < 0:
        raise ValueError("buffer depth must be non-negative")
    it = iter(rows)
    buf: deque[np.ndarray] = deque(maxlen=2 * depth + 1)
    first = 0  # source row index of buf[0]
    read = 0
    for y in range(H):
        need_hi = min(y + depth, H - 1)
        while read <= need_hi:
            try:
                row = np.asarray(next(it))
            except StopIteration:
                raise ValueError(f"row stream ended after {read} rows, expected {H}") from None
            if row.shape != (W,):
                raise ValueError(f"source row {read} has shape {row.shape}, expected ({W},)")
            if len(buf) == buf.maxlen:
                first += 1
            buf.append(row)
            read += 1
        src_y = maps.my[y]
        src_x = maps.mx[y]
        lo = max(y - depth, 0)
        bad = (src_y < lo) | (src_y > need_hi)
        if bad.any():
            x = int(np.flatnonzero(bad)[0])
            raise BufferDepthError(x, y, int(src_y[x]), depth)
        if (src_x >= W).any():
            x = int(np.flatnonzero(src_x >= W)[0])
            raise IndexError(f"map entry at ({x},{y}) points outside the source width {W}")
        window = np.stack(buf)
        yield window[src_y - first, src_x]


def rectify_streaming(img: GrayImage, maps: RectificationMaps, depth: Optional[int] = None) -> GrayImage:
    """Convenience wrapper: stream ``img`` row by row and collect the result."""
    if maps.shape != img.shape:
        raise ValueError(f"maps {maps.shape} do not match image {img.shape}")
    return GrayImage(np.stack(list(apply_rectification_streaming(iter_rows(img), maps, depth))))


# --- .rmap sidecar --------------------------------------------------------
# header: width, height as little-endian uint32; then mx and my planes,
# each width*height little-endian uint16 in row-major order.

def save_rmap(maps: RectificationMaps, path) -> None:
    H, W = maps.shape
    if maps.mx.max(initial=0) > 0xFFFF or maps.my.max(initial=0) > 0xFFFF:
        raise ValueError("map coordinates exceed the 16-bit range of the .rmap format")
    with open(path, "wb") as f:
        f.write(struct.pack("<II", W, H))
        f.write(maps.mx.astype("<u2").tobytes())
        f.write(maps.my.astype("<u2").tobytes())


def load_rmap(path) -> RectificationMaps:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise DecodeError(f"{path}: truncated .rmap header")
    W, H = struct.unpack_from("<II", raw, 0)
    n = W * H
    if len(raw) != 8 + 4 * n:
        raise DecodeError(f"{path}: expected {8 + 4 * n} bytes for a {W}x{H} map, got {len(raw)}")
    planes = np.frombuffer(raw, dtype="<u2", offset=8).reshape(2, H, W)
    return RectificationMaps(planes[0].astype(np.int64), planes[1].astype(np.int64))
