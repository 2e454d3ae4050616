"""
Image and disparity-map containers plus file I/O.

Rasters are held as numpy arrays in row-major (height, width) layout.
Grayscale images are read from binary PGM (P5) or 8/16-bit grayscale PNG.
Ground-truth disparities use the KITTI encoding: a 16-bit PNG whose stored
value ``v`` means disparity ``v / 256`` and ``v == 0`` means "no data".
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image


class DecodeError(ValueError):
    """Raised when an image file cannot be decoded into the requested type."""


@dataclass(frozen=True)
class GrayImage:
    """8-bit intensity raster, ``data[y, x]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"GrayImage needs a 2-D array, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("GrayImage must be at least 1x1")
        if data.dtype != np.uint8:
            if np.issubdtype(data.dtype, np.integer) and data.size and (data.min() < 0 or data.max() > 255):
                raise ValueError("GrayImage values must fit in 8 bits")
            data = data.astype(np.uint8)
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class DisparityMap:
    """
    Disparity raster with a per-pixel validity mask.

    ``values`` may be integer (pipeline output) or float (ground truth).
    Invalid cells hold 0; consumers must look at ``valid``.
    ``d_max`` is the exclusive upper bound of valid values when known.
    """

    values: np.ndarray
    valid: np.ndarray
    d_max: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        valid = np.array(self.valid, dtype=bool, copy=True)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValueError(f"values {values.shape} and valid {valid.shape} must be equal 2-D shapes")
        values[~valid] = 0
        if valid.any():
            vv = values[valid]
            if vv.min() < 0:
                raise ValueError("valid disparities must be non-negative")
            if self.d_max is not None and vv.max() >= self.d_max:
                raise ValueError(f"valid disparity {vv.max()} outside [0, {self.d_max})")
        values.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def num_valid(self) -> int:
        return int(self.valid.sum())

    @classmethod
    def dense(cls, values, d_max=None) -> "DisparityMap":
        values = np.asarray(values)
        return cls(values, np.ones(values.shape, dtype=bool), d_max)


# --- PGM ------------------------------------------------------------------

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def _read_pgm(raw: bytes, path) -> np.ndarray:
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise DecodeError(f"{path}: malformed PGM header")
    w, h, maxval = (int(g) for g in m.groups())
    if w < 1 or h < 1:
        raise DecodeError(f"{path}: empty PGM ({w}x{h})")
    if maxval > 255 or maxval < 1:
        raise DecodeError(f"{path}: unsupported PGM maxval {maxval} (need 8-bit)")
    body = raw[m.end():]
    if len(body) < w * h:
        raise DecodeError(f"{path}: truncated PGM body ({len(body)} of {w * h} bytes)")
    return np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w).copy()


def _write_pgm(path, data: np.ndarray) -> None:
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(data, dtype=np.uint8).tobytes())


def _is_pgm(path) -> bool:
    return str(path).lower().endswith((".pgm", ".pnm"))


# --- PNG ------------------------------------------------------------------

def _read_png_array(path) -> tuple[np.ndarray, str]:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L"):
                arr = np.array(im, dtype=np.uint16)
            elif mode == "I":
                arr = np.array(im)
                if arr.size and (arr.min() < 0 or arr.max() > 65535):
                    raise DecodeError(f"{path}: 32-bit integer image out of 16-bit range")
                arr = arr.astype(np.uint16)
                mode = "I;16"
            else:
                arr = np.array(im)
            return arr, mode
    except DecodeError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def load_gray(path, allow_color: bool = False) -> GrayImage:
    """
    Read an 8-bit grayscale image.

    Args:
        path: PGM (P5, maxval <= 255) or PNG file. 16-bit PNGs are shifted
            down to 8 bits.
        allow_color: convert RGB/palette PNGs with the ITU-R 601 luma weights
            instead of rejecting them. Needed for KITTI colour frames.

    Returns:
        The decoded image.

    Raises:
        DecodeError: missing file, malformed header or unsupported format.
    """
    if not os.path.isfile(path):
        raise DecodeError(f"{path}: no such file")
    if _is_pgm(path):
        with open(path, "rb") as f:
            return GrayImage(_read_pgm(f.read(), path))
    arr, mode = _read_png_array(path)
    if mode == "L":
        return GrayImage(arr)
    if mode.startswith("I;16"):
        return GrayImage((arr >> 8).astype(np.uint8))
    if allow_color and mode in ("RGB", "RGBA", "P", "LA"):
        with Image.open(path) as im:
            return GrayImage(np.array(im.convert("L")))
    raise DecodeError(f"{path}: unsupported image mode {mode!r} (need 8/16-bit grayscale)")


def save_gray(img: GrayImage, path) -> None:
    """Write ``img`` as PGM or PNG depending on the file extension."""
    try:
        if _is_pgm(path):
            _write_pgm(path, img.data)
        else:
            Image.fromarray(img.data, mode="L").save(path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def load_kitti_disparity(path) -> DisparityMap:
    """Decode a KITTI 16-bit disparity PNG (value/256, 0 = invalid)."""
    if not os.path.isfile(path):
        raise DecodeError(f"{path}: no such file")
    arr, mode = _read_png_array(path)
    if not mode.startswith("I;16"):
        raise DecodeError(f"{path}: KITTI disparity must be 16-bit, got mode {mode!r}")
    valid = arr != 0
    return DisparityMap(arr.astype(np.float64) / 256.0, valid)


def crop_roi(img: GrayImage, x0: int, y0: int, w: int, h: int) -> GrayImage:
    """Copy the ``w`` x ``h`` window whose top-left corner is ``(x0, y0)``."""
    _check_roi(img.width, img.height, x0, y0, w, h)
    return GrayImage(img.data[y0:y0 + h, x0:x0 + w].copy())


def crop_disparity(dmap: DisparityMap, x0: int, y0: int, w: int, h: int) -> DisparityMap:
    _check_roi(dmap.width, dmap.height, x0, y0, w, h)
    sl = (slice(y0, y0 + h), slice(x0, x0 + w))
    return DisparityMap(dmap.values[sl], dmap.valid[sl], dmap.d_max)


def _check_roi(W, H, x0, y0, w, h):
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > W or y0 + h > H:
        raise IndexError(f"crop ({x0},{y0},{w},{h}) exceeds image bounds {W}x{H}")


def colorize(dmap: DisparityMap, d_max: Optional[int] = None) -> np.ndarray:
    """
    Colour-code disparities from blue (d = 0, far) to red (d -> d_max, near).

    The ramp is a linear hue sweep over [0, d_max). Invalid pixels are black.
    Returns an (H, W, 3) uint8 array.
    """
    d_max = d_max or dmap.d_max
    if d_max is None:
        d_max = int(np.ceil(dmap.values.max())) + 1 if dmap.valid.any() else 1
    t = np.clip(dmap.values.astype(np.float64) / float(d_max), 0.0, 1.0)
    # hue 240 deg (blue) at d=0 down to 0 deg (red) at d_max
    hue = (1.0 - t) * 4.0  # in units of 60 degrees
    sector = np.floor(hue).astype(int)
    frac = hue - sector
    rgb = np.zeros(dmap.shape + (3,), dtype=np.float64)
    up, down = frac, 1.0 - frac
    one = np.ones_like(frac)
    zero = np.zeros_like(frac)
    table = {
        0: (one, up, zero),
        1: (down, one, zero),
        2: (zero, one, up),
        3: (zero, down, one),
        4: (zero, zero, one),
    }
    for s, (r, g, b) in table.items():
        m = sector == s
        rgb[m, 0], rgb[m, 1], rgb[m, 2] = r[m], g[m], b[m]
    out = np.round(rgb * 255.0).astype(np.uint8)
    out[~dmap.valid] = 0
    return out


def write_disparity(dmap: DisparityMap, path, mode: str = "raw16", d_max: Optional[int] = None) -> None:
    """
    Write a disparity map.

    Args:
        dmap: map to write.
        path: output PNG path.
        mode: ``"raw16"`` for the KITTI 16-bit encoding (round(d*256), invalid
            pixels as 0) or ``"colorized"`` for an RGB visualisation.
        d_max: colour ramp upper bound; defaults to ``dmap.d_max``.
    """
    if mode == "raw16":
        enc = np.round(dmap.values.astype(np.float64) * 256.0)
        enc = np.clip(enc, 0, 65535).astype(np.uint16)
        enc[~dmap.valid] = 0
        # a valid d=0 would be indistinguishable from "no data"
        enc[dmap.valid & (enc == 0)] = 1
        img = Image.fromarray(enc)
    elif mode == "colorized":
        img = Image.fromarray(colorize(dmap, d_max), mode="RGB")
    else:
        raise ValueError(f"unknown disparity output mode {mode!r}")
    try:
        img.save(path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def save_rgb(arr: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(path)
