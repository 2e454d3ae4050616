"""
Pixel-wise matching cost volumes.

The volume is indexed ``costs[y, x, d]`` and compares the left pixel
``(x, y)`` with the right pixel ``(x - d, y)``. Column indices that fall off
the image are clamped, so the volume is always dense; invalid matches are
left for the consistency check to remove.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import GrayImage

COST_CEILING = np.iinfo(np.uint16).max
CENSUS_BITS_5X5 = 24


@dataclass(frozen=True)
class CostVolume:
    """Matching costs ``costs[y, x, d]`` for ``d`` in ``[0, d_max)``."""

    costs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.costs)
        if c.ndim != 3 or c.shape[2] < 1:
            raise ValueError(f"cost volume must be (H, W, d_max), got {c.shape}")
        if not np.issubdtype(c.dtype, np.unsignedinteger):
            raise TypeError(f"cost volume must be unsigned, got {c.dtype}")
        object.__setattr__(self, "costs", c)

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    @property
    def width(self) -> int:
        return self.costs.shape[1]

    @property
    def d_max(self) -> int:
        return self.costs.shape[2]

    @property
    def shape(self):
        return self.costs.shape


@dataclass(frozen=True)
class CensusImage:
    """Per-pixel census bitstrings, ``descriptors[y, x]`` (uint32, ``nbits`` used)."""

    descriptors: np.ndarray
    nbits: int = CENSUS_BITS_5X5

    @property
    def height(self) -> int:
        return self.descriptors.shape[0]

    @property
    def width(self) -> int:
        return self.descriptors.shape[1]

    @property
    def shape(self):
        return self.descriptors.shape


def census_transform(img: GrayImage, radius: int = 2) -> CensusImage:
    """
    Census transform over a ``(2r+1) x (2r+1)`` window, borders replicated.

    Neighbours are visited in row-major order skipping the centre; bit ``k``
    is set when the ``k``-th neighbour is strictly darker than the centre.
    """
    if img.width < 1 or img.height < 1:
        raise IndexError("census transform needs at least a 1x1 image")
    if radius < 1:
        raise ValueError("census radius must be >= 1")
    nbits = (2 * radius + 1) ** 2 - 1
    if nbits > 32:
        raise ValueError(f"radius {radius} needs {nbits} bits, more than fit in uint32")
    H, W = img.shape
    centre = img.data.astype(np.int16)
    padded = np.pad(centre, radius, mode="edge")
    desc = np.zeros((H, W), dtype=np.uint32)
    bit = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[radius + dy:radius + dy + H, radius + dx:radius + dx + W]
            desc |= (nb < centre).astype(np.uint32) << np.uint32(bit)
            bit += 1
    return CensusImage(desc, nbits)


def _shifted_columns(width: int, d: int) -> np.ndarray:
    return np.maximum(np.arange(width) - d, 0)


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a square window with replicated borders, for an (H, W, D) stack."""
    p = np.pad(a, ((radius, radius), (radius, radius), (0, 0)), mode="edge").astype(np.int64)
    k = 2 * radius + 1
    cs = np.cumsum(p, axis=0)
    cs = np.concatenate([np.zeros_like(cs[:1]), cs], axis=0)
    rows = cs[k:] - cs[:-k]
    cs = np.cumsum(rows, axis=1)
    cs = np.concatenate([np.zeros_like(cs[:, :1]), cs], axis=1)
    return cs[:, k:] - cs[:, :-k]


def cost_sad(left: GrayImage, right: GrayImage, d_max: int, radius: int = 2) -> CostVolume:
    """
    Sum of absolute differences over a square window.

    ``cost[y, x, d]`` sums ``A_d`` over the window centred on ``(x, y)``,
    where ``A_d(x, y) = |L(x, y) - R(max(x - d, 0), y)|`` and window
    coordinates outside the image are clamped. Saturates at 65535.
    """
    if left.shape != right.shape:
        raise IndexError(f"image sizes differ: {left.shape} vs {right.shape}")
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    H, W = left.shape
    L = left.data.astype(np.int32)
    R = right.data.astype(np.int32)
    absdiff = np.empty((H, W, d_max), dtype=np.int32)
    for d in range(d_max):
        absdiff[:, :, d] = np.abs(L - R[:, _shifted_columns(W, d)])
    sums = _box_sum(absdiff, radius)
    return CostVolume(np.minimum(sums, COST_CEILING).astype(np.uint16))


def cost_census(left: CensusImage, right: CensusImage, d_max: int) -> CostVolume:
    """Hamming distance between ``left(x, y)`` and ``right(max(x - d, 0), y)``."""
    if left.shape != right.shape:
        raise IndexError(f"census image sizes differ: {left.shape} vs {right.shape}")
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    H, W = left.shape
    costs = np.empty((H, W, d_max), dtype=np.uint16)
    for d in range(d_max):
        x = left.descriptors ^ right.descriptors[:, _shifted_columns(W, d)]
        costs[:, :, d] = np.bitwise_count(x)
    return CostVolume(costs)
