"""
Semi-global cost aggregation, disparity extraction and post-filtering.

Aggregation runs the usual per-direction dynamic program

    L_r(p, d) = C(p, d) + min(L_r(q, d), L_r(q, d - 1) + P1, L_r(q, d + 1) + P1,
                              min_k L_r(q, k) + P2) - min_k L_r(q, k)

with ``q = p - r`` the predecessor along direction ``r``. Pixels without a
predecessor start the path with ``L_r = C``. The four forward directions
(left->right, down-right, down, down-left) only look at the current and the
previous image row, which is what makes the single-pass streaming engine
possible; the eight-direction mode adds the reverse directions and is only
available in the whole-volume reference engine.

Directions are given as ``(dx, dy)`` steps; the predecessor of ``(x, y)`` is
``(x - dx, y - dy)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numba
import numpy as np

from .cost import CostVolume
from .imgio import DisparityMap

FORWARD_DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1))
ALL_DIRECTIONS = FORWARD_DIRECTIONS + ((-1, 0), (-1, -1), (0, -1), (1, -1))


class UnsupportedModeError(ValueError):
    pass


@dataclass(frozen=True)
class SgmParams:
    p1: int
    p2: int
    paths: int = 4
    d_max: int | None = None

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0:
            raise ValueError("SGM penalties must be non-negative")
        if self.p1 > self.p2:
            raise ValueError(f"P1 ({self.p1}) must not exceed P2 ({self.p2})")
        if self.paths not in (4, 8):
            raise ValueError(f"paths must be 4 or 8, got {self.paths}")


def _check(c: CostVolume, params: SgmParams):
    if params.d_max is not None and params.d_max != c.d_max:
        raise ValueError(f"params.d_max={params.d_max} but the volume has {c.d_max} disparities")


def _step(cost, prev, p1, p2):
    """One recurrence step for a batch of pixels. ``cost`` and ``prev`` are (N, D) int64."""
    m = prev.min(axis=1, keepdims=True)
    best = np.minimum(prev, m + p2)
    if prev.shape[1] > 1:
        best[:, 1:] = np.minimum(best[:, 1:], prev[:, :-1] + p1)
        best[:, :-1] = np.minimum(best[:, :-1], prev[:, 1:] + p1)
    return cost + best - m


def _path_forward(c: np.ndarray, dx: int, dy: int, p1: int, p2: int) -> np.ndarray:
    """Directional costs for ``dx`` in {-1, 0, 1}, ``dy`` in {0, 1} (forward directions)."""
    H, W, _ = c.shape
    L = np.empty_like(c)
    if dy == 0:
        L[:, 0] = c[:, 0]
        for x in range(1, W):
            L[:, x] = _step(c[:, x], L[:, x - 1], p1, p2)
        return L
    L[0] = c[0]
    for y in range(1, H):
        prev = L[y - 1]
        if dx == 0:
            L[y] = _step(c[y], prev, p1, p2)
        elif dx == 1:
            L[y, 0] = c[y, 0]
            L[y, 1:] = _step(c[y, 1:], prev[:-1], p1, p2)
        else:
            L[y, -1] = c[y, -1]
            L[y, :-1] = _step(c[y, :-1], prev[1:], p1, p2)
    return L


def path_costs(c: CostVolume, direction: tuple[int, int], p1: int, p2: int) -> np.ndarray:
    """
    Directional aggregation ``L_r`` for one of the eight directions.

    Reverse directions reuse the forward scan on a flipped volume.
    """
    dx, dy = direction
    if (dx, dy) not in ALL_DIRECTIONS:
        raise ValueError(f"unsupported direction {direction}")
    vol = c.costs.astype(np.int64)
    flip_x = flip_y = False
    if dy < 0:
        flip_y, dy = True, -dy
        vol = vol[::-1]
    if dy == 0 and dx < 0:
        flip_x, dx = True, -dx
        vol = vol[:, ::-1]
    L = _path_forward(vol, dx, dy, p1, p2)
    if flip_x:
        L = L[:, ::-1]
    if flip_y:
        L = L[::-1]
    return L


def aggregate(c: CostVolume, params: SgmParams) -> CostVolume:
    """
    Whole-volume reference aggregation.

    Args:
        c: matching cost volume.
        params: penalties and path count (4 or 8).

    Returns:
        ``C_aggr = sum_r L_r`` as a uint32 volume.
    """
    _check(c, params)
    directions = FORWARD_DIRECTIONS if params.paths == 4 else ALL_DIRECTIONS
    total = np.zeros(c.shape, dtype=np.int64)
    for r in directions:
        total += path_costs(c, r, params.p1, params.p2)
    return CostVolume(total.astype(np.uint32))


# --- streaming engine ------------------------------------------------------

@numba.njit(cache=True)
def _dp_update(cost, pred, p1, p2, out):
    D = cost.shape[0]
    m = pred[0]
    for d in range(1, D):
        if pred[d] < m:
            m = pred[d]
    for d in range(D):
        best = pred[d]
        if m + p2 < best:
            best = m + p2
        if d > 0 and pred[d - 1] + p1 < best:
            best = pred[d - 1] + p1
        if d < D - 1 and pred[d + 1] + p1 < best:
            best = pred[d + 1] + p1
        out[d] = cost[d] + best - m


@numba.njit(cache=True)
def _stream_row(cost_row, line, carry, saved, has_prev, p1, p2, out_row):
    """
    Aggregate one image row in place.

    ``line[x, k]`` holds the previous row's L45/L90/L135 costs and is
    overwritten with the current row's as the scan moves right; ``saved``
    keeps the previous row's L45 of column ``x - 1`` once it is overwritten.
    ``carry`` is the horizontal path's state of the pixel to the left.
    """
    W = cost_row.shape[0]
    D = cost_row.shape[1]
    tmp = np.empty(D, dtype=np.int64)
    keep = np.empty(D, dtype=np.int64)
    for x in range(W):
        c = cost_row[x]
        # left -> right
        if x == 0:
            for d in range(D):
                carry[d] = c[d]
        else:
            _dp_update(c, carry, p1, p2, tmp)
            for d in range(D):
                carry[d] = tmp[d]
        for d in range(D):
            out_row[x, d] = carry[d]
        # save this column's old L45 before it is overwritten; column x+1 needs it
        for d in range(D):
            keep[d] = line[x, 0, d]
        # down-right, predecessor (x-1, y-1)
        if has_prev and x > 0:
            _dp_update(c, saved, p1, p2, tmp)
        else:
            for d in range(D):
                tmp[d] = c[d]
        for d in range(D):
            line[x, 0, d] = tmp[d]
            out_row[x, d] += tmp[d]
        # down, predecessor (x, y-1)
        if has_prev:
            _dp_update(c, line[x, 1], p1, p2, tmp)
        else:
            for d in range(D):
                tmp[d] = c[d]
        for d in range(D):
            line[x, 1, d] = tmp[d]
            out_row[x, d] += tmp[d]
        # down-left, predecessor (x+1, y-1), not yet overwritten
        if has_prev and x < W - 1:
            _dp_update(c, line[x + 1, 2], p1, p2, tmp)
        else:
            for d in range(D):
                tmp[d] = c[d]
        # column x-1 was the last reader of the old line[x, 2]
        for d in range(D):
            line[x, 2, d] = tmp[d]
            out_row[x, d] += tmp[d]
        for d in range(D):
            saved[d] = keep[d]


class StreamingAggregator:
    """
    Row-at-a-time four-path aggregation with a single line buffer.

    State is one ``W x 3 x d_max`` buffer of the previous row's directional
    costs plus a ``d_max`` horizontal carry. Feed rows top to bottom with
    :meth:`push`; each call returns the aggregated row.
    """

    def __init__(self, width: int, d_max: int, params: SgmParams):
        if params.paths != 4:
            raise UnsupportedModeError("streaming aggregation supports four paths only")
        if params.d_max is not None and params.d_max != d_max:
            raise ValueError(f"params.d_max={params.d_max} but rows have {d_max} disparities")
        self.width = width
        self.d_max = d_max
        self.p1 = int(params.p1)
        self.p2 = int(params.p2)
        self.line = np.zeros((width, 3, d_max), dtype=np.int64)
        self.carry = np.zeros(d_max, dtype=np.int64)
        self._saved = np.zeros(d_max, dtype=np.int64)
        self.rows_seen = 0

    def push(self, cost_row: np.ndarray) -> np.ndarray:
        cost_row = np.asarray(cost_row)
        if cost_row.shape != (self.width, self.d_max):
            raise ValueError(f"row shape {cost_row.shape}, expected {(self.width, self.d_max)}")
        out = np.empty((self.width, self.d_max), dtype=np.int64)
        _stream_row(cost_row.astype(np.int64), self.line, self.carry, self._saved,
                    self.rows_seen > 0, self.p1, self.p2, out)
        self.rows_seen += 1
        return out.astype(np.uint32)


def aggregate_streaming(
    rows: Union[CostVolume, Iterable[np.ndarray]], params: SgmParams
) -> Iterator[np.ndarray]:
    """
    Stream rows of ``(W, d_max)`` cost slices through four-path aggregation.

    Yields the aggregated slice for each input row as soon as it is read.
    The output is bit-identical to :func:`aggregate` with four paths.
    """
    if params.paths != 4:
        raise UnsupportedModeError("streaming aggregation is single-pass: eight paths need a second, reverse pass")
    if isinstance(rows, CostVolume):
        _check(rows, params)
        rows = iter(rows.costs)
    agg = None
    for row in rows:
        row = np.asarray(row)
        if agg is None:
            agg = StreamingAggregator(row.shape[0], row.shape[1], params)
        yield agg.push(row)


def aggregate_streamed(c: CostVolume, params: SgmParams) -> CostVolume:
    """Run :func:`aggregate_streaming` over a whole volume and collect the rows."""
    return CostVolume(np.stack(list(aggregate_streaming(c, params))))


# --- disparity extraction --------------------------------------------------

def wta(c_aggr: CostVolume, d_max: int | None = None) -> DisparityMap:
    """Per-pixel argmin over disparities; ties resolve to the smallest ``d``."""
    d = np.argmin(c_aggr.costs, axis=2)
    return DisparityMap.dense(d.astype(np.int32), d_max or c_aggr.d_max)


def wta_right(c_aggr: CostVolume) -> DisparityMap:
    """
    Right-view disparities read diagonally out of the left-referenced volume.

    ``D_right(x, y) = argmin_d C_aggr(x + d, y, d)`` over the ``d`` with
    ``x + d < W``. ``d = 0`` is always a candidate, so every pixel is valid.
    """
    H, W, D = c_aggr.shape
    xs = np.arange(W)[:, None] + np.arange(D)[None, :]  # (W, D) source column
    inside = xs < W
    gathered = c_aggr.costs[:, np.minimum(xs, W - 1), np.arange(D)[None, :]].astype(np.int64)
    gathered[:, ~inside] = np.iinfo(np.int64).max
    d = np.argmin(gathered, axis=2)
    return DisparityMap.dense(d.astype(np.int32), D)


def lr_check(d_left: DisparityMap, d_right: DisparityMap, tol: int = 1) -> DisparityMap:
    """
    Invalidate left disparities that the right view does not confirm.

    Pixel ``(x, y)`` with disparity ``d`` survives iff column ``x - d`` is in
    the image, ``d_right`` is valid there and ``|d - d_right(x - d, y)| <= tol``.
    """
    if d_left.shape != d_right.shape:
        raise IndexError(f"disparity map sizes differ: {d_left.shape} vs {d_right.shape}")
    H, W = d_left.shape
    dl = d_left.values
    xr = np.arange(W)[None, :] - np.rint(dl).astype(np.int64)
    inside = (xr >= 0) & (xr < W)
    xr_c = np.clip(xr, 0, W - 1)
    rows = np.arange(H)[:, None]
    dr = d_right.values[rows, xr_c]
    ok = d_left.valid & inside & d_right.valid[rows, xr_c] & (np.abs(dl - dr) <= tol)
    return DisparityMap(dl, ok, d_left.d_max)


def median_filter(d: DisparityMap, k: int = 5) -> DisparityMap:
    """
    ``k x k`` median over valid samples only, with clamped borders.

    A pixel stays valid when it was valid and its window holds at least
    ``ceil(k*k / 2)`` valid samples; holes are never filled. With an even number of samples the lower median is used,
    so integer maps stay integer.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median window must be odd, got {k}")
    r = k // 2
    H, W = d.shape
    vals = np.pad(d.values, r, mode="edge")
    valid = np.pad(d.valid, r, mode="edge")
    big = np.inf if np.issubdtype(d.values.dtype, np.floating) else np.iinfo(np.int64).max
    stack_dtype = np.float64 if np.issubdtype(d.values.dtype, np.floating) else np.int64
    stack = np.empty((H, W, k * k), dtype=stack_dtype)
    i = 0
    for dy in range(k):
        for dx in range(k):
            v = vals[dy:dy + H, dx:dx + W].astype(stack_dtype)
            stack[:, :, i] = np.where(valid[dy:dy + H, dx:dx + W], v, big)
            i += 1
    count = (stack != big).sum(axis=2)
    stack.sort(axis=2)
    idx = np.maximum(count - 1, 0) // 2
    med = np.take_along_axis(stack, idx[:, :, None], axis=2)[:, :, 0]
    keep = d.valid & (count >= (k * k + 1) // 2)
    med = np.where(keep, med, 0).astype(d.values.dtype)
    return DisparityMap(med, keep, d.d_max)


# --- full pipeline ---------------------------------------------------------

def matching_costs(left, right, cfg) -> CostVolume:
    from .cost import census_transform, cost_census, cost_sad

    if cfg.cost == "census":
        return cost_census(census_transform(left, cfg.radius), census_transform(right, cfg.radius), cfg.d_max)
    return cost_sad(left, right, cfg.d_max, cfg.radius)


def compute_disparity(left, right, cfg=None, maps=None) -> DisparityMap:
    """
    Rectify, match, aggregate, extract, check and filter a stereo pair.

    Args:
        left, right: input images of equal size.
        cfg: :class:`~stereoavoid.config.PipelineConfig`; defaults to the
            census configuration.
        maps: optional ``(left_maps, right_maps)`` pair of
            :class:`~stereoavoid.rectify.RectificationMaps`. When omitted the
            maps named in ``cfg`` are loaded, or the images are used as-is.

    Returns:
        The filtered left-referenced disparity map.
    """
    from .config import PipelineConfig
    from .rectify import apply_rectification, load_rmap

    cfg = cfg or PipelineConfig()
    if left.shape != right.shape:
        raise IndexError(f"image sizes differ: {left.shape} vs {right.shape}")
    if maps is None and cfg.rect_left is not None:
        maps = (load_rmap(cfg.rect_left), load_rmap(cfg.rect_right))
    if maps is not None:
        left = apply_rectification(left, maps[0])
        right = apply_rectification(right, maps[1])

    c = matching_costs(left, right, cfg)
    params = SgmParams(cfg.p1, cfg.p2, cfg.paths, cfg.d_max)
    if cfg.engine == "streaming":
        c_aggr = aggregate_streamed(c, params)
    else:
        c_aggr = aggregate(c, params)
    d_left = wta(c_aggr)
    d_right = wta_right(c_aggr)
    checked = lr_check(d_left, d_right, cfg.lr_tol)
    return median_filter(checked, cfg.median_k)
