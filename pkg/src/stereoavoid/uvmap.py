"""
U-/V-disparity maps and obstacle extraction.

The U-map counts, for every image column ``u``, how often each disparity
occurs; it is stored as ``counts[d, u]`` so that it reads like a top-down view
placed above the disparity image. The V-map does the same per image row and
is stored as ``counts[v, d]`` (a side view placed to the right of the image).

Obstacles are found as connected blobs in the binarised maps. A U-blob gives
the column extent and a representative disparity, a V-blob at overlapping
disparities gives the row extent; together they describe an upright
cylinder in front of the camera.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .imgio import DisparityMap
from .rectify import StereoCalibration


@dataclass(frozen=True)
class UMap:
    counts: np.ndarray  # (d_max, W)

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    @property
    def d_max(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class VMap:
    counts: np.ndarray  # (H, d_max)

    @property
    def height(self) -> int:
        return self.counts.shape[0]

    @property
    def d_max(self) -> int:
        return self.counts.shape[1]


@dataclass(frozen=True)
class BinaryMap:
    """Boolean occupancy in the layout of the map it came from (``kind`` is ``"u"`` or ``"v"``)."""

    mask: np.ndarray
    kind: str


@dataclass(frozen=True)
class Contour:
    """
    Outer border of one 8-connected blob.

    ``boundary`` and ``pixels`` hold ``(x, y)`` map coordinates; ``boundary[0]``
    is the blob's top-most, left-most pixel. ``area`` counts the blob pixels.
    """

    boundary: np.ndarray
    pixels: np.ndarray
    area: int
    centroid: tuple

    @property
    def x_range(self) -> tuple:
        return int(self.pixels[:, 0].min()), int(self.pixels[:, 0].max())

    @property
    def y_range(self) -> tuple:
        return int(self.pixels[:, 1].min()), int(self.pixels[:, 1].max())


@dataclass(frozen=True)
class GroundLine:
    """Ground plane trace in the V-map: ``d = slope * v + intercept``, suppressed within ``band`` bins."""

    slope: float
    intercept: float
    band: float = 1.5

    def disparity_at(self, v):
        return self.slope * np.asarray(v, dtype=np.float64) + self.intercept

    def row_at(self, d):
        return (np.asarray(d, dtype=np.float64) - self.intercept) / self.slope


@dataclass(frozen=True)
class Obstacle:
    disparity: float
    u_min: int
    u_max: int
    v_min: int
    v_max: int
    depth_m: float
    width_m: float
    height_m: float
    grounded: bool = False


@dataclass(frozen=True)
class DetectionConfig:
    count_threshold: float = 12
    dilate_radius: int = 1
    blur_sigma: float = 1.0
    d_roi_min: int = 2
    min_area: int = 8
    ground_band: float = 1.5
    ground_min_slope: float = 0.02
    ground_min_rows: int = 8


@dataclass
class Detection:
    """Everything one detection pass produced, for inspection and drawing."""

    umap: UMap
    vmap: VMap
    ubin: BinaryMap
    vbin: BinaryMap
    u_contours: List[Contour]
    v_contours: List[Contour]
    ground: Optional[GroundLine]
    obstacles: List[Obstacle] = field(default_factory=list)


# --- histograms -----------------------------------------------------------

def disparity_bins(d: DisparityMap, d_max: int) -> np.ndarray:
    """Integer histogram bin of every valid pixel (``floor(d)``), -1 where invalid."""
    bins = np.full(d.shape, -1, dtype=np.int64)
    vals = np.floor(d.values[d.valid]).astype(np.int64)
    if vals.size and (vals.min() < 0 or vals.max() >= d_max):
        raise ValueError(f"valid disparity outside [0, {d_max}): range [{vals.min()}, {vals.max()}]")
    bins[d.valid] = vals
    return bins


def build_uvmaps(d: DisparityMap, d_max: Optional[int] = None) -> tuple[UMap, VMap]:
    """Per-column and per-row disparity histograms over the valid pixels."""
    d_max = d_max or d.d_max
    if d_max is None:
        raise ValueError("d_max is required when the map does not carry one")
    H, W = d.shape
    bins = disparity_bins(d, d_max)
    ys, xs = np.nonzero(d.valid)
    b = bins[ys, xs]
    u = np.bincount(b * W + xs, minlength=d_max * W).reshape(d_max, W)
    v = np.bincount(ys * d_max + b, minlength=H * d_max).reshape(H, d_max)
    return UMap(u), VMap(v)


# --- clean-up -------------------------------------------------------------

def estimate_ground(vmap: VMap, d_roi_min: int = 2, min_slope: float = 0.02,
                    min_rows: int = 8, band: float = 1.5) -> Optional[GroundLine]:
    """
    Fit the ground plane's straight trace through the V-map.

    Every row contributes its dominant disparity if that bin holds at least a
    fifth of the busiest row's count. A line through the candidates is found
    by exhaustive two-point consensus over an evenly spaced subset, then
    refined by least squares on its inliers. Lines that do not grow with
    ``v`` (walls, sky) are rejected.
    """
    counts = vmap.counts.astype(np.float64).copy()
    counts[:, :d_roi_min] = 0
    peak = counts.max(axis=1)
    if peak.max(initial=0) <= 0:
        return None
    rows = np.flatnonzero(peak >= 0.2 * peak.max())
    if rows.size < min_rows:
        return None
    ds = counts[rows].argmax(axis=1).astype(np.float64)
    vs = rows.astype(np.float64)
    sub = np.unique(np.linspace(0, rows.size - 1, min(rows.size, 48)).astype(int))
    ia, ib = np.triu_indices(sub.size, k=1)
    a, b = sub[ia], sub[ib]
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = (ds[b] - ds[a]) / (vs[b] - vs[a])
    keep = np.isfinite(slopes) & (slopes >= min_slope)
    if not keep.any():
        return None
    slopes, a = slopes[keep], a[keep]
    icpts = ds[a] - slopes * vs[a]
    support = (np.abs(ds[None, :] - (slopes[:, None] * vs[None, :] + icpts[:, None])) <= 1.0).sum(axis=1)
    k = int(np.argmax(support))  # first maximum keeps the choice deterministic
    best, best_n = (slopes[k], icpts[k]), int(support[k])
    if best_n < min_rows:
        return None
    inl = np.abs(ds - (best[0] * vs + best[1])) <= 1.0
    slope, icpt = np.polyfit(vs[inl], ds[inl], 1)
    if slope < min_slope:
        return None
    return GroundLine(float(slope), float(icpt), band)


def ground_mask(shape, ground: GroundLine) -> np.ndarray:
    """V-map bins lying on the ground band."""
    H, D = shape
    v = np.arange(H)[:, None]
    d = np.arange(D)[None, :]
    return np.abs(d - ground.disparity_at(v)) <= ground.band


def binarize_and_clean(
    m: Union[UMap, VMap],
    count_threshold: float = 12,
    dilate_radius: int = 1,
    blur_sigma: float = 1.0,
    d_roi_min: int = 2,
    ground: Optional[GroundLine] = None,
) -> BinaryMap:
    """
    Blur, threshold, dilate and crop a U- or V-map.

    Args:
        m: the histogram to binarise.
        count_threshold: bins with (blurred) count >= this are set.
        dilate_radius: half-size of the square dilation element; 0 disables.
        blur_sigma: Gaussian sigma in bins, truncated at 3 sigma; 0 disables.
        d_roi_min: bins with disparity below this are cleared.
        ground: for V-maps, bins on this ground band are cleared.
    """
    counts = m.counts.astype(np.float64)
    on_ground = None
    if isinstance(m, VMap) and ground is not None:
        # drop ground support before blurring so its flanks cannot survive the band mask
        on_ground = ground_mask(counts.shape, ground)
        counts[on_ground] = 0
    if blur_sigma > 0:
        counts = ndimage.gaussian_filter(counts, blur_sigma, mode="constant", truncate=3.0)
    mask = counts >= count_threshold
    if dilate_radius > 0:
        k = 2 * dilate_radius + 1
        mask = ndimage.binary_dilation(mask, structure=np.ones((k, k), dtype=bool))
    if isinstance(m, UMap):
        mask[:d_roi_min, :] = False
        kind = "u"
    else:
        mask[:, :d_roi_min] = False
        if on_ground is not None:
            mask &= ~on_ground
        kind = "v"
    return BinaryMap(mask, kind)


# --- contours -------------------------------------------------------------

# clockwise neighbour order in (row, col) with rows growing downwards
_NEIGHBOURS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))


def trace_outer_border(mask: np.ndarray, start: tuple) -> np.ndarray:
    """
    Follow the outer border of the blob containing ``start`` (row, col).

    ``start`` must be the blob's first pixel in raster order, so its left
    neighbour is background. Returns the border as (row, col) pairs in
    traversal order.
    """
    p = np.pad(mask, 1)
    i, j = start[0] + 1, start[1] + 1

    def index_of(di, dj):
        return _NEIGHBOURS.index((di, dj))

    # look clockwise from the west neighbour for the first foreground pixel
    k0 = index_of(0, -1)
    first = None
    for s in range(8):
        di, dj = _NEIGHBOURS[(k0 + s) % 8]
        if p[i + di, j + dj]:
            first = (i + di, j + dj)
            break
    if first is None:
        return np.array([[start[0], start[1]]])
    path = []
    prev = first
    cur = (i, j)
    while True:
        path.append((cur[0] - 1, cur[1] - 1))
        # from the element after prev, search counter-clockwise around cur
        k = index_of(prev[0] - cur[0], prev[1] - cur[1])
        nxt = None
        for s in range(1, 9):
            di, dj = _NEIGHBOURS[(k - s) % 8]
            if p[cur[0] + di, cur[1] + dj]:
                nxt = (cur[0] + di, cur[1] + dj)
                break
        if nxt == (i, j) and cur == first:
            break
        prev, cur = cur, nxt
    return np.array(path)


def extract_contours(b: BinaryMap, min_area: int = 1) -> List[Contour]:
    """
    Outer contours of the 8-connected foreground blobs.

    Blobs smaller than ``min_area`` pixels are dropped. The result is sorted
    by area, largest first; ties go to the blob whose first pixel comes first
    in raster order.
    """
    mask = np.asarray(b.mask if isinstance(b, BinaryMap) else b, dtype=bool)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    out = []
    for obj in range(1, n + 1):
        ys, xs = np.nonzero(labels == obj)
        area = ys.size
        if area < min_area:
            continue
        start = (int(ys[0]), int(xs[0]))  # np.nonzero is raster ordered
        border = trace_outer_border(labels == obj, start)
        out.append(Contour(
            boundary=border[:, ::-1].copy(),
            pixels=np.stack([xs, ys], axis=1),
            area=int(area),
            centroid=(float(xs.mean()), float(ys.mean())),
        ))
    out.sort(key=lambda c: (-c.area, c.boundary[0][1], c.boundary[0][0]))
    return out


# --- obstacle models ------------------------------------------------------

def _representative_disparity(c: Contour, umap: Optional[UMap]) -> float:
    ds = c.pixels[:, 1].astype(np.float64)
    if umap is not None:
        w = umap.counts[c.pixels[:, 1], c.pixels[:, 0]].astype(np.float64)
        if w.sum() > 0:
            return float((ds * w).sum() / w.sum())
    return float(ds.mean())


def fit_obstacles(
    u_contours: Sequence[Contour],
    v_contours: Sequence[Contour],
    calib: StereoCalibration,
    umap: Optional[UMap] = None,
    ground: Optional[GroundLine] = None,
) -> List[Obstacle]:
    """
    Pair U- and V-blobs into cylinder models.

    Each U-blob gives ``u_min..u_max`` and a representative disparity (the
    U-map count-weighted mean when ``umap`` is given). It is paired with the
    V-blob whose disparity span overlaps its own the most (at least one bin;
    ties go to the larger V-blob). U-blobs without a partner or with zero
    disparity are dropped.

    When a ``ground`` line is given, a V-blob reaching down to within the
    suppressed band of the ground at the obstacle's disparity is treated as
    standing on the ground: ``v_max`` is extended to the contact row and the
    obstacle is flagged ``grounded``.
    """
    f, b = calib.focal_px, calib.baseline_m
    result = []
    for uc in u_contours:
        u_min, u_max = uc.x_range
        d_lo, d_hi = uc.y_range
        disp = _representative_disparity(uc, umap)
        if disp <= 0:
            continue
        best, best_key = None, None
        for vc in v_contours:
            vd_lo, vd_hi = vc.x_range
            overlap = min(d_hi, vd_hi) - max(d_lo, vd_lo) + 1
            if overlap < 1:
                continue
            key = (overlap, vc.area)
            if best_key is None or key > best_key:
                best, best_key = vc, key
        if best is None:
            continue
        v_min, v_max = best.y_range
        grounded = False
        if ground is not None:
            contact = float(ground.row_at(disp))
            reach = ground.band / ground.slope + 3.0
            if v_max >= contact - reach:
                grounded = True
                v_max = max(v_max, int(round(contact)))
        depth = f * b / disp
        result.append(Obstacle(
            disparity=disp,
            u_min=u_min, u_max=u_max, v_min=v_min, v_max=v_max,
            depth_m=depth,
            width_m=depth * (u_max - u_min) / f,
            height_m=depth * (v_max - v_min) / f,
            grounded=grounded,
        ))
    return result


def detect_obstacles(d: DisparityMap, calib: StereoCalibration,
                     cfg: Optional[DetectionConfig] = None) -> Detection:
    """Histogram, clean, segment and model one disparity map."""
    cfg = cfg or DetectionConfig()
    umap, vmap = build_uvmaps(d, calib.d_max)
    ground = estimate_ground(vmap, cfg.d_roi_min, cfg.ground_min_slope,
                             cfg.ground_min_rows, cfg.ground_band)
    ubin = binarize_and_clean(umap, cfg.count_threshold, cfg.dilate_radius, cfg.blur_sigma, cfg.d_roi_min)
    vbin = binarize_and_clean(vmap, cfg.count_threshold, cfg.dilate_radius, cfg.blur_sigma,
                              cfg.d_roi_min, ground)
    uc = extract_contours(ubin, cfg.min_area)
    vc = extract_contours(vbin, cfg.min_area)
    obstacles = fit_obstacles(uc, vc, calib, umap, ground)
    return Detection(umap, vmap, ubin, vbin, uc, vc, ground, obstacles)


# --- visualisation --------------------------------------------------------

def map_image(counts: np.ndarray) -> np.ndarray:
    """Log-scaled 8-bit rendering of a histogram."""
    c = np.log1p(counts.astype(np.float64))
    top = c.max()
    if top > 0:
        c = c / top
    return np.round(c * 255).astype(np.uint8)


def _rect(img, x0, y0, x1, y1, color):
    H, W = img.shape[:2]
    x0, x1 = max(0, min(x0, W - 1)), max(0, min(x1, W - 1))
    y0, y1 = max(0, min(y0, H - 1)), max(0, min(y1, H - 1))
    img[y0, x0:x1 + 1] = color
    img[y1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0] = color
    img[y0:y1 + 1, x1] = color


def annotate(d: DisparityMap, det: Detection, d_max: Optional[int] = None) -> np.ndarray:
    """
    Compose the colour-coded disparity image with the U-map above it and the
    V-map to its right, with obstacle extents drawn in white.
    """
    from .imgio import colorize

    d_max = d_max or det.umap.d_max
    H, W = d.shape
    D = det.umap.d_max
    canvas = np.zeros((D + H, W + D, 3), dtype=np.uint8)
    canvas[D:, :W] = colorize(d, d_max)
    canvas[:D, :W] = map_image(det.umap.counts)[:, :, None]
    canvas[D:, W:] = map_image(det.vmap.counts)[:, :, None]
    canvas[:D, :W][det.ubin.mask] = (canvas[:D, :W][det.ubin.mask] // 2) + np.array([0, 0, 120], np.uint8)
    canvas[D:, W:][det.vbin.mask] = (canvas[D:, W:][det.vbin.mask] // 2) + np.array([0, 0, 120], np.uint8)
    if det.ground is not None:
        vs = np.arange(H)
        ds = np.round(det.ground.disparity_at(vs)).astype(int)
        ok = (ds >= 0) & (ds < D)
        canvas[D + vs[ok], W + ds[ok]] = (255, 0, 255)
    white = (255, 255, 255)
    for ob in det.obstacles:
        _rect(canvas[D:, :W], ob.u_min, ob.v_min, ob.u_max, ob.v_max, white)
        di = int(round(ob.disparity))
        _rect(canvas[:D, :W], ob.u_min, max(di - 1, 0), ob.u_max, min(di + 1, D - 1), white)
        _rect(canvas[D:, W:], max(di - 1, 0), ob.v_min, min(di + 1, D - 1), ob.v_max, white)
    return canvas


def format_obstacle(ob: Obstacle) -> str:
    return (f"obstacle d={ob.disparity:.2f} u=[{ob.u_min},{ob.u_max}] "
            f"v=[{ob.v_min},{ob.v_max}] depth={ob.depth_m:.3f}")
