import numpy as np
import pytest

import oracles
from stereoavoid.imgio import DisparityMap
from stereoavoid.rectify import StereoCalibration
from stereoavoid.uvmap import (
    BinaryMap,
    DetectionConfig,
    GroundLine,
    UMap,
    VMap,
    annotate,
    binarize_and_clean,
    build_uvmaps,
    detect_obstacles,
    estimate_ground,
    extract_contours,
    fit_obstacles,
    format_obstacle,
    trace_outer_border,
)


def test_uniform_map_histograms():
    d = DisparityMap(np.full((4, 4), 2), np.ones((4, 4), bool), 5)
    u, v = build_uvmaps(d)
    assert (u.counts[2] == 4).all() and u.counts.sum() == 16
    assert (v.counts[:, 2] == 4).all() and v.counts.sum() == 16
    assert u.counts.shape == (5, 4) and v.counts.shape == (4, 5)


def test_all_invalid_map():
    u, v = build_uvmaps(DisparityMap(np.zeros((3, 5)), np.zeros((3, 5), bool)), 8)
    assert not u.counts.any() and not v.counts.any()


def test_histograms_match_oracle(rng):
    for _ in range(10):
        H, W, D = int(rng.integers(1, 20)), int(rng.integers(1, 20)), int(rng.integers(1, 12))
        vals = rng.uniform(0, D - 1e-6, (H, W))
        valid = rng.random((H, W)) < 0.6
        d = DisparityMap(vals, valid, D)
        u, v = build_uvmaps(d)
        eu, ev = oracles.uv_histograms(d.values, d.valid, D)
        assert np.array_equal(u.counts, eu) and np.array_equal(v.counts, ev)
        assert u.counts.sum() == v.counts.sum() == valid.sum()


def test_out_of_range_disparity():
    d = DisparityMap(np.array([[7]]), np.array([[True]]))
    with pytest.raises(ValueError):
        build_uvmaps(d, 5)


def _single(count, d=4, u=5, shape=(10, 12)):
    c = np.zeros(shape, int)
    c[d, u] = count
    return UMap(c)


def test_binarize_single_cell():
    b = binarize_and_clean(_single(5), count_threshold=1, dilate_radius=0, blur_sigma=0)
    assert b.mask.sum() == 1 and b.mask[4, 5]


def test_binarize_dilation_block():
    b = binarize_and_clean(_single(5), count_threshold=1, dilate_radius=1, blur_sigma=0)
    assert b.mask.sum() == 9 and b.mask[3:6, 4:7].all()


def test_binarize_pointwise(rng):
    for _ in range(10):
        c = rng.integers(0, 30, (12, 15))
        b = binarize_and_clean(UMap(c), count_threshold=12, dilate_radius=0, blur_sigma=0, d_roi_min=0)
        assert np.array_equal(b.mask, c >= 12)


def test_binarize_blur_truncation():
    # weights of a 1-D Gaussian with sigma 1 truncated at 3 sigma
    w = np.exp(-0.5 * np.arange(-3, 4) ** 2)
    w /= w.sum()
    blurred_peak = 100 * w[3] ** 2
    at = binarize_and_clean(_single(100, shape=(20, 20), d=10, u=10), count_threshold=blurred_peak - 1e-9,
                            dilate_radius=0, blur_sigma=1.0)
    above = binarize_and_clean(_single(100, shape=(20, 20), d=10, u=10), count_threshold=blurred_peak + 1e-9,
                               dilate_radius=0, blur_sigma=1.0)
    assert at.mask.sum() == 1 and not above.mask.any()
    # support of the blur ends 3 bins away
    far = binarize_and_clean(_single(100, shape=(20, 20), d=10, u=10), count_threshold=1e-12,
                             dilate_radius=0, blur_sigma=1.0)
    assert far.mask[10, 7:14].all() and not far.mask[10, 6] and not far.mask[10, 14]


def test_binarize_roi_clears_far_bins():
    c = np.zeros((10, 6), int)
    c[1, 2] = 50
    c[2, 2] = 50
    b = binarize_and_clean(UMap(c), count_threshold=1, dilate_radius=0, blur_sigma=0, d_roi_min=2)
    assert not b.mask[:2].any() and b.mask[2, 2]
    vb = binarize_and_clean(VMap(c.T.copy()), count_threshold=1, dilate_radius=0, blur_sigma=0, d_roi_min=2)
    assert not vb.mask[:, :2].any() and vb.mask[2, 2]


def test_binarize_removes_ground_band():
    H, D = 60, 20
    c = np.zeros((H, D), int)
    g = GroundLine(0.25, 3.0, 1.5)
    for v in range(H):
        d = int(round(g.disparity_at(v)))
        if 0 <= d < D:
            c[v, d] = 40
    c[10:20, 15] = 40  # obstacle column away from the ground trace
    b = binarize_and_clean(VMap(c), count_threshold=12, ground=g)
    ys, xs = np.nonzero(b.mask)
    assert xs.min() >= 13 and ys.max() <= 21


def test_ground_estimate_on_synthetic_vmap(rng):
    H, D = 120, 40
    c = rng.integers(0, 3, (H, D))
    for v in range(40, H):
        c[v, int(round(0.3 * v - 10))] += 60
    g = estimate_ground(VMap(c))
    assert g is not None
    assert g.slope == pytest.approx(0.3, abs=0.01)
    assert g.intercept == pytest.approx(-10, abs=1.0)


def test_no_ground_on_wall():
    c = np.zeros((80, 30), int)
    c[:, 12] = 50  # vertical trace: a frontal wall, not a ground plane
    assert estimate_ground(VMap(c)) is None


def test_rectangle_contour():
    m = np.zeros((10, 12), bool)
    m[2:6, 3:9] = True  # 4 rows x 6 columns
    (c,) = extract_contours(BinaryMap(m, "u"))
    assert c.area == 24
    assert c.centroid == pytest.approx((5.5, 3.5))
    assert tuple(c.boundary[0]) == (3, 2)
    assert len(c.boundary) == 2 * (6 + 4) - 4


def test_empty_contours():
    assert extract_contours(BinaryMap(np.zeros((5, 5), bool), "u")) == []


def test_contours_match_flood_fill(rng):
    for _ in range(30):
        m = rng.random((int(rng.integers(1, 25)), int(rng.integers(1, 25)))) < rng.uniform(0.2, 0.6)
        cs = extract_contours(BinaryMap(m, "v"))
        comps = oracles.flood_fill_components(m)
        assert sorted(c.area for c in cs) == sorted(len(k) for k in comps)
        areas = [c.area for c in cs]
        assert areas == sorted(areas, reverse=True)
        for c in cs:
            comp = [(int(y), int(x)) for x, y in c.pixels]
            traced = {(int(y), int(x)) for x, y in c.boundary}
            assert traced == oracles.outer_border_pixels(m.shape, comp)


def test_contour_min_area_and_ties():
    m = np.zeros((8, 8), bool)
    m[0, 6:8] = True  # area 2, top right
    m[5, 0:2] = True  # area 2, lower left
    m[2:4, 2:4] = True  # area 4
    cs = extract_contours(BinaryMap(m, "u"))
    assert [c.area for c in cs] == [4, 2, 2]
    assert tuple(cs[1].boundary[0]) == (6, 0)
    assert [c.area for c in extract_contours(BinaryMap(m, "u"), min_area=3)] == [4]


def test_ring_traces_outer_border_only():
    m = np.zeros((7, 7), bool)
    m[1:6, 1:6] = True
    m[3, 3] = False
    (c,) = extract_contours(BinaryMap(m, "u"))
    assert c.area == 24
    assert len(c.boundary) == 16
    assert (3, 2) not in {tuple(p) for p in c.boundary[:, ::-1]}


def test_isolated_pixel_border():
    m = np.zeros((3, 3), bool)
    m[1, 1] = True
    assert trace_outer_border(m, (1, 1)).tolist() == [[1, 1]]


def _blob(shape, xs, ys):
    m = np.zeros(shape, bool)
    m[ys[0]:ys[1] + 1, xs[0]:xs[1] + 1] = True
    return extract_contours(BinaryMap(m, "u"))


def test_fit_obstacles_pinhole_arithmetic():
    calib = StereoCalibration(0.2, 200.0, 100.0, 50.0, 32)
    uc = _blob((32, 100), (20, 40), (20, 20))  # U-map: rows are d
    vc = _blob((80, 32), (20, 20), (10, 50))  # V-map: columns are d
    (ob,) = fit_obstacles(uc, vc, calib)
    assert (ob.u_min, ob.u_max, ob.v_min, ob.v_max) == (20, 40, 10, 50)
    assert ob.depth_m == pytest.approx(2.0)
    assert ob.width_m == pytest.approx(0.2)
    assert ob.height_m == pytest.approx(0.4)
    assert ob.depth_m * ob.disparity == pytest.approx(calib.focal_px * calib.baseline_m)


def test_fit_obstacles_needs_overlap():
    calib = StereoCalibration(0.2, 200.0, 100.0, 50.0, 40)
    uc = _blob((40, 100), (20, 40), (30, 30))
    vc = _blob((80, 40), (5, 10), (10, 50))
    assert fit_obstacles(uc, vc, calib) == []


def test_fit_obstacles_prefers_largest_overlap():
    calib = StereoCalibration(0.2, 200.0, 100.0, 50.0, 40)
    uc = _blob((40, 100), (20, 40), (10, 14))
    m = np.zeros((80, 40), bool)
    m[0:5, 9:12] = True  # overlaps d 10..11
    m[30:60, 12:20] = True  # overlaps d 12..14, more bins
    vc = extract_contours(BinaryMap(m, "v"))
    (ob,) = fit_obstacles(uc, vc, calib)
    assert (ob.v_min, ob.v_max) == (30, 59)


def test_detect_frontal_square():
    H, W = 120, 160
    vals = np.zeros((H, W), int)
    valid = np.zeros((H, W), bool)
    vals[30:71, 60:101] = 20
    valid[30:71, 60:101] = True
    calib = StereoCalibration(0.2, 200.0, 80.0, 60.0, 32)
    det = detect_obstacles(DisparityMap(vals, valid, 32), calib)
    (ob,) = det.obstacles
    assert abs(ob.u_min - 60) <= 1 and abs(ob.u_max - 100) <= 1
    assert abs(ob.v_min - 30) <= 1 and abs(ob.v_max - 70) <= 1
    assert ob.disparity == pytest.approx(20.0)
    assert format_obstacle(ob) == "obstacle d=20.00 u=[60,100] v=[30,70] depth=2.000"


def test_annotate_layout():
    H, W, D = 30, 40, 16
    vals = np.full((H, W), 8)
    det = detect_obstacles(DisparityMap(vals, np.ones((H, W), bool), D), StereoCalibration(0.2, 20.0, 20, 15, D))
    img = annotate(DisparityMap(vals, np.ones((H, W), bool), D), det, D)
    assert img.shape == (D + H, W + D, 3) and img.dtype == np.uint8


def test_detection_config_defaults():
    cfg = DetectionConfig()
    assert (cfg.count_threshold, cfg.dilate_radius, cfg.blur_sigma, cfg.d_roi_min) == (12, 1, 1.0, 2)
