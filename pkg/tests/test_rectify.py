import numpy as np
import pytest

from oracles import rectify as rectify_oracle
from stereoavoid.imgio import GrayImage
from stereoavoid.rectify import (
    BufferDepthError,
    RectificationMaps,
    StereoCalibration,
    apply_rectification,
    apply_rectification_streaming,
    iter_rows,
    load_rmap,
    rectify_streaming,
    save_rmap,
)


def random_maps(rng, W, H, n):
    ys = np.arange(H)[:, None]
    my = np.clip(ys + rng.integers(-n, n + 1, (H, W)), 0, H - 1)
    mx = rng.integers(0, W, (H, W))
    return RectificationMaps(mx, my)


def test_identity_is_passthrough(rng):
    img = GrayImage(rng.integers(0, 256, (9, 13), dtype=np.uint8))
    maps = RectificationMaps.identity(13, 9)
    assert apply_rectification(img, maps).data.tobytes() == img.data.tobytes()
    assert rectify_streaming(img, maps, depth=0).data.tobytes() == img.data.tobytes()


def test_row_shift_on_stripes():
    H, W = 12, 5
    stripes = np.repeat((np.arange(H) * 20)[:, None], W, axis=1).astype(np.uint8)
    ys, xs = np.mgrid[0:H, 0:W]
    maps = RectificationMaps(xs, np.minimum(ys + 2, H - 1))
    out = apply_rectification(GrayImage(stripes), maps).data
    assert np.array_equal(out[:H - 2], stripes[2:])
    assert (out[H - 2:] == stripes[H - 1]).all()


def test_gather_matches_oracle(rng):
    for _ in range(20):
        H, W = rng.integers(1, 20, 2)
        img = rng.integers(0, 256, (H, W), dtype=np.uint8)
        maps = RectificationMaps(rng.integers(0, W, (H, W)), rng.integers(0, H, (H, W)))
        expected = rectify_oracle(img, maps.mx, maps.my)
        assert np.array_equal(apply_rectification(GrayImage(img), maps).data, expected)


def test_streaming_equals_random_access(rng):
    for _ in range(50):
        H, W = int(rng.integers(1, 24)), int(rng.integers(1, 24))
        img = GrayImage(rng.integers(0, 256, (H, W), dtype=np.uint8))
        maps = random_maps(rng, W, H, 4)
        ref = apply_rectification(img, maps)
        assert rectify_streaming(img, maps, depth=4).data.tobytes() == ref.data.tobytes()


def test_streaming_is_lazy():
    H, W = 10, 3
    pulled = []

    def rows():
        for y in range(H):
            pulled.append(y)
            yield np.full(W, y, np.uint8)

    maps = RectificationMaps.identity(W, H)
    gen = apply_rectification_streaming(rows(), maps, depth=2)
    next(gen)
    # first output row needs source rows 0..2 only
    assert pulled == [0, 1, 2]


def test_buffer_depth_violation():
    H, W, n = 10, 4, 2
    ys, xs = np.mgrid[0:H, 0:W]
    my = ys.copy()
    my[6, 3] = 6 - (n + 1)
    maps = RectificationMaps(xs, my)
    img = GrayImage(np.zeros((H, W), np.uint8))
    with pytest.raises(BufferDepthError) as e:
        rectify_streaming(img, maps, depth=n)
    assert (e.value.x, e.value.y) == (3, 6)
    assert "(3,6)" in str(e.value)


def test_out_of_bounds_entry():
    maps = RectificationMaps(np.array([[0, 5]]), np.array([[0, 0]]))
    with pytest.raises(IndexError):
        apply_rectification(GrayImage(np.zeros((1, 2), np.uint8)), maps)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_rectification(GrayImage(np.zeros((3, 3), np.uint8)), RectificationMaps.identity(2, 3))


def test_constant_image_stays_constant(rng):
    img = GrayImage(np.full((8, 8), 77, np.uint8))
    maps = random_maps(rng, 8, 8, 3)
    assert (apply_rectification(img, maps).data == 77).all()


def test_rmap_round_trip(tmp_path, rng):
    maps = random_maps(rng, 17, 11, 3)
    p = tmp_path / "m.rmap"
    save_rmap(maps, p)
    raw = p.read_bytes()
    assert len(raw) == 8 + 4 * 17 * 11
    assert raw[:8] == (17).to_bytes(4, "little") + (11).to_bytes(4, "little")
    back = load_rmap(p)
    assert np.array_equal(back.mx, maps.mx) and np.array_equal(back.my, maps.my)


def test_calibration_invariants():
    c = StereoCalibration(0.2, 200.0, 100.0, 50.0, 60)
    assert c.depth(8) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        StereoCalibration(0.0, 200.0, 0, 0, 60)
    with pytest.raises(ValueError):
        StereoCalibration(0.2, 200.0, 0, 0, 257)


def test_iter_rows():
    img = GrayImage(np.arange(6, dtype=np.uint8).reshape(2, 3))
    assert [r.tolist() for r in iter_rows(img)] == [[0, 1, 2], [3, 4, 5]]
