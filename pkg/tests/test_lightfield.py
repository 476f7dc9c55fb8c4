import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfsr.errors import RangeError, ShapeError
from lfsr.lightfield import (
    LightField,
    downsample_angular,
    downsample_spatial,
    extract_perspective,
    lf_from_lenslet_mosaic,
    lf_to_lenslet_mosaic,
    merge_channels,
    perspectives_to_lf,
    split_channels,
)
from lfsr.synthetic import random_lightfield

MOSAIC_4X4 = np.arange(1, 17, dtype=np.float64).reshape(4, 4) / 16


def test_mosaic_4x4_lenslet_layout():
    lf = lf_from_lenslet_mosaic(MOSAIC_4X4, 2)
    assert (lf.spatial_h, lf.spatial_w, lf.angular, lf.channels) == (2, 2, 2, 1)
    np.testing.assert_array_equal(lf.lenslet(0, 0).data, np.array([[1, 2], [5, 6]]) / 16)
    np.testing.assert_array_equal(lf.lenslet(1, 1).data, np.array([[11, 12], [15, 16]]) / 16)


def test_mosaic_index_law():
    rng = np.random.default_rng(5)
    a, h, w = 3, 4, 2
    mosaic = rng.random((3, h * a, w * a))
    lf = lf_from_lenslet_mosaic(mosaic, a)
    for c in range(3):
        for s in range(h):
            for t in range(w):
                for u in range(a):
                    for v in range(a):
                        assert lf.data[c, s, t, u, v] == mosaic[c, s * a + u, t * a + v]


def test_constant_mosaic_gives_constant_lenslets():
    lf = lf_from_lenslet_mosaic(np.full((6, 9), 0.5), 3)
    assert np.all(lf.data == 0.5)


def test_single_lenslet_mosaic():
    m = np.random.default_rng(0).random((5, 5))
    lf = lf_from_lenslet_mosaic(m, 5)
    assert (lf.spatial_h, lf.spatial_w) == (1, 1)
    np.testing.assert_array_equal(lf.lenslet(0, 0).data, m)
    np.testing.assert_array_equal(lf_to_lenslet_mosaic(lf)[0], m)


def test_mosaic_round_trip_examples():
    np.testing.assert_array_equal(lf_to_lenslet_mosaic(lf_from_lenslet_mosaic(MOSAIC_4X4, 2))[0], MOSAIC_4X4)
    lf = random_lightfield(3, 5, 2, seed=1)
    assert lf_from_lenslet_mosaic(lf_to_lenslet_mosaic(lf), 2) == lf


def test_mosaic_not_divisible_names_axis():
    with pytest.raises(ShapeError, match="width"):
        lf_from_lenslet_mosaic(np.zeros((4, 5)), 2)
    with pytest.raises(ShapeError, match="height"):
        lf_from_lenslet_mosaic(np.zeros((5, 4)), 2)


def test_out_of_range_values_rejected():
    with pytest.raises(RangeError):
        LightField(np.full((1, 1, 1, 2, 2), 1.5))
    with pytest.raises(RangeError):
        LightField(np.full((1, 1, 1, 2, 2), -0.1))


def test_non_square_angular_rejected():
    with pytest.raises(ShapeError):
        LightField(np.zeros((1, 2, 2, 2, 3)))


def test_lightfield_is_immutable():
    lf = random_lightfield(2, 2, 2)
    with pytest.raises(ValueError):
        lf.data[0, 0, 0, 0, 0] = 0.0


def test_extract_constant_and_index_fixture():
    a = 4
    data = np.zeros((1, 3, 5, a, a))
    for u in range(a):
        for v in range(a):
            data[0, :, :, u, v] = (u * a + v) / (a * a)
    lf = LightField(data)
    for u in range(a):
        for v in range(a):
            img = extract_perspective(lf, u, v)
            assert img.data.shape == (1, 3, 5)
            assert np.all(img.data == (u * a + v) / (a * a))


def test_extract_a1_is_identity():
    img = np.random.default_rng(2).random((1, 4, 6))
    lf = LightField(img[:, :, :, None, None])
    np.testing.assert_array_equal(extract_perspective(lf, 0, 0).data, img)


def test_extract_out_of_range():
    with pytest.raises(ShapeError):
        extract_perspective(random_lightfield(2, 2, 3), 3, 0)


def test_perspectives_round_trip_7x7():
    lf = random_lightfield(4, 4, 7, seed=3)
    views = [[extract_perspective(lf, u, v) for v in range(7)] for u in range(7)]
    assert perspectives_to_lf(views) == lf


def test_perspectives_missing_view_reported():
    lf = random_lightfield(2, 2, 2)
    views = {(u, v): extract_perspective(lf, u, v) for u in range(2) for v in range(2) if (u, v) != (1, 0)}
    with pytest.raises(ShapeError, match=r"u=1, v=0"):
        perspectives_to_lf(views)


def test_perspectives_inconsistent_dims():
    views = [[np.zeros((1, 2, 2)), np.zeros((1, 2, 3))], [np.zeros((1, 2, 2)), np.zeros((1, 2, 2))]]
    with pytest.raises(ShapeError):
        perspectives_to_lf(views)


def test_downsample_angular_keeps_even_indices():
    a = 14
    data = np.broadcast_to((np.arange(a)[:, None] / 16.0), (1, 2, 2, a, a)).copy()
    low = downsample_angular(LightField(data))
    assert low.angular == 7
    np.testing.assert_array_equal(low.data[0, 0, 0, :, 0] * 16, [0, 2, 4, 6, 8, 10, 12])


def test_downsample_angular_rejects_odd():
    with pytest.raises(ShapeError):
        downsample_angular(random_lightfield(2, 2, 7))


def test_downsample_spatial_tags():
    h = w = 4
    tags = (np.arange(h)[:, None] * w + np.arange(w)[None, :]) / 16.0
    data = np.broadcast_to(tags[None, :, :, None, None], (1, h, w, 2, 2)).copy()
    low = downsample_spatial(LightField(data))
    assert sorted(set((low.data[0, :, :, 0, 0] * 16).astype(int).ravel())) == [0, 2, 8, 10]


def test_downsample_spatial_paper_grid_size():
    # shape arithmetic only; a 374x540 field is too large for a unit test
    lf = LightField(np.zeros((1, 374, 540, 1, 1)))
    low = downsample_spatial(lf)
    assert (low.spatial_h, low.spatial_w) == (187, 270)


def test_downsample_spatial_odd_keeps_ceil():
    low = downsample_spatial(random_lightfield(5, 7, 2))
    assert (low.spatial_h, low.spatial_w) == (3, 4)


def test_downsample_constant_field():
    lf = LightField(np.full((3, 4, 4, 4, 4), 0.3))
    assert np.all(downsample_angular(lf).data == 0.3)
    assert np.all(downsample_spatial(lf).data == 0.3)


def test_split_merge():
    data = np.stack([np.full((2, 3, 2, 2), c / 3) for c in range(3)])
    parts = split_channels(LightField(data))
    assert len(parts) == 3
    for c, p in enumerate(parts):
        assert p.channels == 1 and np.all(p.data == c / 3)
    assert merge_channels(parts) == LightField(data)


def test_split_rejects_grayscale():
    with pytest.raises(ShapeError):
        split_channels(random_lightfield(2, 2, 2, channels=1))


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 6), w=st.integers(1, 6), a=st.integers(1, 5), c=st.sampled_from([1, 3]),
       seed=st.integers(0, 2**16))
def test_round_trips_property(h, w, a, c, seed):
    lf = random_lightfield(h, w, a, channels=c, seed=seed)
    assert lf_from_lenslet_mosaic(lf_to_lenslet_mosaic(lf), a) == lf
    views = {(u, v): extract_perspective(lf, u, v) for u in range(a) for v in range(a)}
    assert perspectives_to_lf(views) == lf
    if c == 3:
        assert merge_channels(split_channels(lf)) == lf
