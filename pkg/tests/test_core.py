import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diagforge import (
    BinaryMask,
    DatasetBundle,
    DimensionError,
    ImageGrid,
    LabeledSample,
    ValidationError,
    derive_rng,
    load_mask_png,
    load_png,
    quantize8,
    resize_image,
    resize_mask,
    save_mask_png,
    save_png,
    validate_pair,
)
from diagforge.core import derive_torch_seed, from_internal, resize_raster, to_internal


def _img(h=8, w=8, c=1, value=0.5):
    return ImageGrid(np.full((h, w, c), value))


def test_image_grid_accepts_2d_as_single_channel():
    g = ImageGrid(np.zeros((8, 10)))
    assert g.data.shape == (8, 10, 1)
    assert g.channels == 1 and g.shape == (8, 10)


def test_image_grid_rejects_bad_shapes_and_ranges():
    with pytest.raises(DimensionError):
        ImageGrid(np.zeros((8,)))
    with pytest.raises(ValidationError):
        ImageGrid(np.zeros((8, 8, 2)))
    with pytest.raises(DimensionError):
        ImageGrid(np.zeros((7, 8)))
    with pytest.raises(ValidationError):
        ImageGrid(np.full((8, 8), 1.0001))
    with pytest.raises(ValidationError):
        ImageGrid(np.full((8, 8), -0.0001))
    nan = np.zeros((8, 8))
    nan[0, 0] = np.nan
    with pytest.raises(ValidationError):
        ImageGrid(nan)


def test_image_grid_is_immutable_and_equality_is_exact():
    g = _img()
    with pytest.raises(ValueError):
        g.data[0, 0, 0] = 0.1
    h = ImageGrid(g.data.copy())
    assert g == h
    almost = np.array(g.data)
    almost[0, 0, 0] += 1e-15
    assert g != ImageGrid(almost)


def test_plane_averages_channels():
    arr = np.zeros((8, 8, 3))
    arr[:, :, 0] = 0.9
    g = ImageGrid(arr)
    assert np.allclose(g.plane(), 0.3)


def test_binary_mask_validation_and_counts():
    m = BinaryMask(np.eye(8, dtype=np.uint8))
    assert m.count() == 8
    assert m.area_fraction() == pytest.approx(8 / 64)
    assert not m.is_empty()
    assert BinaryMask(np.zeros((8, 8), np.uint8)).is_empty()
    with pytest.raises(ValidationError):
        BinaryMask(np.full((8, 8), 2, np.uint8))
    with pytest.raises(ValidationError):
        BinaryMask(np.full((8, 8), 0.5))
    with pytest.raises(DimensionError):
        BinaryMask(np.zeros((8, 8, 1), np.uint8))


def test_validate_pair_checks_shapes():
    validate_pair(_img(8, 8), BinaryMask(np.zeros((8, 8), np.uint8)))
    with pytest.raises(DimensionError):
        validate_pair(_img(8, 8), BinaryMask(np.zeros((8, 9), np.uint8)))


def test_labeled_sample_origin_rules():
    img = _img()
    mask = BinaryMask(np.ones((8, 8), np.uint8))
    LabeledSample(image=img, label=0, origin="real", sample_id="a")
    LabeledSample(image=img, label=1, origin="generated", mask=mask, sample_id="b")
    with pytest.raises(ValidationError):
        LabeledSample(image=img, label=1, origin="generated", sample_id="c")
    with pytest.raises(ValidationError):
        LabeledSample(image=img, label=2, origin="real")
    with pytest.raises(ValidationError):
        LabeledSample(image=img, label=0, origin="downloaded")


def test_bundle_rejects_mislabeled_and_overlapping_ids():
    img = _img()
    neg = LabeledSample(image=img, label=0, sample_id="n0")
    pos = LabeledSample(image=img, label=1, sample_id="p0")
    with pytest.raises(ValidationError):
        DatasetBundle(negatives_train=(pos,))
    with pytest.raises(ValidationError):
        DatasetBundle(test_pos=(neg,))
    with pytest.raises(ValidationError):
        DatasetBundle(negatives_train=(neg,), test_neg=(neg,))
    b = DatasetBundle(negatives_train=(neg,), test_pos=(pos,))
    assert b.counts()["negatives_train"] == 1
    b2 = b.with_augmented([LabeledSample(image=img, label=1, origin="generated",
                                         mask=BinaryMask(np.ones((8, 8), np.uint8)),
                                         sample_id="g0")])
    assert b2.counts()["augmented"] == 1 and b.counts()["augmented"] == 0


# resize_raster oracle: bilinear 2x2 -> 3x3 with PIL's align-corners-false
# convention has an exact closed form for the center pixel (mean of corners).
def test_resize_raster_center_of_2x2():
    arr = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = resize_raster(arr, (3, 3))
    assert out.shape == (3, 3)
    assert out[1, 1] == pytest.approx(0.5, abs=1e-7)


def test_resize_raster_identity_is_exact():
    rng = np.random.default_rng(0)
    arr = rng.uniform(size=(13, 9))
    out = resize_raster(arr, (13, 9))
    assert np.array_equal(out, arr)


def test_resize_raster_preserves_constants():
    # bilinear interpolation of a constant field is that constant
    arr = np.full((6, 11), 0.37)
    out = resize_raster(arr, (17, 5))
    assert np.allclose(out, 0.37, atol=1e-6)


def test_resize_raster_allows_tiny_targets():
    arr = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = resize_raster(arr, (1, 1))
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(0.5, abs=1e-7)


def test_resize_image_enforces_min_side_and_clips():
    img = _img(16, 16)
    with pytest.raises(DimensionError):
        resize_image(img, (4, 16))
    out = resize_image(img, (8, 24))
    assert out.shape == (8, 24)
    assert resize_image(img, (16, 16)) is img


def test_resize_mask_nearest_keeps_binarity():
    m = BinaryMask((np.arange(64).reshape(8, 8) % 2).astype(np.uint8))
    out = resize_mask(m, (11, 5))
    assert set(np.unique(out.data)) <= {0, 1}
    up = resize_mask(m, (16, 16))
    # 2x nearest upsample replicates each pixel into a 2x2 block
    assert np.array_equal(up.data[::2, ::2], m.data)


def test_quantize8_is_idempotent_and_on_grid():
    rng = np.random.default_rng(3)
    img = ImageGrid(rng.uniform(size=(8, 8, 1)))
    q = quantize8(img)
    assert np.array_equal(q.data, quantize8(q).data)
    assert np.allclose(q.data * 255.0, np.round(q.data * 255.0), atol=1e-9)


def test_png_round_trip_is_lossless_on_the_8bit_grid(tmp_path):
    rng = np.random.default_rng(4)
    img = quantize8(ImageGrid(rng.uniform(size=(16, 12, 1))))
    save_png(img, tmp_path / "x.png")
    back = load_png(tmp_path / "x.png", channels=1)
    assert back == img


def test_png_round_trip_rgb(tmp_path):
    rng = np.random.default_rng(5)
    img = quantize8(ImageGrid(rng.uniform(size=(9, 8, 3))))
    save_png(img, tmp_path / "c.png")
    assert load_png(tmp_path / "c.png") == img


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    m = BinaryMask((rng.uniform(size=(21, 17)) > 0.7).astype(np.uint8))
    save_mask_png(m, tmp_path / "m.png")
    assert load_mask_png(tmp_path / "m.png") == m


def test_internal_range_round_trip():
    img = _img(value=0.25)
    x = to_internal(img)
    assert np.allclose(x, -0.5)
    assert np.allclose(from_internal(x), 0.25)
    assert from_internal(np.array([-3.0, 3.0])).tolist() == [0.0, 1.0]


def test_derive_rng_streams_are_stable_and_distinct():
    a1 = derive_rng(7, 0, 3).uniform(size=4)
    a2 = derive_rng(7, 0, 3).uniform(size=4)
    b = derive_rng(7, 0, 4).uniform(size=4)
    c = derive_rng(8, 0, 3).uniform(size=4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_derive_torch_seed_is_63_bit_and_stable():
    s = derive_torch_seed(5, 1, 2)
    assert s == derive_torch_seed(5, 1, 2)
    assert 0 <= s < 2**63
    assert s != derive_torch_seed(5, 1, 3)


@settings(max_examples=30, deadline=None)
@given(
    h=st.integers(8, 40),
    w=st.integers(8, 40),
    th=st.integers(8, 40),
    tw=st.integers(8, 40),
    seed=st.integers(0, 10_000),
)
def test_resize_image_stays_in_range(h, w, th, tw, seed):
    rng = np.random.default_rng(seed)
    img = ImageGrid(rng.uniform(size=(h, w, 1)))
    out = resize_image(img, (th, tw))
    assert out.shape == (th, tw)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
