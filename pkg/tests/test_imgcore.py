import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as npst

import cv2

from flashgp.imgcore import (
    ImageIOError,
    IlluminationMap,
    LinearImage,
    PixelMask,
    ScalarMap,
    load_image,
    load_mask,
    log_kernel,
    log_transform,
    mexican_hat,
    read_pfm,
    read_png16,
    save_image,
    save_mask,
    write_pfm,
    write_png16,
)


def constant_image(r, g, b, h=8, w=8):
    return LinearImage(np.broadcast_to(np.array([r, g, b], dtype=float), (h, w, 3)).copy())


class TestLinearImage:
    def test_accepts_values_above_one(self):
        img = LinearImage(np.full((2, 2, 3), 1.7))
        assert img.data.max() == 1.7

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            LinearImage(np.full((2, 2, 3), -0.1))

    def test_rejects_nan(self):
        bad = np.ones((2, 2, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            LinearImage(bad)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            LinearImage(np.ones((2, 2)))
        with pytest.raises(ValueError):
            LinearImage(np.ones((0, 2, 3)))

    def test_immutable(self):
        img = constant_image(0.5, 0.5, 0.5)
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0

    def test_scaled(self):
        img = constant_image(0.25, 0.5, 0.75)
        assert np.allclose(img.scaled(2.0).data, img.data * 2)


class TestScalarMap:
    def test_mask_shape_must_match(self):
        with pytest.raises(ValueError, match="mask dimensions"):
            ScalarMap(np.zeros((3, 3)), np.ones((2, 3), dtype=bool))

    def test_nan_allowed_only_at_invalid(self):
        data = np.zeros((2, 2))
        data[0, 0] = np.nan
        mask = np.array([[False, True], [True, True]])
        ScalarMap(data, mask)
        with pytest.raises(ValueError):
            ScalarMap(data, np.ones((2, 2), dtype=bool))


class TestIlluminationMap:
    def test_requires_unit_vectors(self):
        data = np.full((2, 2, 3), 0.5)
        with pytest.raises(ValueError, match="unit length"):
            IlluminationMap(data, np.ones((2, 2), dtype=bool))

    def test_invalid_pixels_unconstrained(self):
        data = np.zeros((2, 2, 3))
        IlluminationMap(data, np.zeros((2, 2), dtype=bool))

    def test_constant(self):
        imap = IlluminationMap.constant(np.array([2.0, 2.0, 2.0]), 3, 4)
        assert imap.data.shape == (3, 4, 3)
        assert np.allclose(imap.data, 1 / math.sqrt(3))


class TestLogTransform:
    def test_unity_maps_to_zero(self):
        maps = log_transform(constant_image(1.0, 1.0, 1.0))
        for m in maps:
            assert np.all(m.data == 0.0)
            assert m.mask.all()

    def test_dark_pixels_clamped_and_flagged(self):
        maps = log_transform(constant_image(0.0, 0.0, 0.0), eps=1e-4)
        for m in maps:
            assert np.all(m.data == math.log(1e-4))
            assert not m.mask.any()

    def test_exact_values(self):
        maps = log_transform(constant_image(0.2, 0.4, 0.8), eps=1e-4)
        for m, v in zip(maps, (0.2, 0.4, 0.8)):
            assert np.all(m.data == math.log(v))
            assert m.mask.all()

    def test_one_dark_channel_invalidates_pixel(self):
        maps = log_transform(constant_image(0.5, 1e-6, 0.5), eps=1e-4)
        assert not maps[0].mask.any()

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError, match="eps"):
            log_transform(constant_image(1, 1, 1), eps=0.0)

    @given(
        st.floats(min_value=1e-3, max_value=10.0),
        st.floats(min_value=1e-3, max_value=10.0),
    )
    def test_monotone_per_channel(self, a, b):
        lo, hi = sorted((a, b))
        maps_lo = log_transform(constant_image(lo, lo, lo))
        maps_hi = log_transform(constant_image(hi, hi, hi))
        assert maps_lo[0].data[0, 0] <= maps_hi[0].data[0, 0]


def reference_log_kernel(sigma):
    # independent implementation of the kernel formula
    h = math.ceil(3 * sigma)
    k = np.empty((2 * h + 1, 2 * h + 1))
    for i, y in enumerate(range(-h, h + 1)):
        for j, x in enumerate(range(-h, h + 1)):
            r2 = x * x + y * y
            k[i, j] = (r2 - 2 * sigma**2) / sigma**4 * math.exp(-r2 / (2 * sigma**2))
    return k - k.mean()


class TestMexicanHat:
    def test_annihilates_constants(self):
        m = ScalarMap(np.full((12, 12), 3.7), np.ones((12, 12), dtype=bool))
        out = mexican_hat(m, sigma=0.5)
        assert np.abs(out.data[out.mask]).max() < 1e-9
        # mask eroded by the half-width on each side
        assert out.mask.sum() == (12 - 4) ** 2

    def test_linearity_and_constant_shift(self):
        rng = np.random.default_rng(0)
        base = rng.uniform(0, 1, (16, 16))
        mask = np.ones((16, 16), dtype=bool)
        f_base = mexican_hat(ScalarMap(base, mask), 0.5)
        f_affine = mexican_hat(ScalarMap(2.5 * base + 7.0, mask), 0.5)
        diff = f_affine.data[f_affine.mask] - 2.5 * f_base.data[f_base.mask]
        assert np.abs(diff).max() < 1e-9

    def test_impulse_response_is_the_analytic_kernel(self):
        sigma = 0.5
        h = math.ceil(3 * sigma)
        data = np.zeros((21, 21))
        data[10, 10] = 1.0
        out = mexican_hat(ScalarMap(data, np.ones_like(data, dtype=bool)), sigma)
        window = out.data[10 - h : 10 + h + 1, 10 - h : 10 + h + 1]
        assert np.allclose(window, reference_log_kernel(sigma), atol=1e-12)
        outside = out.data.copy()
        outside[10 - h : 10 + h + 1, 10 - h : 10 + h + 1] = 0.0
        assert np.abs(outside).max() < 1e-12

    def test_kernel_zero_sum(self):
        for sigma in (0.5, 1.0, 2.3):
            assert abs(log_kernel(sigma).sum()) < 1e-12

    def test_too_small_raises(self):
        m = ScalarMap(np.zeros((3, 3)), np.ones((3, 3), dtype=bool))
        with pytest.raises(ValueError, match="image too small for filter support"):
            mexican_hat(m, sigma=1.0)  # kernel is 7x7

    def test_mask_erosion_tracks_input_mask(self):
        mask = np.ones((12, 12), dtype=bool)
        mask[5, 5] = False
        out = mexican_hat(ScalarMap(np.zeros((12, 12)), mask), 0.5)
        # the invalid pixel poisons its whole 5x5 neighborhood
        assert not out.mask[3:8, 3:8].any()
        assert out.mask[8, 8]


class TestPFM:
    def test_roundtrip_2x2(self, tmp_path):
        arr = np.array(
            [[[0.1, 0.2, 0.3], [1.5, 0.0, 2.0]], [[3.25, 0.5, 0.75], [0.125, 9.0, 1e-7]]],
            dtype=np.float32,
        )
        p = tmp_path / "a.pfm"
        write_pfm(p, arr)
        back = read_pfm(p)
        assert back.dtype == np.float32
        assert back.tobytes() == arr.tobytes()

    def test_grayscale_roundtrip(self, tmp_path):
        arr = np.arange(12, dtype=np.float32).reshape(3, 4)
        p = tmp_path / "g.pfm"
        write_pfm(p, arr)
        assert read_pfm(p).tobytes() == arr.tobytes()

    @given(
        arr=npst.arrays(
            np.float32,
            (3, 5, 3),
            elements=st.floats(0, 1e6, allow_nan=False, width=32),
        )
    )
    def test_roundtrip_bit_exact(self, tmp_path_factory, arr):
        p = tmp_path_factory.mktemp("pfm") / "x.pfm"
        write_pfm(p, arr)
        assert read_pfm(p).tobytes() == arr.tobytes()

    def test_rejects_non_pfm(self, tmp_path):
        p = tmp_path / "junk.pfm"
        p.write_bytes(b"P6\n2 2\n255\n" + b"\0" * 12)
        with pytest.raises(ImageIOError, match="not a PFM"):
            read_pfm(p)

    def test_rejects_truncated_payload(self, tmp_path):
        p = tmp_path / "short.pfm"
        p.write_bytes(b"PF\n4 4\n-1.0\n" + b"\0" * 10)
        with pytest.raises(ImageIOError, match="does not match header"):
            read_pfm(p)

    def test_rejects_zero_scale(self, tmp_path):
        p = tmp_path / "scale.pfm"
        p.write_bytes(b"Pf\n1 1\n0.0\n" + b"\0" * 4)
        with pytest.raises(ImageIOError, match="scale"):
            read_pfm(p)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ImageIOError, match="nope.pfm"):
            read_pfm(tmp_path / "nope.pfm")

    def test_big_endian_scale(self, tmp_path):
        arr = np.array([[1.5, -2.25]], dtype=">f4")
        p = tmp_path / "be.pfm"
        p.write_bytes(b"Pf\n2 1\n1.0\n" + arr.tobytes())
        back = read_pfm(p)
        assert np.array_equal(back, np.array([[1.5, -2.25]], dtype=np.float32))


class TestPNG16:
    def test_full_scale_reads_as_one(self, tmp_path):
        p = tmp_path / "w.png"
        cv2.imwrite(str(p), np.full((2, 2), 65535, dtype=np.uint16))
        assert np.all(read_png16(p) == 1.0)

    def test_midpoint_division(self, tmp_path):
        p = tmp_path / "m.png"
        cv2.imwrite(str(p), np.full((2, 2), 32768, dtype=np.uint16))
        assert np.all(read_png16(p) == 32768 / 65535)

    def test_roundtrip_after_quantization(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.uniform(0, 1, (4, 4, 3))
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        write_png16(p1, arr)
        first = read_png16(p1)
        write_png16(p2, first)
        assert np.array_equal(read_png16(p2), first)

    def test_channel_order_preserved(self, tmp_path):
        arr = np.zeros((1, 1, 3))
        arr[0, 0] = [1.0, 0.5, 0.0]
        p = tmp_path / "c.png"
        write_png16(p, arr)
        back = read_png16(p)
        assert back[0, 0, 0] == 1.0 and back[0, 0, 2] == 0.0

    def test_rejects_8bit(self, tmp_path):
        p = tmp_path / "8bit.png"
        cv2.imwrite(str(p), np.full((2, 2), 128, dtype=np.uint8))
        with pytest.raises(ImageIOError, match="unsupported bit depth"):
            read_png16(p)


class TestImageDispatch:
    def test_pfm_roundtrip(self, tmp_path):
        img = constant_image(0.2, 0.4, 0.8, 3, 5)
        p = tmp_path / "img.pfm"
        save_image(img, p)
        back = load_image(p)
        assert np.array_equal(back.data, img.data.astype(np.float32).astype(np.float64))

    def test_png_roundtrip(self, tmp_path):
        img = constant_image(0.25, 0.5, 1.0, 3, 5)
        p = tmp_path / "img.png"
        save_image(img, p)
        back = load_image(p)
        assert np.allclose(back.data, img.data, atol=1 / 65535)

    def test_grayscale_pfm_replicates_channels(self, tmp_path):
        p = tmp_path / "g.pfm"
        write_pfm(p, np.full((2, 2), 0.5, dtype=np.float32))
        img = load_image(p)
        assert img.data.shape == (2, 2, 3)
        assert np.all(img.data == 0.5)

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(ImageIOError, match="format"):
            load_image(tmp_path / "img.tiff")

    def test_negative_pfm_rejected_with_path(self, tmp_path):
        p = tmp_path / "neg.pfm"
        write_pfm(p, np.full((2, 2, 3), -1.0, dtype=np.float32))
        with pytest.raises(ImageIOError, match="neg.pfm"):
            load_image(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageIOError, match="missing.png"):
            load_image(tmp_path / "missing.png")


class TestMaskIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        mask = PixelMask(rng.uniform(0, 1, (6, 7)) > 0.5)
        p = tmp_path / "mask.png"
        save_mask(p, mask)
        assert np.array_equal(load_mask(p).data, mask.data)

    def test_full(self):
        assert PixelMask.full(3, 4).data.all()
