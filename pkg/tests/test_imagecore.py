import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from illumfuse.errors import FormatError, ShapeError
from illumfuse.imagecore import (
    load_image,
    quantize256,
    rgb_to_ycbcr,
    save_image,
    sobel_gradient,
    ycbcr_to_rgb,
)

from oracles import sobel_oracle as _sobel_oracle


def _write_gray(path, values, mode="L"):
    Image.fromarray(np.asarray(values, dtype=np.uint8 if mode == "L" else np.uint16)).save(path)


class TestLoadSave:
    def test_8bit_scaling(self, tmp_path):
        p = tmp_path / "g.png"
        _write_gray(p, [[0, 128, 255]])
        img = load_image(p)
        assert img.shape == (1, 3, 1)
        assert img[0, 0, 0] == 0.0
        assert img[0, 2, 0] == 1.0
        assert img[0, 1, 0] == pytest.approx(128 / 255)
        assert img[0, 1, 0] == pytest.approx(0.50196, abs=1e-5)

    def test_16bit_scaling(self, tmp_path):
        p = tmp_path / "g16.png"
        Image.fromarray(np.array([[0, 65535]], dtype=np.uint16)).save(p)
        img = load_image(p)
        np.testing.assert_allclose(img[0, :, 0], [0.0, 1.0])

    def test_rgb_and_jpeg(self, tmp_path):
        rgb = np.zeros((4, 5, 3), dtype=np.uint8)
        rgb[..., 0] = 255
        Image.fromarray(rgb).save(tmp_path / "c.png")
        Image.fromarray(rgb).save(tmp_path / "c.jpg", quality=100)
        assert load_image(tmp_path / "c.png").shape == (4, 5, 3)
        jpg = load_image(tmp_path / "c.jpg")
        assert jpg.shape == (4, 5, 3)
        assert jpg[..., 0].min() > 0.95

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_undecodable(self, tmp_path):
        p = tmp_path / "bad.png"
        p.write_bytes(b"definitely not a png")
        with pytest.raises(FormatError):
            load_image(p)

    @pytest.mark.parametrize("value,byte", [(1.0, 255), (0.0, 0), (0.5, 128)])
    def test_save_quantisation(self, tmp_path, value, byte):
        p = tmp_path / "q.png"
        save_image(np.full((2, 2, 1), value), p)
        assert np.asarray(Image.open(p))[0, 0] == byte

    def test_quantisation_cells(self, tmp_path):
        # scalar round-half-up oracle over every quantisation cell, including
        # both edges and the centre of each cell
        vals = []
        for k in range(256):
            for off in (-0.5, -0.25, 0.0, 0.25, 0.4999):
                v = (k + off) / 255
                if 0.0 <= v <= 1.0:
                    vals.append(v)
        vals = np.array(vals)
        expected = np.array([int(np.floor(v * 255 + 0.5)) for v in vals])
        p = tmp_path / "cells.png"
        save_image(vals[None, :, None], p)
        got = np.asarray(Image.open(p))[0].astype(int)
        np.testing.assert_array_equal(got, expected)
        assert np.max(np.abs(load_image(p)[0, :, 0] - vals)) <= 1 / 255

    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(0)
        for c in (1, 3):
            img = rng.random((17, 23, c))
            p = tmp_path / f"rt{c}.png"
            save_image(img, p)
            assert np.max(np.abs(load_image(p) - img)) <= 1 / 255 + 1e-12

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            save_image(np.zeros((2, 2, 1)), tmp_path / "no" / "such" / "dir" / "x.png")

    def test_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(np.full((2, 2, 1), 1.5), tmp_path / "x.png")


class TestColour:
    @pytest.mark.parametrize("rgb,ycc", [
        ((1, 1, 1), (1, 0.5, 0.5)),
        ((0, 0, 0), (0, 0.5, 0.5)),
        ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5)),
    ])
    def test_achromatic(self, rgb, ycc):
        got = rgb_to_ycbcr(np.array(rgb, dtype=float).reshape(1, 1, 3))
        np.testing.assert_allclose(got[0, 0], ycc, atol=1e-6)
        back = ycbcr_to_rgb(np.array(ycc, dtype=float).reshape(1, 1, 3))
        np.testing.assert_allclose(back[0, 0], rgb, atol=1e-6)

    def test_round_trip_100_images(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            x = rng.random((8, 8, 3))
            worst = max(worst, np.max(np.abs(ycbcr_to_rgb(rgb_to_ycbcr(x)) - x)))
        assert worst <= 2 / 255

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_ranges_clamped(self, rgb):
        ycc = rgb_to_ycbcr(np.array(rgb).reshape(1, 1, 3))
        assert ycc.min() >= 0.0 and ycc.max() <= 1.0

    def test_wrong_channels(self):
        with pytest.raises(ShapeError):
            rgb_to_ycbcr(np.zeros((2, 2, 1)))
        with pytest.raises(ShapeError):
            ycbcr_to_rgb(np.zeros((2, 2)))


class TestQuantize:
    # 0.2 * 255 = 51.000000000000007 -> 51
    @pytest.mark.parametrize("v,q", [(0.0, 0), (1.0, 255), (0.2, 51)])
    def test_values(self, v, q):
        assert quantize256(np.array([[v]]))[0, 0] == q

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        q = quantize256(np.array([[lo, hi]]))
        assert q[0, 0] <= q[0, 1]


class TestSobel:
    def test_constant(self):
        g = sobel_gradient(np.full((6, 7), 0.3))
        assert np.all(g.magnitude == 0)

    def test_vertical_step(self):
        img = np.zeros((7, 8))
        img[:, 4:] = 1.0
        g = sobel_gradient(img)
        assert np.all(g.dx[:, 3] != 0) and np.all(g.dx[:, 4] != 0)
        np.testing.assert_array_equal(g.dy, 0.0)

    def test_ramp_against_oracle(self):
        img = np.tile(np.arange(5) / 4, (5, 1))
        g = sobel_gradient(img)
        dx, dy = _sobel_oracle(img)
        np.testing.assert_allclose(g.dx, dx, atol=1e-12)
        np.testing.assert_allclose(g.dy, dy, atol=1e-12)
        # interior: (1 + 2 + 1) * (2 / 4)
        np.testing.assert_allclose(g.dx[1:-1, 1:-1], 2.0)

    def test_random_against_oracle(self):
        rng = np.random.default_rng(3)
        img = rng.random((9, 6))
        g = sobel_gradient(img)
        dx, dy = _sobel_oracle(img)
        np.testing.assert_allclose(g.dx, dx, atol=1e-12)
        np.testing.assert_allclose(g.dy, dy, atol=1e-12)
        np.testing.assert_allclose(g.magnitude, np.sqrt(g.dx ** 2 + g.dy ** 2), atol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1))
    def test_linear(self, a):
        img = np.random.default_rng(4).random((6, 6))
        g1 = sobel_gradient(a * img)
        g0 = sobel_gradient(img)
        np.testing.assert_allclose(g1.magnitude, a * g0.magnitude, atol=1e-6)
        np.testing.assert_allclose(g1.dx, a * g0.dx, atol=1e-6)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            sobel_gradient(np.zeros((2, 5)))
