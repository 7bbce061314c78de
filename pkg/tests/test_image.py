"""Tests for image buffers and PPM serialization."""

import numpy as np
import pytest

from stochsplat.image import (
    ImageBuffer,
    false_color,
    quantize_unit,
    read_ppm,
    write_ppm,
)


class TestImageBuffer:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            ImageBuffer(width=4, height=4, data=np.zeros((4, 3, 3)))

    def test_rejects_non_finite(self):
        data = np.zeros((2, 2, 3))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ImageBuffer.from_array(data)

    def test_from_array(self):
        img = ImageBuffer.from_array(np.zeros((3, 5, 3)))
        assert (img.width, img.height) == (5, 3)


class TestQuantization:
    def test_round_half_up(self):
        # 2.5/255 would round to 2 under banker's rounding; half-up gives 3.
        v = 2.5 / 255.0
        assert quantize_unit(np.array([v]))[0] == 3

    def test_clamps(self):
        assert quantize_unit(np.array([-0.5]))[0] == 0
        assert quantize_unit(np.array([1.5]))[0] == 255


class TestPpmRoundTrip:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, size=(6, 9, 3))
        path = tmp_path / "img.ppm"
        write_ppm(img, path)
        back = read_ppm(path)
        assert (back.height, back.width) == (6, 9)
        np.testing.assert_allclose(
            back.data, quantize_unit(img).astype(float) / 255.0, atol=1e-12
        )

    def test_header(self, tmp_path):
        path = tmp_path / "img.ppm"
        write_ppm(np.zeros((2, 3, 3)), path)
        raw = path.read_bytes()
        assert raw.startswith(b"P6\n3 2\n255\n")
        assert len(raw) == len(b"P6\n3 2\n255\n") + 2 * 3 * 3


class TestFalseColor:
    def test_endpoints(self):
        rgb = false_color(np.array([[0.0, 1.0]]))
        np.testing.assert_allclose(rgb[0, 0], [0.0, 0.0, 0.4])
        np.testing.assert_allclose(rgb[0, 1], [0.9, 0.1, 0.0])

    def test_constant_field(self):
        rgb = false_color(np.full((3, 3), 2.5))
        np.testing.assert_allclose(rgb, np.broadcast_to([0.0, 0.0, 0.4], (3, 3, 3)))

    def test_in_unit_range(self):
        rgb = false_color(np.random.default_rng(1).normal(size=(8, 8)))
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0
