import numpy as np
import pytest

from tmdiff.errors import ValidationError
from tmdiff.imaging import (
    ClampCounter,
    ColorMatrix,
    TrafficImage,
    color_encode,
    decode_intensity,
    denormalize_intensity,
    encode_series,
    export_png,
    image_encode,
    intensity01_from_normalized,
)


class TestColorEncode:
    def test_hand_fixture_2x2(self):
        out = color_encode(np.array([[0.0, 1.0], [2.0, 3.0]]))
        expected = np.array([[255.0, 170.0], [85.0, 0.0]])
        np.testing.assert_allclose(out.values, expected, atol=1e-9)
        assert out.source_min == 0.0 and out.source_max == 3.0

    def test_hand_fixture_3x3(self):
        x = np.arange(9.0).reshape(3, 3)
        out = color_encode(x)
        expected = 255.0 * (1.0 - x / 8.0)
        np.testing.assert_allclose(out.values, expected, atol=1e-9)

    def test_constant_matrix_maps_to_255(self):
        out = color_encode(np.full((3, 3), 5.0))
        np.testing.assert_array_equal(out.values, np.full((3, 3), 255.0))

    def test_max_traffic_is_darkest(self):
        # the single maximum entry maps to 0: high-traffic cells are dark
        x = np.array([[1.0, 2.0], [9.0, 3.0]])
        out = color_encode(x)
        assert out.values[1, 0] == 0.0
        assert np.argmin(out.values) == np.argmax(x)
        assert np.argmax(out.values) == np.argmin(x)

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            color_encode(np.array([[np.nan, 1.0], [2.0, 3.0]]))

    def test_scale_invariance(self):
        # min-max normalization is invariant to x -> a*x + b for a > 0, b >= 0
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.uniform(0.0, 1000.0, size=(4, 4))
            a = rng.uniform(0.1, 50.0)
            b = rng.uniform(0.0, 500.0)
            np.testing.assert_allclose(
                color_encode(a * x + b).values, color_encode(x).values, atol=1e-9
            )

    def test_order_reversal_property(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.permutation(16).reshape(4, 4).astype(float)  # distinct entries
            out = color_encode(x)
            assert np.argmax(x) == np.argmin(out.values)
            assert np.argmin(x) == np.argmax(out.values)


class TestImageEncode:
    def test_constant_series_zeroes_difference_channels(self):
        g = color_encode(np.array([[1.0, 2.0], [3.0, 4.0]]))
        images = image_encode([g, g, g, g])
        for img in images[1:]:
            np.testing.assert_array_equal(img.channels[1], np.zeros((2, 2)))
            np.testing.assert_array_equal(img.channels[2], np.zeros((2, 2)))

    def test_linear_ramp_zeroes_second_difference(self):
        u = np.array([[10.0, 20.0], [30.0, 40.0]])
        colors = [ColorMatrix(values=t * u) for t in range(1, 6)]
        images = image_encode(colors)
        for img in images[2:]:
            np.testing.assert_allclose(img.channels[2], np.zeros((2, 2)), atol=1e-12)

    def test_hand_computed_second_difference(self):
        # expected values computed by hand from the stacking rule before coding:
        # ch3(t=3) = G3 - 2*G2 + G1
        g1 = np.array([[0.0, 100.0], [200.0, 50.0]])
        g2 = np.array([[10.0, 90.0], [150.0, 60.0]])
        g3 = np.array([[5.0, 95.0], [180.0, 70.0]])
        images = image_encode([ColorMatrix(g1), ColorMatrix(g2), ColorMatrix(g3)])
        np.testing.assert_array_equal(images[2].channels[0], g3)
        np.testing.assert_array_equal(images[2].channels[1], np.array([[-5.0, 5.0], [30.0, 10.0]]))
        np.testing.assert_array_equal(
            images[2].channels[2], np.array([[-15.0, 15.0], [80.0, 0.0]])
        )

    def test_first_and_second_timestep_forms(self):
        g1 = np.array([[0.0, 255.0], [100.0, 50.0]])
        g2 = np.array([[20.0, 200.0], [90.0, 70.0]])
        images = image_encode([ColorMatrix(g1), ColorMatrix(g2)])
        np.testing.assert_array_equal(images[0].channels[0], g1)
        np.testing.assert_array_equal(images[0].channels[1], g1)
        np.testing.assert_array_equal(images[0].channels[2], g1)
        np.testing.assert_array_equal(images[1].channels[1], g2 - g1)
        np.testing.assert_array_equal(images[1].channels[2], g2 - g1)

    def test_grayscale_equals_first_rgb_channel(self):
        rng = np.random.default_rng(2)
        colors = [color_encode(rng.uniform(0, 100, (3, 3))) for _ in range(5)]
        rgb = image_encode(colors, mode="rgb")
        gray = image_encode(colors, mode="grayscale")
        for r, g in zip(rgb, gray):
            assert g.channels.shape[0] == 1
            np.testing.assert_array_equal(g.channels[0], r.channels[0])

    def test_channel_ranges(self):
        rng = np.random.default_rng(3)
        colors = [color_encode(rng.uniform(0, 1000, (4, 4))) for _ in range(10)]
        for img in image_encode(colors):
            assert img.channels[0].min() >= 0.0 and img.channels[0].max() <= 255.0
            assert np.abs(img.channels[1:]).max() <= 255.0
            norm = img.normalized_planes
            assert norm.min() >= -1.0 and norm.max() <= 1.0

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError):
            image_encode([])


class TestDecodeIntensity:
    def test_round_trip(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            color = color_encode(rng.uniform(0, 500, (5, 5)))
            img = image_encode([color])[0]
            decoded = decode_intensity(img)
            np.testing.assert_allclose(decoded.values, color.values, atol=1e-6)

    def test_endpoint_convention(self):
        # -1 maps to 0 and +1 maps to 255
        np.testing.assert_array_equal(
            denormalize_intensity(np.full((2, 2), -1.0)), np.zeros((2, 2))
        )
        np.testing.assert_array_equal(
            denormalize_intensity(np.ones((2, 2))), np.full((2, 2), 255.0)
        )

    def test_overshoot_is_clamped_and_counted(self):
        counter = ClampCounter()
        plane = np.array([[1.2, 0.0], [0.5, -0.5]])
        out = denormalize_intensity(plane, warnings=counter)
        assert out[0, 0] == 255.0
        assert counter.count == 1

    def test_intensity01(self):
        plane = np.array([[1.0, -1.0], [0.0, 0.5]])
        np.testing.assert_allclose(
            intensity01_from_normalized(plane), [[1.0, 0.0], [0.5, 0.75]]
        )


class TestEncodeSeries:
    def test_shapes(self):
        matrices = np.random.default_rng(5).uniform(0, 10, (6, 4, 4))
        assert encode_series(matrices, "rgb").shape == (6, 3, 4, 4)
        assert encode_series(matrices, "grayscale").shape == (6, 1, 4, 4)

    def test_png_export(self, tmp_path):
        colors = [color_encode(np.arange(16.0).reshape(4, 4))]
        img = image_encode(colors)[0]
        out = tmp_path / "plane.png"
        export_png(img, 0, out)
        assert out.exists() and out.stat().st_size > 0


class TestTrafficImageValidation:
    def test_rejects_out_of_range_intensity(self):
        bad = np.stack([np.full((2, 2), 300.0), np.zeros((2, 2)), np.zeros((2, 2))])
        with pytest.raises(ValidationError):
            TrafficImage(channels=bad)
