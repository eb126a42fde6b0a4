import numpy as np
import pytest

from nerd.errors import DimensionError, FormatError
from nerd.image import (BayerImage, RgbImage, cfa_channel_map, coord_grid, crop_at,
                        crop_random, load_bayer_png, load_png, mosaic, save_png)


class TestMosaic:
    def test_2x2_parity_rule(self):
        img = RgbImage(np.stack([np.full((2, 2), v, np.float32) for v in (0.2, 0.5, 0.9)]))
        bayer = mosaic(img)
        np.testing.assert_allclose(bayer.data, [[0.5, 0.9], [0.2, 0.5]])

    def test_pure_green(self):
        img = RgbImage(np.stack([np.zeros((4, 4)), np.ones((4, 4)), np.zeros((4, 4))]).astype(np.float32))
        bayer = mosaic(img)
        rows, cols = np.indices((4, 4))
        np.testing.assert_array_equal(bayer.data, ((rows + cols) % 2 == 0).astype(np.float32))

    def test_every_value_from_colocated_pixel(self, rng):
        img = RgbImage(rng.random((3, 4, 4), dtype=np.float32))
        bayer = mosaic(img)
        for r in range(4):
            for c in range(4):
                if (r + c) % 2 == 0:
                    channel = 1
                elif r % 2 == 0:
                    channel = 2
                else:
                    channel = 0
                assert bayer.data[r, c] == img.data[channel, r, c]

    def test_odd_dimensions_rejected(self, rng):
        with pytest.raises(DimensionError):
            mosaic(RgbImage(rng.random((3, 5, 4), dtype=np.float32)))

    def test_channel_map_layout(self):
        chan = cfa_channel_map(2, 2)
        np.testing.assert_array_equal(chan, [[1, 2], [0, 1]])  # G B / R G


class TestCoordGrid:
    def test_corners_2x2(self):
        grid = coord_grid(2, 2)
        np.testing.assert_array_equal(grid, [[-1, -1], [1, -1], [-1, 1], [1, 1]])

    def test_center_3x3(self):
        grid = coord_grid(3, 3).reshape(3, 3, 2)
        np.testing.assert_array_equal(grid[1, 1], [0.0, 0.0])

    def test_spacing_200(self):
        grid = coord_grid(200, 200).reshape(200, 200, 2)
        steps = np.diff(grid[0, :, 0])
        # analytic spacing, up to float32 storage rounding
        np.testing.assert_allclose(steps, 2.0 / 199.0, atol=1e-7)

    def test_transposition_symmetry(self):
        g1 = coord_grid(5, 9).reshape(5, 9, 2)
        g2 = coord_grid(9, 5).reshape(9, 5, 2)
        np.testing.assert_array_equal(g1[..., 0], g2[..., 1].T)
        np.testing.assert_array_equal(g1[..., 1], g2[..., 0].T)

    def test_minimum_size(self):
        with pytest.raises(DimensionError):
            coord_grid(1, 8)


def position_coded_image(h, w):
    """Pixel values encode (row, col) so crops reveal their offsets."""
    rows, cols = np.indices((h, w), dtype=np.float32)
    data = np.stack([rows / h, cols / w, np.zeros((h, w), np.float32)])
    return RgbImage(data)


class TestCrops:
    def test_identity_crop(self):
        img = position_coded_image(200, 200)
        out = crop_random(img, 200, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, img.data)

    def test_seed_reproducible(self):
        img = position_coded_image(128, 128)
        a = crop_random(img, 32, np.random.default_rng(9))
        b = crop_random(img, 32, np.random.default_rng(9))
        np.testing.assert_array_equal(a.data, b.data)

    def test_offsets_even_and_in_bounds(self):
        img = position_coded_image(400, 400)
        rng = np.random.default_rng(3)
        for _ in range(1000):
            crop = crop_random(img, 200, rng)
            top = round(float(crop.data[0, 0, 0]) * 400)
            left = round(float(crop.data[1, 0, 0]) * 400)
            assert top % 2 == 0 and left % 2 == 0
            assert 0 <= top <= 200 and 0 <= left <= 200

    def test_too_small_image(self):
        with pytest.raises(DimensionError):
            crop_random(position_coded_image(100, 100), 200, np.random.default_rng(0))

    def test_crop_at_rejects_odd_offsets(self):
        with pytest.raises(DimensionError):
            crop_at(position_coded_image(64, 64), 1, 0, 32)

    def test_mosaic_commutes_with_even_crops(self, rng):
        img = RgbImage(rng.random((3, 64, 64), dtype=np.float32))
        cropped_then_mosaicked = mosaic(crop_at(img, 10, 24, 32))
        mosaicked_then_cropped = mosaic(img).data[10:42, 24:56]
        np.testing.assert_array_equal(cropped_then_mosaicked.data, mosaicked_then_cropped)


class TestPngIO:
    def test_round_trip_lossless(self, rng, tmp_path):
        byte_img = rng.integers(0, 256, (3, 8, 10), dtype=np.uint8)
        img = RgbImage(byte_img.astype(np.float32) / 255.0)
        save_png(img, tmp_path / "a.png")
        loaded = load_png(tmp_path / "a.png")
        np.testing.assert_array_equal(loaded.data, img.data)

    def test_byte_scaling(self, tmp_path):
        img = RgbImage(np.full((3, 2, 2), 128 / 255, np.float32))
        save_png(img, tmp_path / "b.png")
        assert load_png(tmp_path / "b.png").data[0, 0, 0] == pytest.approx(0.50196, abs=1e-5)

    def test_clamp_and_round(self, tmp_path):
        img = RgbImage.from_array(np.full((3, 2, 2), 0.999999))
        save_png(img, tmp_path / "c.png")
        raw = load_png(tmp_path / "c.png")
        assert raw.data.max() == 1.0  # byte 255

    def test_rejects_non_rgb(self, tmp_path):
        from PIL import Image
        Image.new("RGBA", (4, 4)).save(tmp_path / "d.png")
        with pytest.raises(FormatError, match="RGBA"):
            load_png(tmp_path / "d.png")

    def test_rejects_16bit(self, tmp_path):
        from PIL import Image
        Image.new("I;16", (4, 4)).save(tmp_path / "e.png")
        with pytest.raises(FormatError):
            load_png(tmp_path / "e.png")

    def test_bayer_png_round_trip(self, rng, tmp_path):
        from nerd.image import save_bayer_png
        bayer = BayerImage((rng.integers(0, 256, (6, 8)) / 255.0).astype(np.float32))
        save_bayer_png(bayer, tmp_path / "f.png")
        loaded = load_bayer_png(tmp_path / "f.png")
        np.testing.assert_allclose(loaded.data, bayer.data, atol=1e-7)

    def test_bayer_rejects_rgb(self, tmp_path, rng):
        save_png(RgbImage(rng.random((3, 4, 4), dtype=np.float32)), tmp_path / "g.png")
        with pytest.raises(FormatError, match="RGB"):
            load_bayer_png(tmp_path / "g.png")


class TestInvariantTypes:
    def test_bayer_requires_even_dims(self, rng):
        with pytest.raises(DimensionError):
            BayerImage(rng.random((5, 4), dtype=np.float32))

    def test_bayer_layout_fixed(self, rng):
        with pytest.raises(FormatError):
            BayerImage(rng.random((4, 4), dtype=np.float32), layout="RGGB")

    def test_rgb_shape_check(self, rng):
        with pytest.raises(DimensionError):
            RgbImage(rng.random((4, 4), dtype=np.float32))
