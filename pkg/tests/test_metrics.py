import io
import math

import numpy as np
import pytest

from nerd.errors import DimensionError
from nerd.image import RgbImage
from nerd.metrics import MetricReport, psnr, ssim

# Reference SSIM values computed with scikit-image 0.25.2
# (structural_similarity, channel_axis=-1, data_range=1.0, gaussian_weights=True,
# sigma=1.5, use_sample_covariance=False) on the pairs produced by ssim_pair()
# below, before this module's own SSIM existed.
REFERENCE_SSIM = {
    0: 0.9965393095298243,
    1: 0.9859033258747542,
    2: 0.9694772423268119,
    3: 0.9487939273891447,
    4: 0.9201151997344063,
}
REFERENCE_SSIM_CONST_SHIFT = 0.983609244386166  # constant 0.5 vs constant 0.6


def ssim_pair(seed):
    rng = np.random.default_rng(seed)
    base = rng.random((48, 64, 3))
    noise = rng.random((48, 64, 3))
    a = (0.2 + 0.6 * base).astype(np.float32)
    b = np.clip(a + (noise - 0.5) * (0.05 * (seed + 1)), 0.0, 1.0).astype(np.float32)
    return RgbImage(a.transpose(2, 0, 1)), RgbImage(b.transpose(2, 0, 1))


def const_image(value, h=48, w=64):
    return RgbImage(np.full((3, h, w), value, np.float32))


class TestPsnr:
    def test_identical_is_infinite(self, random_image):
        assert psnr(random_image, random_image) == math.inf

    def test_const_zero_vs_half(self):
        value = psnr(const_image(0.0), const_image(0.5))
        assert value == pytest.approx(10 * math.log10(1 / 0.25), abs=1e-9)
        assert value == pytest.approx(6.0206, abs=1e-3)

    def test_const_zero_vs_tenth(self):
        assert psnr(const_image(0.0), const_image(0.1)) == pytest.approx(20.0, abs=1e-6)

    def test_symmetry(self, rng):
        a = RgbImage(rng.random((3, 16, 16), dtype=np.float32))
        b = RgbImage(rng.random((3, 16, 16), dtype=np.float32))
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_offset(self):
        values = [psnr(const_image(0.2), const_image(0.2 + d)) for d in (0.05, 0.1, 0.2, 0.4)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_dimension_mismatch(self, rng):
        a = RgbImage(rng.random((3, 16, 16), dtype=np.float32))
        b = RgbImage(rng.random((3, 16, 18), dtype=np.float32))
        with pytest.raises(DimensionError):
            psnr(a, b)


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        img = RgbImage(rng.random((3, 32, 32), dtype=np.float32))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("seed", sorted(REFERENCE_SSIM))
    def test_matches_independent_reference(self, seed):
        a, b = ssim_pair(seed)
        assert ssim(a, b) == pytest.approx(REFERENCE_SSIM[seed], abs=1e-6)

    def test_constant_shift_matches_reference_and_formula(self):
        value = ssim(const_image(0.5), const_image(0.6))
        assert value == pytest.approx(REFERENCE_SSIM_CONST_SHIFT, abs=1e-6)
        # closed form for two constants, using the float32-rounded 0.6 the
        # image actually stores
        b = float(np.float32(0.6))
        c1 = 0.01 ** 2
        assert value == pytest.approx((2 * 0.5 * b + c1) / (0.25 + b * b + c1), abs=1e-9)

    def test_uncorrelated_noise_scores_low(self):
        for trial in range(20):
            rng = np.random.default_rng(1000 + trial)
            a = RgbImage(rng.random((3, 48, 48), dtype=np.float32))
            b = RgbImage(rng.random((3, 48, 48), dtype=np.float32))
            assert ssim(a, b) < 0.2

    def test_symmetry(self):
        a, b = ssim_pair(2)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_window_size_floor(self, rng):
        small = RgbImage(rng.random((3, 10, 20), dtype=np.float32))
        with pytest.raises(DimensionError):
            ssim(small, small)


class TestMetricReport:
    def test_mean_excludes_infinite_psnr(self, caplog):
        report = MetricReport()
        report.add("img0", "bilinear", math.inf, 1.0)
        report.add("img1", "bilinear", 30.0, 0.9)
        with caplog.at_level("WARNING"):
            mean_psnr, mean_ssim = report.mean("bilinear")
        assert mean_psnr == 30.0
        assert mean_ssim == pytest.approx(0.95)
        assert "excluded" in caplog.text

    def test_csv_structure(self):
        report = MetricReport()
        report.add("img0", "bilinear", 28.0, 0.9)
        report.add("img0", "malvar", 33.0, 0.95)
        buf = io.StringIO()
        report.write_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "image_id,method,psnr_db,ssim"
        assert len(lines) == 1 + 2 + 2  # header + rows + one mean row per method
        assert lines[-2].startswith("mean,bilinear") and lines[-1].startswith("mean,malvar")
