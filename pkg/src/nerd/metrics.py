"""PSNR and SSIM image-quality metrics.

PSNR uses MAX = 1.0 and the MSE over the flattened image (all pixels and
channels pooled); identical images report `math.inf`, which aggregation
excludes with a warning.  SSIM follows the canonical parameterization:
11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1,
computed per channel and averaged, with the mean taken over valid window
positions only (no padded borders).  Some toolchains convert to luma
before SSIM; this one deliberately does not, so cross-tool comparisons
should account for that.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .image import RgbImage

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: RgbImage, b: RgbImage) -> float:
    """10*log10(1/MSE) in dB; +inf for identical images."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"psnr dimensions differ: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel_1d(window: int, sigma: float) -> np.ndarray:
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2-d correlation keeping only fully covered positions."""
    win = kernel.size
    h, w = img.shape
    rows = np.zeros((h, w - win + 1))
    for i, kv in enumerate(kernel):
        rows += kv * img[:, i:i + w - win + 1]
    out = np.zeros((h - win + 1, w - win + 1))
    for i, kv in enumerate(kernel):
        out += kv * rows[i:i + h - win + 1, :]
    return out


def ssim(a: RgbImage, b: RgbImage) -> float:
    """Structural similarity, per channel then averaged."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"ssim dimensions differ: {a.data.shape} vs {b.data.shape}")
    if min(a.height, a.width) < SSIM_WINDOW:
        raise DimensionError(
            f"image {a.height}x{a.width} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    kernel = _gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    total = 0.0
    for ch in range(3):
        x = a.data[ch].astype(np.float64)
        y = b.data[ch].astype(np.float64)
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        var_x = _filter_valid(x * x, kernel) - mu_x * mu_x
        var_y = _filter_valid(y * y, kernel) - mu_y * mu_y
        cov = _filter_valid(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        total += float(np.mean(num / den))
    return total / 3.0


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM rows plus aggregate means per method."""

    rows: list[tuple[str, str, float, float]] = field(default_factory=list)

    def add(self, image_id: str, method: str, psnr_db: float, ssim_value: float) -> None:
        self.rows.append((image_id, method, psnr_db, ssim_value))

    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, method, _, _ in self.rows:
            seen.setdefault(method)
        return list(seen)

    def mean(self, method: str) -> tuple[float, float]:
        """Mean PSNR/SSIM for a method; infinite PSNR rows are excluded."""
        psnrs = [p for _, m, p, _ in self.rows if m == method]
        ssims = [s for _, m, _, s in self.rows if m == method]
        finite = [p for p in psnrs if math.isfinite(p)]
        if len(finite) < len(psnrs):
            log.warning("%s: excluded %d infinite PSNR value(s) from the mean",
                        method, len(psnrs) - len(finite))
        mean_psnr = sum(finite) / len(finite) if finite else math.inf
        mean_ssim = sum(ssims) / len(ssims) if ssims else math.nan
        return mean_psnr, mean_ssim

    def write_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(["image_id", "method", "psnr_db", "ssim"])
        for image_id, method, p, s in self.rows:
            writer.writerow([image_id, method, f"{p:.6f}" if math.isfinite(p) else "inf", f"{s:.6f}"])
        for method in self.methods():
            mp, ms = self.mean(method)
            writer.writerow(["mean", method, f"{mp:.6f}" if math.isfinite(mp) else "inf", f"{ms:.6f}"])
