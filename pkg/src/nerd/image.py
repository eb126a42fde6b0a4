"""Image types, PNG I/O, GBRG mosaicking and coordinate grids.

Images are stored planar (channel-major): RGB data is a (3, H, W) float32
array in [0, 1], matching the N,C,H,W tensor layout of the convolution
stack.  The Bayer layout is fixed to GBRG with the top-left pixel green:

    row 0:  G B G B ...
    row 1:  R G R G ...

so pixel (r, c) carries G when (r + c) is even, B when r is even and c
odd, and R when r is odd and c even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError

BAYER_LAYOUT = "GBRG"

# channel index (0=R, 1=G, 2=B) observed at each (row parity, col parity)
_CFA_CHANNEL = np.array([[1, 2],
                         [0, 1]], dtype=np.intp)


@dataclass(frozen=True)
class RgbImage:
    """Planar RGB image, float32 in [0, 1], shape (3, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[0] != 3:
            raise DimensionError(f"RgbImage expects (3, H, W), got {d.shape}")
        if d.shape[1] < 2 or d.shape[2] < 2:
            raise DimensionError(f"RgbImage too small: {d.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RgbImage":
        return cls(np.clip(np.asarray(arr, dtype=np.float32), 0.0, 1.0))


@dataclass(frozen=True)
class BayerImage:
    """Single-channel CFA image, float32 in [0, 1], GBRG layout."""

    data: np.ndarray
    layout: str = BAYER_LAYOUT

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise DimensionError(f"BayerImage expects (H, W), got {d.shape}")
        if d.shape[0] % 2 or d.shape[1] % 2:
            raise DimensionError(f"BayerImage dimensions must be even, got {d.shape}")
        if self.layout != BAYER_LAYOUT:
            raise FormatError(f"unsupported CFA layout {self.layout!r}, only {BAYER_LAYOUT}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def cfa_channel_map(height: int, width: int) -> np.ndarray:
    """(H, W) array of the RGB channel index observed at each pixel."""
    rows = np.arange(height)[:, None] % 2
    cols = np.arange(width)[None, :] % 2
    return _CFA_CHANNEL[rows, cols]


def mosaic(img: RgbImage) -> BayerImage:
    """Project an RGB image onto the GBRG pattern (no filtering, no noise)."""
    if img.height % 2 or img.width % 2:
        raise DimensionError(f"mosaic needs even dimensions, got {img.height}x{img.width}")
    chan = cfa_channel_map(img.height, img.width)
    rows = np.arange(img.height)[:, None]
    cols = np.arange(img.width)[None, :]
    return BayerImage(img.data[chan, rows, cols])


def coord_grid(height: int, width: int) -> np.ndarray:
    """Normalized (H*W, 2) float32 coordinates, row-major, (x, y) per row.

    x runs along columns and y along rows, both linearly from -1 to +1
    with the corner pixels mapped to the bounds exactly.
    """
    if height < 2 or width < 2:
        raise DimensionError(f"coord_grid needs at least 2x2, got {height}x{width}")
    xs = np.linspace(-1.0, 1.0, width, dtype=np.float64)
    ys = np.linspace(-1.0, 1.0, height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1).astype(np.float32)


def crop_random(img: RgbImage, size: int, rng: np.random.Generator) -> RgbImage:
    """Even-aligned random square crop, preserving the GBRG phase."""
    if size % 2:
        raise DimensionError(f"crop size must be even, got {size}")
    if img.height < size or img.width < size:
        raise DimensionError(f"image {img.height}x{img.width} smaller than crop {size}")
    top = 2 * int(rng.integers(0, (img.height - size) // 2 + 1))
    left = 2 * int(rng.integers(0, (img.width - size) // 2 + 1))
    return RgbImage(np.ascontiguousarray(img.data[:, top:top + size, left:left + size]))


def crop_at(img: RgbImage, top: int, left: int, size: int) -> RgbImage:
    """Deterministic crop; offsets must be even to keep the CFA phase."""
    if top % 2 or left % 2:
        raise DimensionError(f"crop offsets must be even, got ({top}, {left})")
    if top < 0 or left < 0 or top + size > img.height or left + size > img.width:
        raise DimensionError("crop outside image bounds")
    return RgbImage(np.ascontiguousarray(img.data[:, top:top + size, left:left + size]))


def center_crop(img: RgbImage, size: int) -> RgbImage:
    """Centered crop with offsets floored to even values."""
    top = ((img.height - size) // 2) & ~1
    left = ((img.width - size) // 2) & ~1
    return crop_at(img, top, left, size)


def resize_shorter_side(img: RgbImage, target: int) -> RgbImage:
    """Scale so the shorter side equals `target` (bicubic, aspect preserved)."""
    h, w = img.height, img.width
    if min(h, w) == target:
        return img
    scale = target / min(h, w)
    new_w = max(target, int(round(w * scale)))
    new_h = max(target, int(round(h * scale)))
    pil = Image.fromarray(to_uint8(img.data))
    pil = pil.resize((new_w, new_h), Image.Resampling.BICUBIC)
    return RgbImage(np.asarray(pil, dtype=np.float32).transpose(2, 0, 1) / 255.0)


def to_uint8(data: np.ndarray) -> np.ndarray:
    """[0,1] float (C,H,W) -> interleaved uint8, rounding half away from zero."""
    clamped = np.clip(data, 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def load_png(path) -> RgbImage:
    """Load an 8-bit RGB PNG, scaling byte values by 1/255."""
    with Image.open(path) as pil:
        if pil.format != "PNG":
            raise FormatError(f"{path}: expected PNG, got {pil.format}")
        if pil.mode != "RGB":
            raise FormatError(f"{path}: unsupported color mode {pil.mode!r}, need 8-bit RGB")
        arr = np.asarray(pil, dtype=np.float32)
    return RgbImage(arr.transpose(2, 0, 1) / 255.0)


def load_bayer_png(path) -> BayerImage:
    """Load a single-channel 8-bit PNG as a GBRG Bayer image."""
    with Image.open(path) as pil:
        if pil.format != "PNG":
            raise FormatError(f"{path}: expected PNG, got {pil.format}")
        if pil.mode != "L":
            raise FormatError(f"{path}: unsupported color mode {pil.mode!r}, need 8-bit grayscale")
        arr = np.asarray(pil, dtype=np.float32)
    return BayerImage(arr / 255.0)


def save_png(img: RgbImage, path) -> None:
    Image.fromarray(to_uint8(img.data), mode="RGB").save(path, format="PNG")


def save_bayer_png(bayer: BayerImage, path) -> None:
    byte = np.floor(np.clip(bayer.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(byte, mode="L").save(path, format="PNG")
