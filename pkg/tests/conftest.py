import numpy as np
import pytest

from nerd.image import RgbImage


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def random_image(rng):
    return RgbImage(rng.random((3, 24, 32), dtype=np.float32))


def natural_crop(size: int = 96, offset: tuple[int, int] = (100, 200)) -> RgbImage:
    """A textured crop of a real photograph (test-only dependency)."""
    import skimage.data

    arr = skimage.data.astronaut().astype(np.float32) / 255.0
    r, c = offset
    return RgbImage(arr[r:r + size, c:c + size].transpose(2, 0, 1).copy())


def synthetic_texture(seed: int, size: int = 256) -> RgbImage:
    """Multi-scale colored noise plus flat rectangles: dense high-frequency
    chroma edges, the regime where demosaicking quality separates."""
    rng = np.random.default_rng(seed)
    img = np.zeros((3, size, size), dtype=np.float64)
    for scale in (4, 8, 16, 32, 64):
        low = rng.random((3, size // scale + 1, size // scale + 1))
        up = np.kron(low, np.ones((1, scale, scale)))[:, :size, :size]
        img += up * rng.uniform(0.3, 1.0)
    img /= img.max()
    for _ in range(12):
        r0, c0 = rng.integers(0, size - 20, 2)
        h, w = rng.integers(8, 60, 2)
        img[:, r0:r0 + h, c0:c0 + w] = rng.random(3)[:, None, None]
    return RgbImage(img.astype(np.float32))
