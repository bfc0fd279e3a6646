import numpy as np
import pytest
from scipy import ndimage

from sparseot import Image


def smooth_image(height, width, channels=3, seed=0, detail=0.25):
    """Synthetic photo-like image: smooth color fields plus fine texture."""
    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(
        rng.random((height, width, channels)), sigma=(6, 6, 0)
    )
    texture = ndimage.gaussian_filter(
        rng.random((height, width, channels)), sigma=(1, 1, 0)
    )
    img = base + detail * texture
    img -= img.min()
    img /= img.max()
    return Image(img)


def tinted_image(height, width, tint, seed=0):
    """Smooth grayscale structure pushed toward an RGB tint."""
    rng = np.random.default_rng(seed)
    luma = ndimage.gaussian_filter(rng.random((height, width)), sigma=4)
    luma = (luma - luma.min()) / (luma.max() - luma.min())
    tint = np.asarray(tint, dtype=np.float64)
    img = 0.15 + 0.7 * luma[:, :, None] * tint[None, None, :]
    return Image(np.clip(img, 0.0, 1.0))


def random_orthonormal(dim, n_atoms, seed):
    """Random dictionary with exactly orthonormal columns (n_atoms <= dim)."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q[:, :n_atoms]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
