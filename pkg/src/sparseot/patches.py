"""Image patches: sampling, vectorization, and overlap-average reassembly.

Images are float arrays in [0, 1] of shape (height, width, channels) with
channels interleaved in memory (C order). A patch set stores one vectorized
patch per column; within a patch the channels are laid out blockwise: all of
channel 0 in row-major order, then channel 1, then channel 2. A patch of side
``p`` over ``c`` channels therefore vectorizes to ``d = p * p * c`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image as _PILImage


@dataclass(frozen=True)
class Image:
    """A finite float image with values in [0, 1], shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(
                f"expected (H, W) or (H, W, 1|3) array, got shape {np.shape(self.data)}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PatchSet:
    """Vectorized patches (one per column) with their top-left grid positions.

    ``matrix`` is d x P; ``positions`` is P x 2 with (row, col) corners.
    """

    matrix: np.ndarray
    positions: np.ndarray
    patch_size: int
    channels: int

    def __post_init__(self):
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        positions = np.ascontiguousarray(np.asarray(self.positions, dtype=np.int64))
        d = self.patch_size * self.patch_size * self.channels
        if matrix.ndim != 2 or matrix.shape[0] != d:
            raise ValueError(
                f"patch matrix must be {d} x P for size {self.patch_size}, "
                f"{self.channels} channels; got {matrix.shape}"
            )
        if matrix.shape[1] < 1:
            raise ValueError("a patch set needs at least one patch")
        if positions.shape != (matrix.shape[1], 2):
            raise ValueError("positions must be P x 2 (row, col)")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("patch matrix contains non-finite values")
        matrix.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "positions", positions)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def count(self) -> int:
        return self.matrix.shape[1]


def load_png(path) -> Image:
    """Read an 8-bit PNG (grayscale or RGB) and map values to [0, 1] by /255."""
    with _PILImage.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if ("A" in img.mode or len(img.mode) > 2) else "L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return Image(arr)


def save_png(image: Image, path) -> None:
    """Write an image as 8-bit PNG; values quantized by round(255 * v)."""
    arr = np.rint(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        _PILImage.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        _PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def _extract(image: Image, rows: np.ndarray, cols: np.ndarray, patch_size: int) -> np.ndarray:
    # windows: (H-p+1, W-p+1, C, p, p); the row-major flatten of a selected
    # (C, p, p) block is exactly the channel-blockwise vector layout.
    windows = sliding_window_view(image.data, (patch_size, patch_size), axis=(0, 1))
    blocks = windows[rows, cols]                      # (P, C, p, p)
    return blocks.reshape(blocks.shape[0], -1).T      # (d, P)


def sample_random(image: Image, patch_size: int, count: int, seed: int) -> PatchSet:
    """Sample `count` patches uniformly (with replacement) over valid corners.

    Deterministic for a fixed seed.
    """
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if patch_size > min(image.width, image.height):
        raise ValueError(
            f"patch size {patch_size} exceeds image extent "
            f"{image.width}x{image.height}"
        )
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, image.height - patch_size + 1, size=count)
    cols = rng.integers(0, image.width - patch_size + 1, size=count)
    matrix = _extract(image, rows, cols, patch_size)
    return PatchSet(matrix, np.stack([rows, cols], axis=1), patch_size, image.channels)


def _grid_corners(extent: int, patch_size: int, stride: int) -> np.ndarray:
    last = extent - patch_size
    corners = list(range(0, last + 1, stride))
    if corners[-1] != last:
        corners.append(last)  # clamp the final patch to the image edge
    return np.asarray(corners, dtype=np.int64)


def dense_grid(image: Image, patch_size: int, stride: int) -> PatchSet:
    """All stride-spaced patches plus edge-clamped final row/column.

    Every pixel is covered by at least one patch.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if stride > patch_size:
        raise ValueError("stride must not exceed patch_size (coverage would have gaps)")
    if patch_size > min(image.width, image.height):
        raise ValueError(
            f"patch size {patch_size} exceeds image extent "
            f"{image.width}x{image.height}"
        )
    rr = _grid_corners(image.height, patch_size, stride)
    cc = _grid_corners(image.width, patch_size, stride)
    rows = np.repeat(rr, len(cc))
    cols = np.tile(cc, len(rr))
    matrix = _extract(image, rows, cols, patch_size)
    return PatchSet(matrix, np.stack([rows, cols], axis=1), patch_size, image.channels)


def reassemble(patches: PatchSet, width: int, height: int) -> Image:
    """Overlap-average inverse of dense_grid.

    Each output pixel is the mean of all patch values covering it; the result
    is clamped to [0, 1] at the end only. Raises if any pixel is uncovered.
    """
    p, c = patches.patch_size, patches.channels
    acc = np.zeros((height, width, c))
    cnt = np.zeros((height, width), dtype=np.int64)
    blocks = patches.matrix.T.reshape(-1, c, p, p).transpose(0, 2, 3, 1)  # (P, p, p, C)
    for k in range(patches.count):
        r, col = patches.positions[k]
        if r < 0 or col < 0 or r + p > height or col + p > width:
            raise ValueError(f"patch {k} at ({r}, {col}) falls outside {width}x{height}")
        acc[r : r + p, col : col + p] += blocks[k]
        cnt[r : r + p, col : col + p] += 1
    if np.any(cnt == 0):
        n_bad = int(np.sum(cnt == 0))
        raise ValueError(f"{n_bad} pixels are covered by no patch")
    out = acc / cnt[:, :, None]
    return Image(np.clip(out, 0.0, 1.0))
