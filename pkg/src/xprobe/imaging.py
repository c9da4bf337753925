"""Images, patch grids, baselines, and masked/fractional composition.

Images are float32 (channels, height, width) tensors with values in [0, 1].
A grid divides the image into at most 64 axis-aligned patches so that any
patch subset fits in one 64-bit mask; remainder pixels go to the last row
and column of patches.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from . import kernels
from .errors import DimensionError, GridError

MAX_PATCHES = 64


class ImageTensor:
    """A validated (channels, height, width) float32 image in [0, 1].

    ``ident`` is an optional stable identifier (file stem, dataset index);
    when absent, a content hash is used as the cache/record key.
    """

    __slots__ = ("pixels", "ident", "_key")

    def __init__(self, pixels, ident=None, _validate=True):
        arr = np.ascontiguousarray(pixels, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if _validate:
            if arr.ndim != 3:
                raise DimensionError(f"expected (C, H, W) pixels, got shape {arr.shape}")
            if arr.shape[0] not in (1, 3):
                raise DimensionError(f"expected 1 or 3 channels, got {arr.shape[0]}")
            if arr.shape[1] == 0 or arr.shape[2] == 0:
                raise DimensionError("image has a zero-sized dimension")
            if not np.all(np.isfinite(arr)):
                raise DimensionError("image contains non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DimensionError("image values must lie in [0, 1]")
        self.pixels = arr
        self.ident = ident
        self._key = None

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def key(self) -> str:
        if self.ident is not None:
            return str(self.ident)
        if self._key is None:
            digest = hashlib.sha1()
            digest.update(str(self.pixels.shape).encode())
            digest.update(self.pixels.tobytes())
            self._key = digest.hexdigest()[:16]
        return self._key

    def __repr__(self):
        return f"ImageTensor(key={self.key!r}, shape={self.pixels.shape})"


@dataclass(frozen=True)
class GridSpec:
    """An rows x cols patch grid over an image of the given size.

    Patch ids are row-major; pixel (y, x) belongs to the patch whose cell
    contains it, with remainder pixels absorbed by the last row/column.
    """

    rows: int
    cols: int
    image_height: int
    image_width: int

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def patch_box(self, index: int):
        """Pixel box (y0, y1, x0, x1) of a patch, half-open."""
        r, c = divmod(index, self.cols)
        bh = self.image_height // self.rows
        bw = self.image_width // self.cols
        y0 = r * bh
        y1 = self.image_height if r == self.rows - 1 else (r + 1) * bh
        x0 = c * bw
        x1 = self.image_width if c == self.cols - 1 else (c + 1) * bw
        return y0, y1, x0, x1

    def patch_id_map(self) -> np.ndarray:
        """(H, W) uint8 raster of patch ids."""
        return _patch_id_map(self)

    def pixels_per_patch(self) -> np.ndarray:
        return _pixels_per_patch(self)


@lru_cache(maxsize=64)
def _patch_id_map(grid: GridSpec) -> np.ndarray:
    bh = grid.image_height // grid.rows
    bw = grid.image_width // grid.cols
    row_of = np.minimum(np.arange(grid.image_height) // bh, grid.rows - 1)
    col_of = np.minimum(np.arange(grid.image_width) // bw, grid.cols - 1)
    ids = (row_of[:, None] * grid.cols + col_of[None, :]).astype(np.uint8)
    ids.setflags(write=False)
    return ids


@lru_cache(maxsize=64)
def _pixels_per_patch(grid: GridSpec) -> np.ndarray:
    counts = np.bincount(_patch_id_map(grid).ravel(), minlength=grid.n_patches).astype(np.int64)
    counts.setflags(write=False)
    return counts


def make_grid(image_height: int, image_width: int, rows: int, cols: int) -> GridSpec:
    if image_height <= 0 or image_width <= 0:
        raise GridError("image dimensions must be positive")
    if rows <= 0 or cols <= 0:
        raise GridError("grid must have positive rows and cols")
    if rows * cols > MAX_PATCHES:
        raise GridError(f"{rows}x{cols} grid exceeds the {MAX_PATCHES}-patch capacity")
    if rows > image_height or cols > image_width:
        raise GridError("grid is finer than the image")
    return GridSpec(rows=rows, cols=cols, image_height=image_height, image_width=image_width)


@dataclass(frozen=True)
class PatchSet:
    """A subset of grid patches stored as a bitmask (bit i = patch i)."""

    bits: int
    grid: GridSpec

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.grid.n_patches):
            raise GridError(f"mask {self.bits:#x} out of range for {self.grid.n_patches} patches")

    @classmethod
    def empty(cls, grid: GridSpec) -> "PatchSet":
        return cls(0, grid)

    @classmethod
    def full(cls, grid: GridSpec) -> "PatchSet":
        return cls((1 << grid.n_patches) - 1, grid)

    @classmethod
    def from_indices(cls, grid: GridSpec, indices) -> "PatchSet":
        bits = 0
        for i in indices:
            if not 0 <= i < grid.n_patches:
                raise GridError(f"patch index {i} out of range")
            bits |= 1 << i
        return cls(bits, grid)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    @property
    def hex(self) -> str:
        return f"{self.bits:#x}"

    def indices(self):
        return tuple(i for i in range(self.grid.n_patches) if (self.bits >> i) & 1)

    def contains(self, index: int) -> bool:
        return bool((self.bits >> index) & 1)

    def add(self, index: int) -> "PatchSet":
        return PatchSet(self.bits | (1 << index), self.grid)

    def remove(self, index: int) -> "PatchSet":
        return PatchSet(self.bits & ~(1 << index), self.grid)

    def complement(self) -> "PatchSet":
        return PatchSet(((1 << self.grid.n_patches) - 1) ^ self.bits, self.grid)

    def is_subset_of(self, other: "PatchSet") -> bool:
        return (self.bits & other.bits) == self.bits


class BaselineKind(Enum):
    GREY = "grey"
    BLUR = "blur"


@dataclass(frozen=True)
class BaselineStyle:
    """How removed patches are filled: flat grey (zeros) or a Gaussian blur."""

    kind: BaselineKind = BaselineKind.GREY
    blur_sigma: float = 10.0

    def __post_init__(self):
        if self.kind is BaselineKind.BLUR and not self.blur_sigma > 0:
            raise DimensionError("blur_sigma must be positive")

    @property
    def key(self) -> str:
        if self.kind is BaselineKind.GREY:
            return "grey"
        return f"blur:{self.blur_sigma!r}"


GREY = BaselineStyle(BaselineKind.GREY)


def make_baseline(image: ImageTensor, style: BaselineStyle = GREY) -> ImageTensor:
    if style.kind is BaselineKind.GREY:
        pix = np.zeros_like(image.pixels)
    else:
        pix = gaussian_filter(image.pixels, sigma=(0.0, style.blur_sigma, style.blur_sigma))
        pix = np.clip(pix, 0.0, 1.0)
    return ImageTensor(pix, ident=None, _validate=False)


def compose_masked(image: ImageTensor, baseline: ImageTensor, patches: PatchSet) -> ImageTensor:
    """Keep the image inside ``patches``; fill the rest from the baseline."""
    _check_same_shape(image, baseline)
    grid = patches.grid
    if (grid.image_height, grid.image_width) != (image.height, image.width):
        raise DimensionError("grid does not match the image dimensions")
    masks = np.asarray([patches.bits], dtype=np.uint64)
    out = kernels.compose_subsets(image.pixels, baseline.pixels, grid.patch_id_map(), masks)
    return ImageTensor(out[0], ident=None, _validate=False)


def compose_subset_pixels(image: ImageTensor, baseline: ImageTensor, grid: GridSpec, masks) -> np.ndarray:
    """Batch form of compose_masked over raw bitmasks; returns (B, C, H, W)."""
    _check_same_shape(image, baseline)
    if (grid.image_height, grid.image_width) != (image.height, image.width):
        raise DimensionError("grid does not match the image dimensions")
    arr = np.asarray(masks, dtype=np.uint64)
    return kernels.compose_subsets(image.pixels, baseline.pixels, grid.patch_id_map(), arr)


def _check_same_shape(image: ImageTensor, baseline: ImageTensor):
    if image.pixels.shape != baseline.pixels.shape:
        raise DimensionError(
            f"image {image.pixels.shape} and baseline {baseline.pixels.shape} differ in shape"
        )


class Direction(Enum):
    INSERTION = "insertion"
    DELETION = "deletion"


def upsample_nearest(values: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = values.shape
    ys = (np.arange(height) * h) // height
    xs = (np.arange(width) * w) // width
    return values[np.ix_(ys, xs)]


def upsample_bilinear(values: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = values.shape
    ys = (np.arange(height) + 0.5) * h / height - 0.5
    xs = (np.arange(width) + 0.5) * w / width - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    v00 = values[np.ix_(y0, x0)]
    v01 = values[np.ix_(y0, x1)]
    v10 = values[np.ix_(y1, x0)]
    v11 = values[np.ix_(y1, x1)]
    return (v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx)


def pixel_rank_order(values: np.ndarray) -> np.ndarray:
    """Flat pixel indices sorted by descending value, ties in raster order."""
    return np.argsort(-values.ravel(), kind="stable")


def compose_fractional(
    image: ImageTensor,
    baseline: ImageTensor,
    map_values: np.ndarray,
    fraction: float,
    direction: Direction,
    upsample: str = "nearest",
) -> ImageTensor:
    """Pixel-level blend for perturbation curves.

    Insertion keeps the top ``fraction`` of map-ranked pixels from the image
    (rest baseline); deletion swaps the roles, so deletion at f equals
    insertion with image and baseline exchanged.
    """
    _check_same_shape(image, baseline)
    if not 0.0 <= fraction <= 1.0:
        raise DimensionError(f"fraction {fraction} outside [0, 1]")
    if upsample == "nearest":
        up = upsample_nearest(np.asarray(map_values, dtype=np.float64), image.height, image.width)
    elif upsample == "bilinear":
        up = upsample_bilinear(np.asarray(map_values, dtype=np.float64), image.height, image.width)
    else:
        raise DimensionError(f"unknown upsample method {upsample!r}")
    n_pixels = image.height * image.width
    k = int(np.floor(fraction * n_pixels + 0.5))
    chosen = pixel_rank_order(up)[:k]
    top = np.zeros(n_pixels, dtype=bool)
    top[chosen] = True
    top = top.reshape(image.height, image.width)
    if direction is Direction.INSERTION:
        out = np.where(top[None, :, :], image.pixels, baseline.pixels)
    else:
        out = np.where(top[None, :, :], baseline.pixels, image.pixels)
    return ImageTensor(out, ident=None, _validate=False)


def load_image(path, size: int | None = 224, grayscale: bool = False) -> ImageTensor:
    """Load a PNG/JPEG as an ImageTensor, resized bilinearly to size x size."""
    from PIL import Image

    with Image.open(path) as img:
        img = img.convert("L" if grayscale else "RGB")
        if size is not None:
            img = img.resize((size, size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.transpose(arr, (2, 0, 1))
    ident = os.path.splitext(os.path.basename(str(path)))[0]
    return ImageTensor(arr, ident=ident)
