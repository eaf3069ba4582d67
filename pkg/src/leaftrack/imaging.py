"""Raster primitives: grayscale frames, binary masks, edge maps, distance
fields, connected components, and 1-D Gaussian smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from . import _kernels

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def _freeze(obj, name, arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class GrayImage:
    """Intensity raster with values in [0, 1], shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("image data must be 2-D")
        if data.size and (data.min() < -1e-9 or data.max() > 1.0 + 1e-9):
            raise ValueError("image intensities must lie in [0, 1]")
        _freeze(self, "data", data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """0/1 raster, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError("mask bits must be 2-D")
        _freeze(self, "bits", (bits != 0).astype(np.uint8))

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def area(self):
        return int(self.bits.sum())

    def vector(self):
        """Row-major flattened 0/1 vector of length width*height."""
        return self.bits.ravel()


@dataclass(frozen=True)
class EdgeMap:
    """Edge point set; points are (x, y) rows, sub-pixel allowed."""

    points: np.ndarray
    bounds: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        _freeze(self, "points", pts)
        object.__setattr__(self, "bounds", (int(self.bounds[0]), int(self.bounds[1])))

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DistanceField:
    """Per-pixel Euclidean distance to the nearest edge point."""

    dist: np.ndarray

    def __post_init__(self):
        _freeze(self, "dist", np.asarray(self.dist, dtype=np.float64))

    @property
    def height(self):
        return self.dist.shape[0]

    @property
    def width(self):
        return self.dist.shape[1]


def edge_raster(edges):
    """Binary raster of an edge map, points rounded to pixel centers."""
    w, h = edges.bounds
    raster = np.zeros((h, w), dtype=np.uint8)
    if len(edges):
        xi = np.clip(np.floor(edges.points[:, 0] + 0.5).astype(np.int64), 0, w - 1)
        yi = np.clip(np.floor(edges.points[:, 1] + 0.5).astype(np.int64), 0, h - 1)
        raster[yi, xi] = 1
    return raster


def distance_transform(edges):
    """Exact Euclidean distance field of an edge map.

    Edge points are rounded to the nearest pixel center; every point must
    rasterize inside the bounds.
    """
    if len(edges) == 0:
        raise ValueError("empty edge map")
    return DistanceField(_kernels.distance_field(edge_raster(edges)))


def dt_gradients(field):
    """Central-difference gradient images (d/dx, d/dy) of a distance field,
    one-sided at borders."""
    gy, gx = np.gradient(field.dist)
    return gx, gy


def sobel_edges(img, mask, rel_threshold=0.10):
    """Detect edges of the masked image with 3x3 Sobel kernels.

    A pixel is an edge iff its gradient magnitude reaches rel_threshold of
    the maximum magnitude and it lies within the mask dilated by 1 pixel.
    """
    if img.data.shape != mask.bits.shape:
        raise ValueError("image and mask dimensions differ")
    if not 0.0 < rel_threshold < 1.0:
        raise ValueError("rel_threshold must be in (0, 1)")
    # replicate at the frame border: zero padding would manufacture a step
    # (and hence spurious edge points) wherever the mask touches the border
    masked = img.data * mask.bits
    gx = ndimage.convolve(masked, SOBEL_X, mode="nearest")
    gy = ndimage.convolve(masked, SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0.0:
        raise ValueError("no edges detected")
    dilated = ndimage.binary_dilation(mask.bits, structure=np.ones((3, 3), dtype=bool))
    keep = (mag >= rel_threshold * peak) & dilated
    ys, xs = np.nonzero(keep)
    if xs.size == 0:
        raise ValueError("no edges detected")
    pts = np.column_stack([xs, ys]).astype(np.float64)
    return EdgeMap(points=pts, bounds=(img.width, img.height))


def foreground_mask(img):
    """Otsu threshold (256-bin histogram); pixels >= threshold are foreground."""
    data = img.data
    if data.size == 0 or data.max() == data.min():
        raise ValueError("degenerate histogram")
    counts, _ = np.histogram(data, bins=256, range=(0.0, 1.0))
    counts = counts.astype(np.float64)
    total = counts.sum()
    centers = (np.arange(256) + 0.5) / 256.0
    w0 = np.cumsum(counts)
    w1 = total - w0
    mass0 = np.cumsum(counts * centers)
    mass1 = mass0[-1] - mass0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(w0 > 0, mass0 / w0, 0.0)
        mu1 = np.where(w1 > 0, mass1 / w1, 0.0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    k = int(np.argmax(between[:-1]))
    if between[k] <= 0.0:
        raise ValueError("degenerate histogram")
    threshold = (k + 1) / 256.0
    return BinaryMask(bits=(data >= threshold).astype(np.uint8))


def connected_components(mask):
    """8-connected components as (component mask, area), sorted by area
    descending; ties keep label order."""
    structure = np.ones((3, 3), dtype=bool)
    labels, count = ndimage.label(mask.bits, structure=structure)
    if count == 0:
        return []
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    order = sorted(range(count), key=lambda i: (-areas[i], i))
    out = []
    for i in order:
        comp = BinaryMask(bits=(labels == i + 1).astype(np.uint8))
        out.append((comp, int(areas[i])))
    return out


def mask_centroid(mask):
    """Centroid (x, y) of the foreground pixels."""
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        raise ValueError("empty mask has no centroid")
    return np.array([xs.mean(), ys.mean()])


def gaussian_smooth_1d(signal, sigma):
    """Gaussian smoothing with kernel truncated at +-ceil(3*sigma) and
    renormalized at the boundaries so weights always sum to 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        return np.array([], dtype=np.float64)
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones_like(x), kernel, mode="same")
    if x.size < kernel.size:
        # np.convolve "same" crops the center; renormalization still needs
        # the true per-index weight sums, so compute them by full convolve
        full_num = np.convolve(x, kernel, mode="full")
        full_den = np.convolve(np.ones_like(x), kernel, mode="full")
        start = (full_num.size - x.size) // 2
        num = full_num[start : start + x.size]
        den = full_den[start : start + x.size]
    return num / den


def read_gray(path):
    """Read an 8- or 16-bit grayscale PNG/PGM, normalized to [0, 1]."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode == "I":
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return GrayImage(data=np.clip(arr, 0.0, 1.0))


def write_gray(path, img, bit_depth=16):
    """Write a grayscale PNG/PGM at the requested bit depth."""
    if bit_depth == 16:
        arr = np.floor(img.data * 65535.0 + 0.5).astype(np.uint16)
        Image.fromarray(arr, mode="I;16").save(path)
    elif bit_depth == 8:
        arr = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(path)
    else:
        raise ValueError("bit_depth must be 8 or 16")
