"""Twice-differentiable field interpolation for the tracking objective.

Gradient descent over poses needs objective terms that are smooth in
sub-pixel coordinates; bilinear lookups have kinks at every pixel line.
Distance fields and (Gaussian-softened) template masks are therefore
wrapped in bicubic interpolating splines with exact analytic derivatives.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline


class SmoothField:
    """Bicubic spline over a raster grid with an optional coordinate offset.

    The grid covers x in [x0, x0+w-1], y in [y0, y0+h-1]. Queries outside
    the grid are clamped (value/gradient of the nearest border point),
    unless zero_outside is set, in which case they return exactly 0.
    """

    def __init__(self, grid, x0=0.0, y0=0.0, zero_outside=False):
        grid = np.asarray(grid, dtype=np.float64)
        h, w = grid.shape
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.x1 = float(x0 + w - 1)
        self.y1 = float(y0 + h - 1)
        self.zero_outside = zero_outside
        ys = y0 + np.arange(h, dtype=np.float64)
        xs = x0 + np.arange(w, dtype=np.float64)
        self._spline = RectBivariateSpline(ys, xs, grid, kx=3, ky=3, s=0)

    def _clamped(self, xs, ys):
        cx = np.clip(xs, self.x0, self.x1)
        cy = np.clip(ys, self.y0, self.y1)
        return cx, cy

    def _outside(self, xs, ys):
        return (xs < self.x0) | (xs > self.x1) | (ys < self.y0) | (ys > self.y1)

    def value(self, xs, ys):
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        cx, cy = self._clamped(xs, ys)
        v = self._spline.ev(cy, cx)
        if self.zero_outside:
            v = np.where(self._outside(xs, ys), 0.0, v)
        return v

    def gradient(self, xs, ys):
        """Returns (d/dx, d/dy) at the query points."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        cx, cy = self._clamped(xs, ys)
        gx = self._spline.ev(cy, cx, dx=0, dy=1)
        gy = self._spline.ev(cy, cx, dx=1, dy=0)
        out = self._outside(xs, ys)
        if self.zero_outside:
            gx = np.where(out, 0.0, gx)
            gy = np.where(out, 0.0, gy)
        else:
            # clamped queries hold the border value constant along the
            # clamped axis, so the corresponding derivative is zero
            gx = np.where((xs < self.x0) | (xs > self.x1), 0.0, gx)
            gy = np.where((ys < self.y0) | (ys > self.y1), 0.0, gy)
        return gx, gy


def distance_spline(edge_raster, pad=8):
    """SmoothField of the exact distance field of a padded edge raster.

    Padding keeps queries up to ``pad`` px outside the frame inside the
    interpolation domain, where the distance keeps growing smoothly.
    """
    from . import _kernels

    h, w = edge_raster.shape
    padded = np.zeros((h + 2 * pad, w + 2 * pad), dtype=np.uint8)
    padded[pad : pad + h, pad : pad + w] = edge_raster
    dist = _kernels.distance_field(padded)
    return SmoothField(dist, x0=-pad, y0=-pad)


def soft_mask_spline(mask_bits, sigma=1.0):
    """SmoothField of a Gaussian-softened binary mask, zero outside.

    The mask is blurred with the given sigma (truncated at 3 sigma) and
    zero-padded far enough that the spline's support boundary region is
    identically zero; outside queries can then return an exact 0 without
    breaking smoothness.
    """
    pad = int(np.ceil(3.0 * sigma)) + 6
    h, w = mask_bits.shape
    padded = np.zeros((h + 2 * pad, w + 2 * pad), dtype=np.float64)
    padded[pad : pad + h, pad : pad + w] = mask_bits
    soft = ndimage.gaussian_filter(padded, sigma=sigma, truncate=3.0, mode="constant")
    return SmoothField(soft, x0=-pad, y0=-pad, zero_outside=True)


def soften_mask(mask_bits, sigma=1.0):
    """Gaussian-softened copy of a binary mask on its own grid."""
    arr = np.asarray(mask_bits, dtype=np.float64)
    return ndimage.gaussian_filter(arr, sigma=sigma, truncate=3.0, mode="constant")
