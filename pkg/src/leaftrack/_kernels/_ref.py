"""NumPy fallback for the hot kernels.

Mirrors the compiled core operation-for-operation: every arithmetic
expression is written in the same order so both backends produce
bit-identical float64 output (required by the determinism tests).
"""

import numpy as np
from scipy import ndimage

BACKEND_NAME = "numpy"


def distance_field(edge):
    """Exact Euclidean distance to the nearest True pixel of ``edge``."""
    # scipy's EDT is exact; distances are sqrt of integer sums, so the
    # result is bitwise equal to the compiled lower-envelope version.
    return ndimage.distance_transform_edt(~edge.astype(bool))


def point_costs(dt, xs, ys):
    """Bilinear sample of ``dt`` at (xs, ys), clamped to the grid with an
    additive penalty equal to the out-of-bounds distance."""
    h, w = dt.shape
    cx = np.clip(xs, 0.0, w - 1.0)
    cy = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(cx), w - 2).astype(np.int64)
    y0 = np.minimum(np.floor(cy), h - 2).astype(np.int64)
    wx1 = cx - x0
    wx0 = 1.0 - wx1
    wy1 = cy - y0
    wy0 = 1.0 - wy1
    v = wy0 * (wx0 * dt[y0, x0] + wx1 * dt[y0, x0 + 1]) + wy1 * (
        wx0 * dt[y0 + 1, x0] + wx1 * dt[y0 + 1, x0 + 1]
    )
    dxp = xs - cx
    dyp = ys - cy
    return v + np.sqrt(dxp * dxp + dyp * dyp)


def translation_scan(dt, xs, ys, tx0, ty0, nx, ny):
    """Summed point costs over every integer translation in the window.

    Returns an (ny, nx) grid where cell (i, j) holds the total cost of the
    point set shifted by (tx0 + j, ty0 + i).
    """
    h, w = dt.shape
    grid = np.zeros((ny, nx), dtype=np.float64)
    txs = tx0 + np.arange(nx, dtype=np.float64)
    tys = ty0 + np.arange(ny, dtype=np.float64)
    for i in range(xs.shape[0]):
        px = xs[i] + txs
        py = ys[i] + tys
        cx = np.clip(px, 0.0, w - 1.0)
        cy = np.clip(py, 0.0, h - 1.0)
        x0 = np.minimum(np.floor(cx), w - 2).astype(np.int64)
        y0 = np.minimum(np.floor(cy), h - 2).astype(np.int64)
        wx1 = cx - x0
        wx0 = 1.0 - wx1
        wy1 = cy - y0
        wy0 = 1.0 - wy1
        y0c = y0[:, None]
        x0r = x0[None, :]
        v = wy0[:, None] * (wx0[None, :] * dt[y0c, x0r] + wx1[None, :] * dt[y0c, x0r + 1]) + wy1[
            :, None
        ] * (wx0[None, :] * dt[y0c + 1, x0r] + wx1[None, :] * dt[y0c + 1, x0r + 1])
        penx = px - cx
        peny = py - cy
        pen = np.sqrt((penx * penx)[None, :] + (peny * peny)[:, None])
        grid += v + pen
    return grid


def warp_mask_nn(mask, cos_t, sin_t, inv_r, tx, ty, ux, uy, out_w, out_h, x_lo, x_hi, y_lo, y_hi):
    """Nearest-neighbor rasterization of ``mask`` under the inverse
    similarity warp, filled inside [x_lo, x_hi) x [y_lo, y_hi)."""
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    if x_hi <= x_lo or y_hi <= y_lo:
        return out
    xs = np.arange(x_lo, x_hi, dtype=np.float64)
    ys = np.arange(y_lo, y_hi, dtype=np.float64)
    dx = xs[None, :] - tx - ux
    dy = ys[:, None] - ty - uy
    xt = (cos_t * dx + sin_t * dy) * inv_r + ux
    yt = (cos_t * dy - sin_t * dx) * inv_r + uy
    xi = np.floor(xt + 0.5).astype(np.int64)
    yi = np.floor(yt + 0.5).astype(np.int64)
    mh, mw = mask.shape
    ok = (xi >= 0) & (xi < mw) & (yi >= 0) & (yi < mh)
    vals = np.zeros(ok.shape, dtype=np.uint8)
    vals[ok] = mask[yi[ok], xi[ok]]
    out[y_lo:y_hi, x_lo:x_hi] = vals
    return out
