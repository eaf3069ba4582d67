# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels.

Arithmetic is ordered identically to the NumPy fallback so float64 output
is bit-identical across backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()

BACKEND_NAME = "cython"

# large finite sentinel: fits in int64 and survives squaring-free arithmetic
cdef long long INF64 = 0x3FFFFFFFFFFFFFFF


cdef void _envelope_1d(long long[::1] f, long long[::1] d, long long[::1] v,
                       double[::1] z, Py_ssize_t n) noexcept nogil:
    """Lower envelope of parabolas y = f[q] + (x - q)^2 sampled at 0..n-1."""
    cdef Py_ssize_t q, k
    cdef double s
    k = 0
    v[0] = 0
    z[0] = -1e300
    z[1] = 1e300
    for q in range(1, n):
        if f[q] >= INF64:
            continue
        while True:
            s = ((f[q] + <double>(q * q)) - (f[v[k]] + <double>(v[k] * v[k]))) / <double>(2 * q - 2 * v[k])
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = 1e300
    k = 0
    for q in range(n):
        while z[k + 1] < <double>q:
            k += 1
        d[q] = f[v[k]] + (q - v[k]) * (q - v[k])


def distance_field(edge):
    """Exact Euclidean distance to the nearest True pixel of ``edge``."""
    cdef const cnp.uint8_t[:, ::1] ev = np.ascontiguousarray(edge, dtype=np.uint8)
    cdef Py_ssize_t h = ev.shape[0]
    cdef Py_ssize_t w = ev.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] sq = np.empty((h, w), dtype=np.int64)
    cdef long long[:, ::1] sqv = sq
    cdef Py_ssize_t x, y
    cdef long long dd

    # columns: squared distance to the nearest edge row, two sweeps
    cdef cnp.ndarray[cnp.int64_t, ndim=1] near = np.empty(h, dtype=np.int64)
    cdef long long[::1] nv = near
    cdef long long last
    for x in range(w):
        last = -INF64
        for y in range(h):
            if ev[y, x]:
                last = y
            nv[y] = last
        for y in range(h):
            if nv[y] > -INF64:
                sqv[y, x] = (y - nv[y]) * (y - nv[y])
            else:
                sqv[y, x] = INF64
        last = INF64
        for y in range(h - 1, -1, -1):
            if ev[y, x]:
                last = y
            if last < INF64:
                dd = (last - y) * (last - y)
                if dd < sqv[y, x]:
                    sqv[y, x] = dd

    # rows: lower envelope over the column distances
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_sq = np.empty((h, w), dtype=np.int64)
    cdef long long[:, ::1] ov = out_sq
    cdef cnp.ndarray[cnp.int64_t, ndim=1] fbuf = np.empty(w, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dbuf = np.empty(w, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] vbuf = np.empty(w, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(w + 1, dtype=np.float64)
    cdef long long[::1] fv = fbuf
    cdef long long[::1] dv = dbuf
    cdef long long[::1] vv = vbuf
    cdef double[::1] zv = zbuf
    cdef Py_ssize_t first
    for y in range(h):
        first = -1
        for x in range(w):
            fv[x] = sqv[y, x]
            if first < 0 and fv[x] < INF64:
                first = x
        if first < 0:
            for x in range(w):
                ov[y, x] = INF64
            continue
        # a leading INF64 seed parabola is harmless: the first finite parabola
        # intersects it far left of the grid, so it is never selected
        _envelope_1d(fv, dv, vv, zv, w)
        for x in range(w):
            ov[y, x] = dv[x]

    return np.sqrt(out_sq.astype(np.float64))


def point_costs(dt, xs, ys):
    """Bilinear sample of ``dt`` at (xs, ys), clamped to the grid with an
    additive penalty equal to the out-of-bounds distance."""
    cdef const double[:, ::1] d = np.ascontiguousarray(dt, dtype=np.float64)
    cdef const double[::1] px = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] py = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t h = d.shape[0]
    cdef Py_ssize_t w = d.shape[1]
    cdef Py_ssize_t n = px.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, xi, yi
    cdef double cx, cy, wx0, wx1, wy0, wy1, v, dxp, dyp
    for i in range(n):
        cx = px[i]
        if cx < 0.0:
            cx = 0.0
        elif cx > w - 1.0:
            cx = w - 1.0
        cy = py[i]
        if cy < 0.0:
            cy = 0.0
        elif cy > h - 1.0:
            cy = h - 1.0
        xi = <Py_ssize_t>floor(cx)
        if xi > w - 2:
            xi = w - 2
        yi = <Py_ssize_t>floor(cy)
        if yi > h - 2:
            yi = h - 2
        wx1 = cx - xi
        wx0 = 1.0 - wx1
        wy1 = cy - yi
        wy0 = 1.0 - wy1
        v = wy0 * (wx0 * d[yi, xi] + wx1 * d[yi, xi + 1]) + wy1 * (
            wx0 * d[yi + 1, xi] + wx1 * d[yi + 1, xi + 1]
        )
        dxp = px[i] - cx
        dyp = py[i] - cy
        ov[i] = v + sqrt(dxp * dxp + dyp * dyp)
    return out


def translation_scan(dt, xs, ys, double tx0, double ty0, Py_ssize_t nx, Py_ssize_t ny):
    """Summed point costs over every integer translation in the window."""
    cdef const double[:, ::1] d = np.ascontiguousarray(dt, dtype=np.float64)
    cdef const double[::1] pxa = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] pya = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t h = d.shape[0]
    cdef Py_ssize_t w = d.shape[1]
    cdef Py_ssize_t n = pxa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grid = np.zeros((ny, nx), dtype=np.float64)
    cdef double[:, ::1] gv = grid
    cdef Py_ssize_t i, ti, tj, xi, yi
    cdef double px, py, cx, cy, wx0, wx1, wy0, wy1, v, penx, peny
    for i in range(n):
        for ti in range(ny):
            py = pya[i] + (ty0 + ti)
            cy = py
            if cy < 0.0:
                cy = 0.0
            elif cy > h - 1.0:
                cy = h - 1.0
            yi = <Py_ssize_t>floor(cy)
            if yi > h - 2:
                yi = h - 2
            wy1 = cy - yi
            wy0 = 1.0 - wy1
            peny = py - cy
            for tj in range(nx):
                px = pxa[i] + (tx0 + tj)
                cx = px
                if cx < 0.0:
                    cx = 0.0
                elif cx > w - 1.0:
                    cx = w - 1.0
                xi = <Py_ssize_t>floor(cx)
                if xi > w - 2:
                    xi = w - 2
                wx1 = cx - xi
                wx0 = 1.0 - wx1
                v = wy0 * (wx0 * d[yi, xi] + wx1 * d[yi, xi + 1]) + wy1 * (
                    wx0 * d[yi + 1, xi] + wx1 * d[yi + 1, xi + 1]
                )
                penx = px - cx
                gv[ti, tj] += v + sqrt(penx * penx + peny * peny)
    return grid


def warp_mask_nn(mask, double cos_t, double sin_t, double inv_r, double tx, double ty,
                 double ux, double uy, Py_ssize_t out_w, Py_ssize_t out_h,
                 Py_ssize_t x_lo, Py_ssize_t x_hi, Py_ssize_t y_lo, Py_ssize_t y_hi):
    """Nearest-neighbor rasterization of ``mask`` under the inverse
    similarity warp, filled inside [x_lo, x_hi) x [y_lo, y_hi)."""
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t mh = m.shape[0]
    cdef Py_ssize_t mw = m.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef Py_ssize_t x, y, xi, yi
    cdef double dx, dy, xt, yt
    if x_hi <= x_lo or y_hi <= y_lo:
        return out
    for y in range(y_lo, y_hi):
        dy = y - ty - uy
        for x in range(x_lo, x_hi):
            dx = x - tx - ux
            xt = (cos_t * dx + sin_t * dy) * inv_r + ux
            yt = (cos_t * dy - sin_t * dx) * inv_r + uy
            xi = <Py_ssize_t>floor(xt + 0.5)
            yi = <Py_ssize_t>floor(yt + 0.5)
            if 0 <= xi < mw and 0 <= yi < mh and m[yi, xi]:
                ov[y, x] = 1
    return out
