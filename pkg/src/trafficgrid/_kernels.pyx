# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled HOG/LBP kernels. Same contract as trafficgrid._fallback; the
inner loops run without the GIL so callers can fan cells out over threads."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, floor, fmod, M_PI

cnp.import_array()


cdef inline double _orient(double gx, double gy) noexcept nogil:
    cdef double a = fmod(atan2(gy, gx) * (180.0 / M_PI), 180.0)
    if a < 0.0:
        a += 180.0
        if a >= 180.0:
            a -= 180.0
    return a


cdef void _hog_cell(const double[:, ::1] img, int sub, int nbins, double[::1] out) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t ny = h // sub, nx = w // sub
    cdef Py_ssize_t y, x, j, base, b
    cdef double gx, gy, width = 180.0 / nbins, s
    for j in range(ny * nx * nbins):
        out[j] = 0.0
    for y in range(ny * sub):
        for x in range(nx * sub):
            if w == 1:
                gx = 0.0
            elif x == 0:
                gx = img[y, 1] - img[y, 0]
            elif x == w - 1:
                gx = img[y, w - 1] - img[y, w - 2]
            else:
                gx = img[y, x + 1] - img[y, x - 1]
            if h == 1:
                gy = 0.0
            elif y == 0:
                gy = img[1, x] - img[0, x]
            elif y == h - 1:
                gy = img[h - 1, x] - img[h - 2, x]
            else:
                gy = img[y + 1, x] - img[y - 1, x]
            b = <Py_ssize_t>floor(_orient(gx, gy) / width)
            if b > nbins - 1:
                b = nbins - 1
            elif b < 0:
                b = 0
            base = ((y // sub) * nx + (x // sub)) * nbins
            out[base + b] += sqrt(gx * gx + gy * gy)
    for b in range(ny * nx):
        base = b * nbins
        s = 0.0
        for j in range(nbins):
            s += out[base + j] * out[base + j]
        s = sqrt(s + 1e-20)
        for j in range(nbins):
            out[base + j] = out[base + j] / s


def hog_batch(const double[:, :, ::1] cells, int sub, int orientations):
    cdef Py_ssize_t n = cells.shape[0], k
    cdef Py_ssize_t dim = (cells.shape[1] // sub) * (cells.shape[2] // sub) * orientations
    out_arr = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for k in range(n):
            _hog_cell(cells[k], sub, orientations, out[k])
    return out_arr


cdef void _lbp_cell(const double[:, ::1] img, int R, int P,
                    const long[::1] x0, const long[::1] y0, const long[::1] x1, const long[::1] y1,
                    const double[::1] tx, const double[::1] ty, double[::1] out) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x, k
    cdef double c, i00, i01, i10, i11, v
    cdef int bit, first, prev, ones, trans, code
    for k in range(P + 2):
        out[k] = 0.0
    for y in range(R, h - R):
        for x in range(R, w - R):
            c = img[y, x]
            ones = 0
            trans = 0
            first = 0
            prev = 0
            for k in range(P):
                i00 = img[y + y0[k], x + x0[k]]
                i01 = img[y + y0[k], x + x1[k]]
                i10 = img[y + y1[k], x + x0[k]]
                i11 = img[y + y1[k], x + x1[k]]
                v = i00 + tx[k] * (i01 - i00) + ty[k] * (i10 - i00) + (tx[k] * ty[k]) * (i00 - i01 - i10 + i11)
                bit = 1 if v >= c else 0
                ones += bit
                if k == 0:
                    first = bit
                elif bit != prev:
                    trans += 1
                prev = bit
            if prev != first:
                trans += 1
            code = ones if trans <= 2 else P + 1
            out[code] += 1.0
    c = <double>((h - 2 * R) * (w - 2 * R))
    for k in range(P + 2):
        out[k] = out[k] / c


def lbp_batch(const double[:, :, ::1] cells, int radius, int points, dx, dy):
    cdef Py_ssize_t n = cells.shape[0], k
    fdx = np.floor(np.asarray(dx, dtype=np.float64))
    fdy = np.floor(np.asarray(dy, dtype=np.float64))
    tx_arr = np.ascontiguousarray(np.asarray(dx, dtype=np.float64) - fdx)
    ty_arr = np.ascontiguousarray(np.asarray(dy, dtype=np.float64) - fdy)
    x0_arr = fdx.astype(np.int_)
    y0_arr = fdy.astype(np.int_)
    x1_arr = np.ascontiguousarray(x0_arr + (tx_arr > 0.0))
    y1_arr = np.ascontiguousarray(y0_arr + (ty_arr > 0.0))
    cdef const long[::1] x0 = x0_arr, y0 = y0_arr, x1 = x1_arr, y1 = y1_arr
    cdef const double[::1] tx = tx_arr, ty = ty_arr
    out_arr = np.empty((n, points + 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for k in range(n):
            _lbp_cell(cells[k], radius, points, x0, y0, x1, y1, tx, ty, out[k])
    return out_arr
