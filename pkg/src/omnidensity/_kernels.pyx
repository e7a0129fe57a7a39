# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled resampling kernels.

Every destination pixel is computed independently from immutable inputs;
rows are split into static bands across OpenMP threads, so the output does
not depend on the thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor, atan2, asin, M_PI, cos as _cos, sin as _sin

cnp.import_array()


cdef inline Py_ssize_t _wrap(Py_ssize_t x, Py_ssize_t n) noexcept nogil:
    x = x % n
    if x < 0:
        x = x + n
    return x


cdef inline Py_ssize_t _clamp(Py_ssize_t x, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef inline void _sample_equirect(const float[:, :, ::1] src, double sx, double sy, double sz,
                                  int bilinear, float[:, :, ::1] out,
                                  Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t nc = src.shape[2]
    cdef double lon, lat, fx, fy, wx, wy, zc
    cdef Py_ssize_t x0, y0, xa, xb, ya, yb, c
    if sz > 1.0:
        zc = 1.0
    elif sz < -1.0:
        zc = -1.0
    else:
        zc = sz
    lon = atan2(sy, sx)
    if lon >= M_PI:
        lon = lon - 2.0 * M_PI
    lat = asin(zc)
    fx = (lon + M_PI) / (2.0 * M_PI) * w - 0.5
    fy = (M_PI / 2.0 - lat) / M_PI * h - 0.5
    if bilinear:
        x0 = <Py_ssize_t>floor(fx)
        y0 = <Py_ssize_t>floor(fy)
        wx = fx - x0
        wy = fy - y0
        xa = _wrap(x0, w)
        xb = _wrap(x0 + 1, w)
        ya = _clamp(y0, 0, h - 1)
        yb = _clamp(y0 + 1, 0, h - 1)
        for c in range(nc):
            out[i, j, c] = <float>(
                (1.0 - wy) * ((1.0 - wx) * src[ya, xa, c] + wx * src[ya, xb, c])
                + wy * ((1.0 - wx) * src[yb, xa, c] + wx * src[yb, xb, c]))
    else:
        xa = _wrap(<Py_ssize_t>floor(fx + 0.5), w)
        ya = _clamp(<Py_ssize_t>floor(fy + 0.5), 0, h - 1)
        for c in range(nc):
            out[i, j, c] = src[ya, xa, c]


def reproject_stereo(const float[:, :, ::1] src, double[:, ::1] m, double d, double scale,
                     double cu, double cv, Py_ssize_t out_h, Py_ssize_t out_w,
                     int bilinear=1, int threads=1):
    """Equirectangular -> stereographic.  ``m`` maps output-frame directions
    to source-frame directions."""
    cdef Py_ssize_t nc = src.shape[2]
    out_arr = np.zeros((out_h, out_w, nc), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double px, py, t, x, y, z, sx, sy, sz
    cdef double dp1 = 1.0 + d
    for i in prange(out_h, nogil=True, schedule="static", num_threads=threads):
        for j in range(out_w):
            px = (j - cu) / scale
            py = (i - cv) / scale
            t = 2.0 * dp1 / (px * px + py * py + dp1 * dp1)
            x = t * px
            y = t * py
            z = 1.0 - t * dp1
            sx = m[0, 0] * x + m[0, 1] * y + m[0, 2] * z
            sy = m[1, 0] * x + m[1, 1] * y + m[1, 2] * z
            sz = m[2, 0] * x + m[2, 1] * y + m[2, 2] * z
            _sample_equirect(src, sx, sy, sz, bilinear, out, i, j)
    return out_arr


def rotate_equirect(const float[:, :, ::1] src, double[:, ::1] m, int bilinear=1, int threads=1):
    """Equirectangular -> equirectangular under a sphere rotation.  ``m`` maps
    output directions to source directions."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t nc = src.shape[2]
    out_arr = np.zeros((h, w, nc), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double lon, lat, cl, x, y, z, sx, sy, sz
    cdef double two_pi = 2.0 * M_PI
    for i in prange(h, nogil=True, schedule="static", num_threads=threads):
        lat = M_PI / 2.0 - (i + 0.5) * M_PI / h
        for j in range(w):
            lon = -M_PI + (j + 0.5) * two_pi / w
            cl = _cos(lat)
            x = cl * _cos(lon)
            y = cl * _sin(lon)
            z = _sin(lat)
            sx = m[0, 0] * x + m[0, 1] * y + m[0, 2] * z
            sy = m[1, 0] * x + m[1, 1] * y + m[1, 2] * z
            sz = m[2, 0] * x + m[2, 1] * y + m[2, 2] * z
            _sample_equirect(src, sx, sy, sz, bilinear, out, i, j)
    return out_arr



def warp_affine(const float[:, :, ::1] src, double[:, ::1] a, Py_ssize_t out_h, Py_ssize_t out_w,
                int threads=1):
    """Bilinear inverse-mapped affine warp.

    ``a`` is 2x3 and maps destination ``(u, v, 1)`` to source ``(u, v)``.
    Samples falling outside the source pixel-centre hull are black and
    flagged invalid in the returned mask.
    """
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t nc = src.shape[2]
    out_arr = np.zeros((out_h, out_w, nc), dtype=np.float32)
    mask_arr = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef float[:, :, ::1] out = out_arr
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef Py_ssize_t i, j, c, x0, y0, x1, y1
    cdef double fx, fy, wx, wy
    cdef double tol = 1e-9
    for i in prange(out_h, nogil=True, schedule="static", num_threads=threads):
        for j in range(out_w):
            fx = a[0, 0] * j + a[0, 1] * i + a[0, 2]
            fy = a[1, 0] * j + a[1, 1] * i + a[1, 2]
            if fx < -tol or fy < -tol or fx > w - 1 + tol or fy > h - 1 + tol:
                continue
            x0 = _clamp(<Py_ssize_t>floor(fx), 0, w - 1)
            y0 = _clamp(<Py_ssize_t>floor(fy), 0, h - 1)
            x1 = _clamp(x0 + 1, 0, w - 1)
            y1 = _clamp(y0 + 1, 0, h - 1)
            wx = fx - x0
            wy = fy - y0
            if wx < 0.0:
                wx = 0.0
            elif wx > 1.0:
                wx = 1.0
            if wy < 0.0:
                wy = 0.0
            elif wy > 1.0:
                wy = 1.0
            for c in range(nc):
                out[i, j, c] = <float>(
                    (1.0 - wy) * ((1.0 - wx) * src[y0, x0, c] + wx * src[y0, x1, c])
                    + wy * ((1.0 - wx) * src[y1, x0, c] + wx * src[y1, x1, c]))
            mask[i, j] = 1
    return out_arr, mask_arr
