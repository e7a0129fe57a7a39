"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same arithmetic; used when the extension is not built or
``OMNIDENSITY_BACKEND=python`` is set.  ``threads`` is accepted and ignored.
Work is chunked by destination rows to bound memory.
"""
import math

import numpy as np

_ROWS_PER_CHUNK = 256


def _sample_equirect(src, sx, sy, sz, bilinear):
    h, w, _ = src.shape
    lon = np.arctan2(sy, sx)
    lon = np.where(lon >= math.pi, lon - 2.0 * math.pi, lon)
    lat = np.arcsin(np.clip(sz, -1.0, 1.0))
    fx = (lon + math.pi) / (2.0 * math.pi) * w - 0.5
    fy = (math.pi / 2.0 - lat) / math.pi * h - 0.5
    if not bilinear:
        xa = np.floor(fx + 0.5).astype(np.intp) % w
        ya = np.clip(np.floor(fy + 0.5).astype(np.intp), 0, h - 1)
        return src[ya, xa]
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    wx = (fx - x0)[..., None]
    wy = (fy - y0)[..., None]
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    xa = x0 % w
    xb = (x0 + 1) % w
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    s = src.astype(np.float64, copy=False)
    val = ((1.0 - wy) * ((1.0 - wx) * s[ya, xa] + wx * s[ya, xb])
           + wy * ((1.0 - wx) * s[yb, xa] + wx * s[yb, xb]))
    return val.astype(np.float32)


def _rotate_rows(m, x, y, z):
    return (m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
            m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
            m[2, 0] * x + m[2, 1] * y + m[2, 2] * z)


def reproject_stereo(src, m, d, scale, cu, cv, out_h, out_w, bilinear=1, threads=1):
    src = np.ascontiguousarray(src, dtype=np.float32)
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros((out_h, out_w, src.shape[2]), dtype=np.float32)
    dp1 = 1.0 + d
    j = np.arange(out_w, dtype=np.float64)
    for r0 in range(0, out_h, _ROWS_PER_CHUNK):
        i = np.arange(r0, min(out_h, r0 + _ROWS_PER_CHUNK), dtype=np.float64)[:, None]
        px = (j[None, :] - cu) / scale
        py = (i - cv) / scale
        px, py = np.broadcast_arrays(px, py)
        t = 2.0 * dp1 / (px * px + py * py + dp1 * dp1)
        sx, sy, sz = _rotate_rows(m, t * px, t * py, 1.0 - t * dp1)
        out[r0:r0 + len(i)] = _sample_equirect(src, sx, sy, sz, bilinear)
    return out


def rotate_equirect(src, m, bilinear=1, threads=1):
    src = np.ascontiguousarray(src, dtype=np.float32)
    m = np.asarray(m, dtype=np.float64)
    h, w, nc = src.shape
    out = np.zeros((h, w, nc), dtype=np.float32)
    lon = -math.pi + (np.arange(w) + 0.5) * (2.0 * math.pi) / w
    for r0 in range(0, h, _ROWS_PER_CHUNK):
        i = np.arange(r0, min(h, r0 + _ROWS_PER_CHUNK))
        lat = (math.pi / 2.0 - (i + 0.5) * math.pi / h)[:, None]
        cl = np.cos(lat)
        x = cl * np.cos(lon)[None, :]
        y = cl * np.sin(lon)[None, :]
        z = np.broadcast_to(np.sin(lat), x.shape)
        sx, sy, sz = _rotate_rows(m, x, y, z)
        out[r0:r0 + len(i)] = _sample_equirect(src, sx, sy, sz, bilinear)
    return out


def warp_affine(src, a, out_h, out_w, threads=1):
    src = np.ascontiguousarray(src, dtype=np.float32)
    a = np.asarray(a, dtype=np.float64)
    h, w, nc = src.shape
    out = np.zeros((out_h, out_w, nc), dtype=np.float32)
    mask = np.zeros((out_h, out_w), dtype=np.uint8)
    tol = 1e-9
    j = np.arange(out_w, dtype=np.float64)[None, :]
    s = src.astype(np.float64)
    for r0 in range(0, out_h, _ROWS_PER_CHUNK):
        i = np.arange(r0, min(out_h, r0 + _ROWS_PER_CHUNK), dtype=np.float64)[:, None]
        fx = a[0, 0] * j + a[0, 1] * i + a[0, 2]
        fy = a[1, 0] * j + a[1, 1] * i + a[1, 2]
        ok = (fx >= -tol) & (fy >= -tol) & (fx <= w - 1 + tol) & (fy <= h - 1 + tol)
        x0 = np.clip(np.floor(fx), 0, w - 1)
        y0 = np.clip(np.floor(fy), 0, h - 1)
        wx = np.clip(fx - x0, 0.0, 1.0)[..., None]
        wy = np.clip(fy - y0, 0.0, 1.0)[..., None]
        x0 = x0.astype(np.intp)
        y0 = y0.astype(np.intp)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        val = ((1.0 - wy) * ((1.0 - wx) * s[y0, x0] + wx * s[y0, x1])
               + wy * ((1.0 - wx) * s[y1, x0] + wx * s[y1, x1]))
        val[~ok] = 0.0
        out[r0:r0 + len(i)] = val.astype(np.float32)
        mask[r0:r0 + len(i)] = ok
    return out, mask
