"""Spectrum slice extraction kernels, pure numpy flavor.

Mirrors the numba twin expression for expression; taps accumulate in
the same order, so slices match bitwise across backends.
"""
from __future__ import annotations

import numpy as np


def _coords(n, right, up, b0, b1):
    c = n * 0.5
    ac = np.arange(n, dtype=np.float64) - c
    bc = np.arange(b0, b1, dtype=np.float64) - c
    x = c + ac[None, :] * right[0] + bc[:, None] * up[0]
    y = c + ac[None, :] * right[1] + bc[:, None] * up[1]
    z = c + ac[None, :] * right[2] + bc[:, None] * up[2]
    ok = (
        (x >= 0.0)
        & (x <= n)
        & (y >= 0.0)
        & (y <= n)
        & (z >= 0.0)
        & (z <= n)
    )
    return x, y, z, ok


def slice_nearest(sre, sim, right, up, b0, b1, out_re, out_im):
    n = sre.shape[0]
    x, y, z, ok = _coords(n, right, up, b0, b1)
    i = np.rint(x).astype(np.int64) % n
    j = np.rint(y).astype(np.int64) % n
    k = np.rint(z).astype(np.int64) % n
    out_re[b0:b1] = np.where(ok, sre[k, j, i], 0.0)
    out_im[b0:b1] = np.where(ok, sim[k, j, i], 0.0)


def _lerp3(plane, i0, i1, j0, j1, k0, k1, fx, fy, fz):
    v000 = plane[k0, j0, i0]
    v100 = plane[k0, j0, i1]
    v010 = plane[k0, j1, i0]
    v110 = plane[k0, j1, i1]
    v001 = plane[k1, j0, i0]
    v101 = plane[k1, j0, i1]
    v011 = plane[k1, j1, i0]
    v111 = plane[k1, j1, i1]
    c00 = v000 + fx * (v100 - v000)
    c10 = v010 + fx * (v110 - v010)
    c01 = v001 + fx * (v101 - v001)
    c11 = v011 + fx * (v111 - v011)
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    return c0 + fz * (c1 - c0)


def slice_trilinear(sre, sim, right, up, b0, b1, out_re, out_im):
    n = sre.shape[0]
    x, y, z, ok = _coords(n, right, up, b0, b1)
    ix = np.floor(x).astype(np.int64)
    jy = np.floor(y).astype(np.int64)
    kz = np.floor(z).astype(np.int64)
    fx = x - ix
    fy = y - jy
    fz = z - kz
    i0 = ix % n
    i1 = (ix + 1) % n
    j0 = jy % n
    j1 = (jy + 1) % n
    k0 = kz % n
    k1 = (kz + 1) % n
    out_re[b0:b1] = np.where(ok, _lerp3(sre, i0, i1, j0, j1, k0, k1, fx, fy, fz), 0.0)
    out_im[b0:b1] = np.where(ok, _lerp3(sim, i0, i1, j0, j1, k0, k1, fx, fy, fz), 0.0)


def _tap_weights(x, radius):
    taps = 2 * radius
    i0 = np.floor(x).astype(np.int64) - radius + 1
    d = x[..., None] - (i0[..., None] + np.arange(taps))
    w = np.sinc(d) * (0.5 * (1.0 + np.cos(np.pi * d / radius)))
    total = w[..., 0].copy()
    for t in range(1, taps):
        total += w[..., t]
    w /= total[..., None]
    return i0, w


def slice_sinc(sre, sim, right, up, radius, b0, b1, out_re, out_im):
    n = sre.shape[0]
    taps = 2 * radius
    x, y, z, ok = _coords(n, right, up, b0, b1)
    ix0, wx = _tap_weights(x, radius)
    iy0, wy = _tap_weights(y, radius)
    iz0, wz = _tap_weights(z, radius)
    acc_re = np.zeros_like(x)
    acc_im = np.zeros_like(x)
    for tz in range(taps):
        k = (iz0 + tz) % n
        for ty in range(taps):
            j = (iy0 + ty) % n
            wzy = wz[..., tz] * wy[..., ty]
            for tx in range(taps):
                i = (ix0 + tx) % n
                w = wzy * wx[..., tx]
                acc_re += w * sre[k, j, i]
                acc_im += w * sim[k, j, i]
    out_re[b0:b1] = np.where(ok, acc_re, 0.0)
    out_im[b0:b1] = np.where(ok, acc_im, 0.0)
