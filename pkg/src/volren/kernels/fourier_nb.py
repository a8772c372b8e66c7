"""Spectrum slice extraction kernels, numba flavor.

All samplers walk output rows [b0, b1) of an (n, n) slice whose point
(b, a) maps to spectrum coordinates

    center + (a - n/2) * right + (b - n/2) * up

in index units, with the spectrum stored (z, y, x) and its zero
frequency at the center.  The spectrum is periodic, so interpolation
neighborhoods wrap around the cube; a sample is zero only when its
principal coordinate leaves the band, i.e. the offset from center
exceeds n/2 along some axis.
"""
from __future__ import annotations

import numpy as np

from ..backend import njit


@njit(inline="always")
def _in_band(x, y, z, n):
    return 0.0 <= x <= n and 0.0 <= y <= n and 0.0 <= z <= n


@njit
def slice_nearest(sre, sim, right, up, b0, b1, out_re, out_im):
    n = sre.shape[0]
    c = n * 0.5
    for b in range(b0, b1):
        bc = b - c
        for a in range(n):
            ac = a - c
            x = c + ac * right[0] + bc * up[0]
            y = c + ac * right[1] + bc * up[1]
            z = c + ac * right[2] + bc * up[2]
            if _in_band(x, y, z, n):
                i = int(np.rint(x)) % n
                j = int(np.rint(y)) % n
                k = int(np.rint(z)) % n
                out_re[b, a] = sre[k, j, i]
                out_im[b, a] = sim[k, j, i]
            else:
                out_re[b, a] = 0.0
                out_im[b, a] = 0.0


@njit(inline="always")
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


@njit
def slice_trilinear(sre, sim, right, up, b0, b1, out_re, out_im):
    n = sre.shape[0]
    c = n * 0.5
    for b in range(b0, b1):
        bc = b - c
        for a in range(n):
            ac = a - c
            x = c + ac * right[0] + bc * up[0]
            y = c + ac * right[1] + bc * up[1]
            z = c + ac * right[2] + bc * up[2]
            if not _in_band(x, y, z, n):
                out_re[b, a] = 0.0
                out_im[b, a] = 0.0
                continue
            ix = int(np.floor(x))
            jy = int(np.floor(y))
            kz = int(np.floor(z))
            fx = x - ix
            fy = y - jy
            fz = z - kz
            i0 = ix % n
            i1 = (ix + 1) % n
            j0 = jy % n
            j1 = (jy + 1) % n
            k0 = kz % n
            k1 = (kz + 1) % n
            out_re[b, a] = _lerp3(sre, i0, i1, j0, j1, k0, k1, fx, fy, fz)
            out_im[b, a] = _lerp3(sim, i0, i1, j0, j1, k0, k1, fx, fy, fz)


@njit(inline="always")
def _tap_weights(x, radius, w):
    i0 = int(np.floor(x)) - radius + 1
    total = 0.0
    for t in range(2 * radius):
        d = x - (i0 + t)
        if d == 0.0:
            s = 1.0
        else:
            y = np.pi * d
            s = np.sin(y) / y
        w[t] = s * (0.5 * (1.0 + np.cos(np.pi * d / radius)))
        total += w[t]
    for t in range(2 * radius):
        w[t] /= total
    return i0


@njit
def slice_sinc(sre, sim, right, up, radius, b0, b1, out_re, out_im):
    n = sre.shape[0]
    c = n * 0.5
    taps = 2 * radius
    wx = np.empty(taps, dtype=np.float64)
    wy = np.empty(taps, dtype=np.float64)
    wz = np.empty(taps, dtype=np.float64)
    for b in range(b0, b1):
        bc = b - c
        for a in range(n):
            ac = a - c
            x = c + ac * right[0] + bc * up[0]
            y = c + ac * right[1] + bc * up[1]
            z = c + ac * right[2] + bc * up[2]
            if not _in_band(x, y, z, n):
                out_re[b, a] = 0.0
                out_im[b, a] = 0.0
                continue
            ix0 = _tap_weights(x, radius, wx)
            iy0 = _tap_weights(y, radius, wy)
            iz0 = _tap_weights(z, radius, wz)
            acc_re = 0.0
            acc_im = 0.0
            for tz in range(taps):
                k = (iz0 + tz) % n
                for ty in range(taps):
                    j = (iy0 + ty) % n
                    wzy = wz[tz] * wy[ty]
                    for tx in range(taps):
                        i = (ix0 + tx) % n
                        w = wzy * wx[tx]
                        acc_re += w * sre[k, j, i]
                        acc_im += w * sim[k, j, i]
            out_re[b, a] = acc_re
            out_im[b, a] = acc_im
