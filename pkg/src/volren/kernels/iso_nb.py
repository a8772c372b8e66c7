"""Isosurface extraction kernels, numba flavor."""
from __future__ import annotations

import numpy as np

from ..backend import njit


@njit
def cube_indices_block(data, t, k0, k1):
    """Corner classification masks for the cell slab k0 <= kc < k1."""
    nz, ny, nx = data.shape
    out = np.zeros((k1 - k0, ny - 1, nx - 1), dtype=np.uint8)
    for kc in range(k0, k1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                m = 0
                if data[kc, j, i] >= t:
                    m |= 1
                if data[kc, j, i + 1] >= t:
                    m |= 2
                if data[kc, j + 1, i + 1] >= t:
                    m |= 4
                if data[kc, j + 1, i] >= t:
                    m |= 8
                if data[kc + 1, j, i] >= t:
                    m |= 16
                if data[kc + 1, j, i + 1] >= t:
                    m |= 32
                if data[kc + 1, j + 1, i + 1] >= t:
                    m |= 64
                if data[kc + 1, j + 1, i] >= t:
                    m |= 128
                out[kc - k0, j, i] = m
    return out


@njit(inline="always")
def _grad_component(f_lo, f_hi, span):
    return (f_hi - f_lo) / span


@njit(inline="always")
def _gradient_at(data, dx, dy, dz, i, j, k):
    nz, ny, nx = data.shape
    ip = min(i + 1, nx - 1)
    im = max(i - 1, 0)
    gx = (np.float64(data[k, j, ip]) - np.float64(data[k, j, im])) / ((ip - im) * dx)
    jp = min(j + 1, ny - 1)
    jm = max(j - 1, 0)
    gy = (np.float64(data[k, jp, i]) - np.float64(data[k, jm, i])) / ((jp - jm) * dy)
    kp = min(k + 1, nz - 1)
    km = max(k - 1, 0)
    gz = (np.float64(data[kp, j, i]) - np.float64(data[km, j, i])) / ((kp - km) * dz)
    return gx, gy, gz


@njit
def edge_vertices(data, dx, dy, dz, t, p0, p1, out_pos, out_nrm):
    """Crossing position and normal per edge, from endpoint voxel indices.

    p0/p1 are (M, 3) int64 voxel indices (x, y, z order); outputs are
    written into preallocated (M, 3) float64 arrays.
    """
    m = p0.shape[0]
    for e in range(m):
        i0, j0, k0 = p0[e, 0], p0[e, 1], p0[e, 2]
        i1, j1, k1 = p1[e, 0], p1[e, 1], p1[e, 2]
        f0 = np.float64(data[k0, j0, i0])
        f1 = np.float64(data[k1, j1, i1])
        s = (t - f0) / (f1 - f0)
        x0 = (i0 + 0.5) * dx
        y0 = (j0 + 0.5) * dy
        z0 = (k0 + 0.5) * dz
        x1 = (i1 + 0.5) * dx
        y1 = (j1 + 0.5) * dy
        z1 = (k1 + 0.5) * dz
        out_pos[e, 0] = x0 + s * (x1 - x0)
        out_pos[e, 1] = y0 + s * (y1 - y0)
        out_pos[e, 2] = z0 + s * (z1 - z0)
        gx0, gy0, gz0 = _gradient_at(data, dx, dy, dz, i0, j0, k0)
        gx1, gy1, gz1 = _gradient_at(data, dx, dy, dz, i1, j1, k1)
        gx = gx0 + s * (gx1 - gx0)
        gy = gy0 + s * (gy1 - gy0)
        gz = gz0 + s * (gz1 - gz0)
        norm = np.sqrt(gx * gx + gy * gy + gz * gz)
        if norm > 0.0:
            out_nrm[e, 0] = -gx / norm
            out_nrm[e, 1] = -gy / norm
            out_nrm[e, 2] = -gz / norm
        else:
            # flat neighborhood: fall back to the edge direction, aimed
            # at the lower-density endpoint
            ax = x1 - x0
            ay = y1 - y0
            az = z1 - z0
            alen = np.sqrt(ax * ax + ay * ay + az * az)
            sign = -1.0 if f1 > f0 else 1.0
            out_nrm[e, 0] = sign * ax / alen
            out_nrm[e, 1] = sign * ay / alen
            out_nrm[e, 2] = sign * az / alen
