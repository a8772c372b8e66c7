"""Isosurface extraction kernels, pure numpy flavor.

Expression-for-expression mirror of the numba twin so both backends
produce bitwise identical meshes.
"""
from __future__ import annotations

import numpy as np


def cube_indices_block(data, t, k0, k1):
    """Corner classification masks for the cell slab k0 <= kc < k1."""
    # compare in float64 to match scalar-code promotion rules
    b = (data[k0 : k1 + 1].astype(np.float64) >= t).astype(np.uint8)
    out = np.zeros((k1 - k0, data.shape[1] - 1, data.shape[2] - 1), dtype=np.uint8)
    out |= b[:-1, :-1, :-1]
    out |= b[:-1, :-1, 1:] << np.uint8(1)
    out |= b[:-1, 1:, 1:] << np.uint8(2)
    out |= b[:-1, 1:, :-1] << np.uint8(3)
    out |= b[1:, :-1, :-1] << np.uint8(4)
    out |= b[1:, :-1, 1:] << np.uint8(5)
    out |= b[1:, 1:, 1:] << np.uint8(6)
    out |= b[1:, 1:, :-1] << np.uint8(7)
    return out


def _gradient_at(data, dx, dy, dz, i, j, k):
    nz, ny, nx = data.shape
    ip = np.minimum(i + 1, nx - 1)
    im = np.maximum(i - 1, 0)
    gx = (data[k, j, ip].astype(np.float64) - data[k, j, im].astype(np.float64)) / (
        (ip - im) * dx
    )
    jp = np.minimum(j + 1, ny - 1)
    jm = np.maximum(j - 1, 0)
    gy = (data[k, jp, i].astype(np.float64) - data[k, jm, i].astype(np.float64)) / (
        (jp - jm) * dy
    )
    kp = np.minimum(k + 1, nz - 1)
    km = np.maximum(k - 1, 0)
    gz = (data[kp, j, i].astype(np.float64) - data[km, j, i].astype(np.float64)) / (
        (kp - km) * dz
    )
    return gx, gy, gz


def edge_vertices(data, dx, dy, dz, t, p0, p1, out_pos, out_nrm):
    """Crossing position and normal per edge, from endpoint voxel indices."""
    i0, j0, k0 = p0[:, 0], p0[:, 1], p0[:, 2]
    i1, j1, k1 = p1[:, 0], p1[:, 1], p1[:, 2]
    f0 = data[k0, j0, i0].astype(np.float64)
    f1 = data[k1, j1, i1].astype(np.float64)
    s = (t - f0) / (f1 - f0)
    x0 = (i0 + 0.5) * dx
    y0 = (j0 + 0.5) * dy
    z0 = (k0 + 0.5) * dz
    x1 = (i1 + 0.5) * dx
    y1 = (j1 + 0.5) * dy
    z1 = (k1 + 0.5) * dz
    out_pos[:, 0] = x0 + s * (x1 - x0)
    out_pos[:, 1] = y0 + s * (y1 - y0)
    out_pos[:, 2] = z0 + s * (z1 - z0)
    gx0, gy0, gz0 = _gradient_at(data, dx, dy, dz, i0, j0, k0)
    gx1, gy1, gz1 = _gradient_at(data, dx, dy, dz, i1, j1, k1)
    gx = gx0 + s * (gx1 - gx0)
    gy = gy0 + s * (gy1 - gy0)
    gz = gz0 + s * (gz1 - gz0)
    norm = np.sqrt(gx * gx + gy * gy + gz * gz)
    ok = norm > 0.0
    safe = np.where(ok, norm, 1.0)
    out_nrm[:, 0] = -gx / safe
    out_nrm[:, 1] = -gy / safe
    out_nrm[:, 2] = -gz / safe
    if not ok.all():
        flat = ~ok
        ax = (x1 - x0)[flat]
        ay = (y1 - y0)[flat]
        az = (z1 - z0)[flat]
        alen = np.sqrt(ax * ax + ay * ay + az * az)
        sign = np.where(f1[flat] > f0[flat], -1.0, 1.0)
        out_nrm[flat, 0] = sign * ax / alen
        out_nrm[flat, 1] = sign * ay / alen
        out_nrm[flat, 2] = sign * az / alen
