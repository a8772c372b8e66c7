"""Trilinear sampling, numba flavor."""
from __future__ import annotations

import numpy as np

from ..backend import njit


@njit(inline="always")
def trilinear_one(data, dx, dy, dz, x, y, z):
    """Sample the voxel-center field at one world position.

    Positions outside the volume box return 0.0; the half-voxel margin
    between the box face and the first center row replicates the border.
    """
    nz, ny, nx = data.shape
    if x < 0.0 or y < 0.0 or z < 0.0:
        return 0.0
    if x > nx * dx or y > ny * dy or z > nz * dz:
        return 0.0
    u = x / dx - 0.5
    v = y / dy - 0.5
    w = z / dz - 0.5
    i0 = int(np.floor(u))
    j0 = int(np.floor(v))
    k0 = int(np.floor(w))
    fx = u - i0
    fy = v - j0
    fz = w - k0
    if i0 < 0:
        i0 = 0
        fx = 0.0
    elif i0 > nx - 2:
        i0 = nx - 2
        fx = 1.0
    if j0 < 0:
        j0 = 0
        fy = 0.0
    elif j0 > ny - 2:
        j0 = ny - 2
        fy = 1.0
    if k0 < 0:
        k0 = 0
        fz = 0.0
    elif k0 > nz - 2:
        k0 = nz - 2
        fz = 1.0
    v000 = np.float64(data[k0, j0, i0])
    v100 = np.float64(data[k0, j0, i0 + 1])
    v010 = np.float64(data[k0, j0 + 1, i0])
    v110 = np.float64(data[k0, j0 + 1, i0 + 1])
    v001 = np.float64(data[k0 + 1, j0, i0])
    v101 = np.float64(data[k0 + 1, j0, i0 + 1])
    v011 = np.float64(data[k0 + 1, j0 + 1, i0])
    v111 = np.float64(data[k0 + 1, j0 + 1, i0 + 1])
    c00 = v000 + fx * (v100 - v000)
    c10 = v010 + fx * (v110 - v010)
    c01 = v001 + fx * (v101 - v001)
    c11 = v011 + fx * (v111 - v011)
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    return c0 + fz * (c1 - c0)


@njit
def trilinear_batch(data, dx, dy, dz, pts):
    n = pts.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = trilinear_one(data, dx, dy, dz, pts[i, 0], pts[i, 1], pts[i, 2])
    return out
