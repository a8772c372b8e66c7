"""Trilinear sampling, vectorized numpy flavor.

Mirrors sample_nb expression-for-expression so values match bitwise.
"""
from __future__ import annotations

import numpy as np


def _clamped_cell(u, n):
    i0 = np.floor(u).astype(np.int64)
    f = u - i0
    low = i0 < 0
    high = i0 > n - 2
    i0 = np.clip(i0, 0, n - 2)
    f = np.where(low, 0.0, np.where(high, 1.0, f))
    return i0, f


def trilinear_parts(data, dx, dy, dz, pts):
    """Cell indices, fractions and inside mask for a batch of points."""
    nz, ny, nx = data.shape
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    inside = (
        (x >= 0.0)
        & (y >= 0.0)
        & (z >= 0.0)
        & (x <= nx * dx)
        & (y <= ny * dy)
        & (z <= nz * dz)
    )
    i0, fx = _clamped_cell(x / dx - 0.5, nx)
    j0, fy = _clamped_cell(y / dy - 0.5, ny)
    k0, fz = _clamped_cell(z / dz - 0.5, nz)
    return inside, i0, j0, k0, fx, fy, fz


def trilinear_gather(data, i0, j0, k0, fx, fy, fz):
    d = data
    v000 = d[k0, j0, i0].astype(np.float64)
    v100 = d[k0, j0, i0 + 1].astype(np.float64)
    v010 = d[k0, j0 + 1, i0].astype(np.float64)
    v110 = d[k0, j0 + 1, i0 + 1].astype(np.float64)
    v001 = d[k0 + 1, j0, i0].astype(np.float64)
    v101 = d[k0 + 1, j0, i0 + 1].astype(np.float64)
    v011 = d[k0 + 1, j0 + 1, i0].astype(np.float64)
    v111 = d[k0 + 1, j0 + 1, i0 + 1].astype(np.float64)
    c00 = v000 + fx * (v100 - v000)
    c10 = v010 + fx * (v110 - v010)
    c01 = v001 + fx * (v101 - v001)
    c11 = v011 + fx * (v111 - v011)
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    return c0 + fz * (c1 - c0)


def trilinear_batch(data, dx, dy, dz, pts):
    inside, i0, j0, k0, fx, fy, fz = trilinear_parts(data, dx, dy, dz, pts)
    vals = trilinear_gather(data, i0, j0, k0, fx, fy, fz)
    return np.where(inside, vals, 0.0)
