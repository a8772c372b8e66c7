"""Numba kernels for footprint splatting.

One call accumulates a block of voxel rows from a single slice into a
partial sheet.  Screen positions come from the affine projection
scr = base + i*step_i + j*step_j evaluated multiplicatively, so both
backends produce identical floats regardless of traversal history.
"""

from __future__ import annotations

import math

import numpy as np

from ..backend import njit


@njit
def splat_rows_block(
    vals, reds, greens, blues, use_color,
    axis, k, j0, j1,
    base_x, base_y, si_x, si_y, sj_x, sj_y,
    table, mx, my, res, ex, ey,
    thresh, width, height,
):
    sr = np.zeros((height, width), dtype=np.float64)
    sg = np.zeros((height, width), dtype=np.float64)
    sb = np.zeros((height, width), dtype=np.float64)
    sa = np.zeros((height, width), dtype=np.float64)
    nz, ny, nx = vals.shape
    if axis == 0:
        ncols = nx
    elif axis == 1:
        ncols = nx
    else:
        ncols = ny
    count = 0
    for j in range(j0, j1):
        for i in range(ncols):
            if axis == 0:
                iz, iy, ix = k, j, i
            elif axis == 1:
                iz, iy, ix = j, k, i
            else:
                iz, iy, ix = j, i, k
            v = np.float64(vals[iz, iy, ix])
            if not (v > thresh):
                continue
            count += 1
            scr_x = base_x + i * si_x + j * sj_x
            scr_y = base_y + i * si_y + j * sj_y
            lox = int(math.ceil(scr_x - ex))
            hix = int(math.floor(scr_x + ex))
            loy = int(math.ceil(scr_y - ey))
            hiy = int(math.floor(scr_y + ey))
            if lox < 0:
                lox = 0
            if hix > width - 1:
                hix = width - 1
            if loy < 0:
                loy = 0
            if hiy > height - 1:
                hiy = height - 1
            if use_color == 1:
                cr = np.float64(reds[iz, iy, ix]) * v
                cg = np.float64(greens[iz, iy, ix]) * v
                cb = np.float64(blues[iz, iy, ix]) * v
            else:
                cr = v
                cg = 0.0
                cb = 0.0
            for py in range(loy, hiy + 1):
                gj = int(math.floor((py - scr_y) * res + 0.5)) + my
                if gj < 0 or gj >= table.shape[0]:
                    continue
                for px in range(lox, hix + 1):
                    gi = int(math.floor((px - scr_x) * res + 0.5)) + mx
                    if gi < 0 or gi >= table.shape[1]:
                        continue
                    w = table[gj, gi]
                    if w > 0.0:
                        sr[py, px] += w * cr
                        if use_color == 1:
                            sg[py, px] += w * cg
                            sb[py, px] += w * cb
                            sa[py, px] += w * v
    return sr, sg, sb, sa, count
