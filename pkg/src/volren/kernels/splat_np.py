"""Numpy fallback for footprint splatting.

Accumulation order matters: overlapping footprints add into shared
pixels, so this twin materializes every (voxel, dy, dx) contribution in
the exact nesting order of the scalar loops and applies them with
ufunc.at, which processes its index list sequentially.  The results are
bit-identical to the numba kernels.
"""

from __future__ import annotations

import math

import numpy as np


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
    ncols = vals.shape[1] if axis == 2 else vals.shape[2]
    jj, ii = np.meshgrid(
        np.arange(j0, j1, dtype=np.int64),
        np.arange(ncols, dtype=np.int64),
        indexing="ij",
    )
    jj = jj.ravel()
    ii = ii.ravel()
    kk = np.full_like(jj, k)
    if axis == 0:
        izz, iyy, ixx = kk, jj, ii
    elif axis == 1:
        izz, iyy, ixx = jj, kk, ii
    else:
        izz, iyy, ixx = jj, ii, kk
    v = vals[izz, iyy, ixx].astype(np.float64)
    keep = v > thresh
    jj = jj[keep]
    ii = ii[keep]
    izz = izz[keep]
    iyy = iyy[keep]
    ixx = ixx[keep]
    v = v[keep]
    count = int(v.size)
    if count == 0:
        return sr, sg, sb, sa, count
    scr_x = base_x + ii * si_x + jj * sj_x
    scr_y = base_y + ii * si_y + jj * sj_y
    lox = np.ceil(scr_x - ex).astype(np.int64)
    hix = np.floor(scr_x + ex).astype(np.int64)
    loy = np.ceil(scr_y - ey).astype(np.int64)
    hiy = np.floor(scr_y + ey).astype(np.int64)
    np.clip(lox, 0, None, out=lox)
    np.clip(hix, None, width - 1, out=hix)
    np.clip(loy, 0, None, out=loy)
    np.clip(hiy, None, height - 1, out=hiy)
    kx = int(math.floor(2.0 * ex)) + 2
    ky = int(math.floor(2.0 * ey)) + 2
    px = lox[:, None] + np.arange(kx, dtype=np.int64)[None, :]
    py = loy[:, None] + np.arange(ky, dtype=np.int64)[None, :]
    ok_x = px <= hix[:, None]
    ok_y = py <= hiy[:, None]
    gi = np.floor((px - scr_x[:, None]) * res + 0.5).astype(np.int64) + mx
    gj = np.floor((py - scr_y[:, None]) * res + 0.5).astype(np.int64) + my
    ok_x &= (gi >= 0) & (gi < table.shape[1])
    ok_y &= (gj >= 0) & (gj < table.shape[0])
    gi = np.where(ok_x, gi, 0)
    gj = np.where(ok_y, gj, 0)
    w = table[gj[:, :, None], gi[:, None, :]]
    ok = ok_y[:, :, None] & ok_x[:, None, :] & (w > 0.0)
    sel = ok.ravel()
    w_flat = w.ravel()[sel]
    py_flat = np.broadcast_to(py[:, :, None], ok.shape).ravel()[sel]
    px_flat = np.broadcast_to(px[:, None, :], ok.shape).ravel()[sel]
    if use_color == 1:
        cr = reds[izz, iyy, ixx].astype(np.float64) * v
        cg = greens[izz, iyy, ixx].astype(np.float64) * v
        cb = blues[izz, iyy, ixx].astype(np.float64) * v
        vox = np.broadcast_to(
            np.arange(count, dtype=np.int64)[:, None, None], ok.shape
        ).ravel()[sel]
        np.add.at(sr, (py_flat, px_flat), w_flat * cr[vox])
        np.add.at(sg, (py_flat, px_flat), w_flat * cg[vox])
        np.add.at(sb, (py_flat, px_flat), w_flat * cb[vox])
        np.add.at(sa, (py_flat, px_flat), w_flat * v[vox])
    else:
        vox = np.broadcast_to(
            np.arange(count, dtype=np.int64)[:, None, None], ok.shape
        ).ravel()[sel]
        np.add.at(sr, (py_flat, px_flat), w_flat * v[vox])
    return sr, sg, sb, sa, count
