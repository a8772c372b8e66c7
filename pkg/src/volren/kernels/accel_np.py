"""Empty-space-skipping traversal kernels, vectorized numpy flavor.

Mirrors accel_nb decision for decision: rays advance in rounds, one
scalar-loop iteration per round, and every arithmetic expression
(sample positions, jump lengths, compositing updates) is the same as
the scalar backend's, so results and visit counts match bitwise.
"""
from __future__ import annotations

import numpy as np

from .sample_np import trilinear_batch, trilinear_parts
from .raycast_np import _clip_batch, _sample_counts, _lattice_cap, _points_at, _pow_libm

_EXIT_MARGIN = 1e-9
_CELL_SLACK = 3.4641016151377544


def _level0_lookup(levels_flat, level_meta, ci, cj, ck):
    return levels_flat[
        level_meta[0, 0] + (ck * level_meta[0, 2] + cj) * level_meta[0, 3] + ci
    ]


def _highest_empty(levels_flat, level_meta, ci, cj, ck):
    """Per lane, the highest pyramid level whose enclosing cell is empty."""
    m = np.zeros(ci.shape[0], dtype=np.int64)
    still = np.ones(ci.shape[0], dtype=bool)
    for lvl in range(1, level_meta.shape[0]):
        if not still.any():
            break
        cmx = ci >> lvl
        cmy = cj >> lvl
        cmz = ck >> lvl
        empt = (
            levels_flat[
                level_meta[lvl, 0]
                + (cmz * level_meta[lvl, 2] + cmy) * level_meta[lvl, 3]
                + cmx
            ]
            == 0
        )
        adv = still & empt
        m[adv] = lvl
        still &= empt
    return m


def _cell_exits(dx, dy, dz, nx, ny, nz, m, ci, cj, ck, o_sub, d_sub):
    """Exit parameter of each lane's level-m cell, inf for open faces."""
    size = np.int64(1) << m
    te = np.full(m.shape[0], np.inf, dtype=np.float64)
    for axis, cc, nn, dd in ((0, ci, nx, dx), (1, cj, ny, dy), (2, ck, nz, dz)):
        lo = (cc >> m) << m
        hi = lo + size
        w = d_sub[:, axis]
        o = o_sub[:, axis]
        ws = np.where(w == 0.0, 1.0, w)
        thi = ((hi + 0.5) * dd - o) / ws
        tlo = ((lo + 0.5) * dd - o) / ws
        cand = np.full(m.shape[0], np.inf, dtype=np.float64)
        cand = np.where((w > 0.0) & (hi < nn - 1), thi, cand)
        cand = np.where((w < 0.0) & (lo > 0), tlo, cand)
        te = np.minimum(te, cand)
    return te


def _presence_extras(
    levels_flat, level_meta, dx, dy, dz, nx, ny, nz,
    ci, cj, ck, o_sub, d_sub, t_sub, h, room,
):
    """Extra lattice indices each empty-cell lane may additionally skip."""
    m = _highest_empty(levels_flat, level_meta, ci, cj, ck)
    te = _cell_exits(dx, dy, dz, nx, ny, nz, m, ci, cj, ck, o_sub, d_sub)
    to_end = te == np.inf
    with np.errstate(invalid="ignore"):
        ts = te - _EXIT_MARGIN * (1.0 + np.abs(te))
        ef = np.floor((ts - t_sub) / h)
    ef = np.where(to_end, 0.0, ef)
    extra = ef.astype(np.int64)
    extra = np.maximum(extra, 0)
    extra = np.minimum(extra, room)
    return np.where(to_end, room, extra)


def presence_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert,
    levels_flat, level_meta,
):
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    k = np.zeros(n, dtype=np.int64)
    running = counts > 0
    while True:
        alive = running & (k < counts)
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k[idx] + 0.5) * h
        pts = _points_at(origins[idx], dirs[idx], t)
        inside, ci, cj, ck, _, _, _ = trilinear_parts(alpha, dx, dy, dz, pts)
        occ = np.zeros(idx.size, dtype=bool)
        ii = inside.nonzero()[0]
        if ii.size:
            occ[ii] = _level0_lookup(levels_flat, level_meta, ci[ii], cj[ii], ck[ii]) != 0
        if occ.any():
            sgl = idx[occ]
            spts = pts[occ]
            a = trilinear_batch(alpha, dx, dy, dz, spts)
            taken[sgl] += 1
            pos = a > 0.0
            if pos.any():
                pidx = sgl[pos]
                ap = a[pos]
                if ratio != 1.0:
                    ap = 1.0 - _pow_libm(1.0 - ap, ratio)
                w1 = (1.0 - acc[pidx]) * ap
                pp = spts[pos]
                rgb[pidx, 0] += w1 * trilinear_batch(red, dx, dy, dz, pp)
                rgb[pidx, 1] += w1 * trilinear_batch(green, dx, dy, dz, pp)
                rgb[pidx, 2] += w1 * trilinear_batch(blue, dx, dy, dz, pp)
                acc[pidx] += w1
            k[sgl] += 1
            done = acc[sgl] >= ert
            if done.any():
                tidx = sgl[done]
                terminated[tidx] = 1
                running[tidx] = False
        sk = ~occ
        if sk.any():
            kidx = idx[sk]
            skipped[kidx] += 1
            extra = np.zeros(kidx.size, dtype=np.int64)
            ins = inside[sk]
            if ins.any():
                gi = kidx[ins]
                extra[ins] = _presence_extras(
                    levels_flat, level_meta, dx, dy, dz, nx, ny, nz,
                    ci[sk][ins], cj[sk][ins], ck[sk][ins],
                    origins[gi], dirs[gi], t[sk][ins], h,
                    counts[gi] - k[gi] - 1,
                )
            skipped[kidx] += extra
            k[kidx] += 1 + extra
    return rgb, acc, taken, skipped, terminated


def presence_mip_block(data, dx, dy, dz, origins, dirs, h, levels_flat, level_meta):
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    mval = np.full(n, -np.inf, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    k = np.zeros(n, dtype=np.int64)
    while True:
        alive = k < counts
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k[idx] + 0.5) * h
        pts = _points_at(origins[idx], dirs[idx], t)
        inside, ci, cj, ck, _, _, _ = trilinear_parts(data, dx, dy, dz, pts)
        occ = np.zeros(idx.size, dtype=bool)
        ii = inside.nonzero()[0]
        if ii.size:
            occ[ii] = _level0_lookup(levels_flat, level_meta, ci[ii], cj[ii], ck[ii]) != 0
        if occ.any():
            sgl = idx[occ]
            v = trilinear_batch(data, dx, dy, dz, pts[occ])
            taken[sgl] += 1
            cur = mval[sgl]
            mval[sgl] = np.where(v > cur, v, cur)
            k[sgl] += 1
        sk = ~occ
        if sk.any():
            kidx = idx[sk]
            skipped[kidx] += 1
            extra = np.zeros(kidx.size, dtype=np.int64)
            ins = inside[sk]
            if ins.any():
                gi = kidx[ins]
                extra[ins] = _presence_extras(
                    levels_flat, level_meta, dx, dy, dz, nx, ny, nz,
                    ci[sk][ins], cj[sk][ins], ck[sk][ins],
                    origins[gi], dirs[gi], t[sk][ins], h,
                    counts[gi] - k[gi] - 1,
                )
            skipped[kidx] += extra
            k[kidx] += 1 + extra
    vals = np.where(
        counts == 0, 0.0, np.where((skipped > 0) & ~(mval > 0.0), 0.0, mval)
    )
    return vals, taken, skipped


def _proximity_extras(clr, step_sub, room):
    """Extra indices each empty-cell lane may skip given its clearance."""
    to_end = clr == np.inf
    rc = clr - _CELL_SLACK
    with np.errstate(invalid="ignore"):
        ef = np.floor(rc / step_sub - _EXIT_MARGIN)
    ef = np.where(to_end | ~(rc > 0.0), 0.0, ef)
    extra = ef.astype(np.int64)
    extra = np.maximum(extra, 0)
    extra = np.minimum(extra, room)
    return np.where(to_end, room, extra)


def proximity_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert, clearance,
):
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    axs = dirs[:, 0] / dx
    ays = dirs[:, 1] / dy
    azs = dirs[:, 2] / dz
    step_cells = h * np.sqrt(axs * axs + ays * ays + azs * azs)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    k = np.zeros(n, dtype=np.int64)
    running = counts > 0
    while True:
        alive = running & (k < counts)
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k[idx] + 0.5) * h
        pts = _points_at(origins[idx], dirs[idx], t)
        inside, ci, cj, ck, _, _, _ = trilinear_parts(alpha, dx, dy, dz, pts)
        clr = np.full(idx.size, np.inf, dtype=np.float64)
        ii = inside.nonzero()[0]
        if ii.size:
            clr[ii] = clearance[ck[ii], cj[ii], ci[ii]]
        occ = inside & (clr == 0.0)
        if occ.any():
            sgl = idx[occ]
            spts = pts[occ]
            a = trilinear_batch(alpha, dx, dy, dz, spts)
            taken[sgl] += 1
            pos = a > 0.0
            if pos.any():
                pidx = sgl[pos]
                ap = a[pos]
                if ratio != 1.0:
                    ap = 1.0 - _pow_libm(1.0 - ap, ratio)
                w1 = (1.0 - acc[pidx]) * ap
                pp = spts[pos]
                rgb[pidx, 0] += w1 * trilinear_batch(red, dx, dy, dz, pp)
                rgb[pidx, 1] += w1 * trilinear_batch(green, dx, dy, dz, pp)
                rgb[pidx, 2] += w1 * trilinear_batch(blue, dx, dy, dz, pp)
                acc[pidx] += w1
            k[sgl] += 1
            done = acc[sgl] >= ert
            if done.any():
                tidx = sgl[done]
                terminated[tidx] = 1
                running[tidx] = False
        sk = ~occ
        if sk.any():
            kidx = idx[sk]
            skipped[kidx] += 1
            extra = np.zeros(kidx.size, dtype=np.int64)
            ins = inside[sk]
            if ins.any():
                gi = kidx[ins]
                extra[ins] = _proximity_extras(
                    clr[sk][ins], step_cells[gi], counts[gi] - k[gi] - 1
                )
            skipped[kidx] += extra
            k[kidx] += 1 + extra
    return rgb, acc, taken, skipped, terminated


def proximity_mip_block(data, dx, dy, dz, origins, dirs, h, clearance):
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    axs = dirs[:, 0] / dx
    ays = dirs[:, 1] / dy
    azs = dirs[:, 2] / dz
    step_cells = h * np.sqrt(axs * axs + ays * ays + azs * azs)
    mval = np.full(n, -np.inf, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    k = np.zeros(n, dtype=np.int64)
    while True:
        alive = k < counts
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k[idx] + 0.5) * h
        pts = _points_at(origins[idx], dirs[idx], t)
        inside, ci, cj, ck, _, _, _ = trilinear_parts(data, dx, dy, dz, pts)
        clr = np.full(idx.size, np.inf, dtype=np.float64)
        ii = inside.nonzero()[0]
        if ii.size:
            clr[ii] = clearance[ck[ii], cj[ii], ci[ii]]
        occ = inside & (clr == 0.0)
        if occ.any():
            sgl = idx[occ]
            v = trilinear_batch(data, dx, dy, dz, pts[occ])
            taken[sgl] += 1
            cur = mval[sgl]
            mval[sgl] = np.where(v > cur, v, cur)
            k[sgl] += 1
        sk = ~occ
        if sk.any():
            kidx = idx[sk]
            skipped[kidx] += 1
            extra = np.zeros(kidx.size, dtype=np.int64)
            ins = inside[sk]
            if ins.any():
                gi = kidx[ins]
                extra[ins] = _proximity_extras(
                    clr[sk][ins], step_cells[gi], counts[gi] - k[gi] - 1
                )
            skipped[kidx] += extra
            k[kidx] += 1 + extra
    vals = np.where(
        counts == 0, 0.0, np.where((skipped > 0) & ~(mval > 0.0), 0.0, mval)
    )
    return vals, taken, skipped


def homog_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert,
    homog, a_mid, r_mid, g_mid, b_mid,
):
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    running = counts > 0
    max_k = int(counts.max()) if n else 0
    for k in range(max_k):
        alive = running & (k < counts)
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k + 0.5) * h
        pts = _points_at(origins[idx], dirs[idx], t)
        inside, ci, cj, ck, _, _, _ = trilinear_parts(alpha, dx, dy, dz, pts)
        hm = np.zeros(idx.size, dtype=bool)
        ii = inside.nonzero()[0]
        if ii.size:
            hm[ii] = homog[ck[ii], cj[ii], ci[ii]] != 0
        if hm.any():
            hidx = idx[hm]
            am = a_mid[ck[hm], cj[hm], ci[hm]].astype(np.float64)
            pos = am > 0.0
            if pos.any():
                pidx = hidx[pos]
                ap = am[pos]
                if ratio != 1.0:
                    ap = 1.0 - _pow_libm(1.0 - ap, ratio)
                w1 = (1.0 - acc[pidx]) * ap
                cph = (ck[hm][pos], cj[hm][pos], ci[hm][pos])
                rgb[pidx, 0] += w1 * r_mid[cph].astype(np.float64)
                rgb[pidx, 1] += w1 * g_mid[cph].astype(np.float64)
                rgb[pidx, 2] += w1 * b_mid[cph].astype(np.float64)
                acc[pidx] += w1
            skipped[hidx] += 1
        full = ~hm
        if full.any():
            sgl = idx[full]
            spts = pts[full]
            a = trilinear_batch(alpha, dx, dy, dz, spts)
            taken[sgl] += 1
            pos = a > 0.0
            if pos.any():
                pidx = sgl[pos]
                ap = a[pos]
                if ratio != 1.0:
                    ap = 1.0 - _pow_libm(1.0 - ap, ratio)
                w1 = (1.0 - acc[pidx]) * ap
                pp = spts[pos]
                rgb[pidx, 0] += w1 * trilinear_batch(red, dx, dy, dz, pp)
                rgb[pidx, 1] += w1 * trilinear_batch(green, dx, dy, dz, pp)
                rgb[pidx, 2] += w1 * trilinear_batch(blue, dx, dy, dz, pp)
                acc[pidx] += w1
        done = acc[idx] >= ert
        if done.any():
            tidx = idx[done]
            terminated[tidx] = 1
            running[tidx] = False
    return rgb, acc, taken, skipped, terminated
