"""Empty-space-skipping traversal kernels, numba flavor.

All traversals here visit the same per-ray sample lattice as the plain
raycast kernels (t_k = t_enter + (k + 0.5) * h) and only ever skip an
index after proving its sample interpolates to exactly zero opacity:
either the trilinear cell of the point is inside a region whose corner
opacities are all zero, or the point lies outside the volume box.
Jump lengths are computed conservatively (safety margins shrink every
jump, never extend it) and the landing index is re-checked, so a short
jump costs one extra lookup while a long one would break exactness.

The presence pyramid arrives packed: one flat uint8 array plus an
int64 (levels, 4) table of (offset, nz, ny, nx) per level, coarsest
last, where level m cells cover 2^m base cells per axis.
"""
from __future__ import annotations

import math

import numpy as np

from ..backend import njit
from .sample_nb import trilinear_one
from .raycast_nb import _clip, _sample_count, _lattice_cap, composite_sample

# Relative safety margin on cell-exit distances: orders of magnitude
# larger than the few-ulp error of the exit computation, orders of
# magnitude smaller than any useful jump.
_EXIT_MARGIN = 1e-9

# A proximity jump must stay short of the guaranteed-empty radius by
# the worst-case offset of the current and landing samples from their
# cell centers: sqrt(3) each once border-margin points (which clamp to
# edge cells up to a full cell away) are accounted for.
_CELL_SLACK = 3.4641016151377544


@njit(inline="always")
def _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz):
    """Trilinear base cell of a world point, (-1, -1, -1) outside the box.

    Mirrors the position handling of trilinear_one branch for branch so
    a cell reported here is exactly the cell whose corners that sampler
    would read.
    """
    if px < 0.0 or py < 0.0 or pz < 0.0:
        return -1, -1, -1
    if px > nx * dx or py > ny * dy or pz > nz * dz:
        return -1, -1, -1
    u = px / dx - 0.5
    v = py / dy - 0.5
    w = pz / dz - 0.5
    i0 = int(np.floor(u))
    j0 = int(np.floor(v))
    k0 = int(np.floor(w))
    if i0 < 0:
        i0 = 0
    elif i0 > nx - 2:
        i0 = nx - 2
    if j0 < 0:
        j0 = 0
    elif j0 > ny - 2:
        j0 = ny - 2
    if k0 < 0:
        k0 = 0
    elif k0 > nz - 2:
        k0 = nz - 2
    return i0, j0, k0


@njit(inline="always")
def _level_value(levels_flat, level_meta, m, ci, cj, ck):
    cmx = ci >> m
    cmy = cj >> m
    cmz = ck >> m
    return levels_flat[level_meta[m, 0] + (cmz * level_meta[m, 2] + cmy) * level_meta[m, 3] + cmx]


@njit(inline="always")
def _highest_empty_level(levels_flat, level_meta, ci, cj, ck):
    """Climb the pyramid while the enclosing cell stays empty."""
    m = 0
    n_levels = level_meta.shape[0]
    while m + 1 < n_levels:
        if _level_value(levels_flat, level_meta, m + 1, ci, cj, ck) != 0:
            break
        m += 1
    return m


@njit(inline="always")
def _cell_exit(dx, dy, dz, nx, ny, nz, m, ci, cj, ck, ox, oy, oz, wx, wy, wz):
    """Ray parameter where the level-m cell around (ci, cj, ck) is left.

    A cell face lying on the grid edge is treated as open (inf): the
    border margin outside the voxel-center hull clamps back into edge
    cells, so an empty edge cell covers it too.
    """
    size = 1 << m
    lox = (ci >> m) << m
    hix = lox + size
    loy = (cj >> m) << m
    hiy = loy + size
    loz = (ck >> m) << m
    hiz = loz + size
    te = math.inf
    if wx > 0.0:
        if hix < nx - 1:
            tx = ((hix + 0.5) * dx - ox) / wx
            if tx < te:
                te = tx
    elif wx < 0.0:
        if lox > 0:
            tx = ((lox + 0.5) * dx - ox) / wx
            if tx < te:
                te = tx
    if wy > 0.0:
        if hiy < ny - 1:
            ty = ((hiy + 0.5) * dy - oy) / wy
            if ty < te:
                te = ty
    elif wy < 0.0:
        if loy > 0:
            ty = ((loy + 0.5) * dy - oy) / wy
            if ty < te:
                te = ty
    if wz > 0.0:
        if hiz < nz - 1:
            tz = ((hiz + 0.5) * dz - oz) / wz
            if tz < te:
                te = tz
    elif wz < 0.0:
        if loz > 0:
            tz = ((loz + 0.5) * dz - oz) / wz
            if tz < te:
                te = tz
    return te


@njit
def presence_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert,
    levels_flat, level_meta,
):
    """Front-to-back compositing that leaps over empty pyramid cells.

    Returns (rgb, acc, taken, skipped, terminated); taken + skipped
    equals the brute-force visit count of the same ray.
    """
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc_alpha = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        acc = 0.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        k = 0
        while k < k_total:
            t = t0 + (k + 0.5) * h
            px = ox + t * wx
            py = oy + t * wy
            pz = oz + t * wz
            ci, cj, ck = _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz)
            if ci >= 0 and _level_value(levels_flat, level_meta, 0, ci, cj, ck) != 0:
                acc, cr, cg, cb = composite_sample(
                    alpha, red, green, blue, dx, dy, dz, px, py, pz, ratio, acc, cr, cg, cb
                )
                taken[r] += 1
                if acc >= ert:
                    terminated[r] = 1
                    break
                k += 1
                continue
            skipped[r] += 1
            if ci < 0:
                k += 1
                continue
            m = _highest_empty_level(levels_flat, level_meta, ci, cj, ck)
            te = _cell_exit(dx, dy, dz, nx, ny, nz, m, ci, cj, ck, ox, oy, oz, wx, wy, wz)
            if te == math.inf:
                skipped[r] += k_total - k - 1
                k = k_total
                continue
            ts = te - _EXIT_MARGIN * (1.0 + abs(te))
            extra = int(math.floor((ts - t) / h))
            if extra < 0:
                extra = 0
            room = k_total - k - 1
            if extra > room:
                extra = room
            skipped[r] += extra
            k += 1 + extra
        rgb[r, 0] = cr
        rgb[r, 1] = cg
        rgb[r, 2] = cb
        acc_alpha[r] = acc
    return rgb, acc_alpha, taken, skipped, terminated


@njit
def presence_mip_block(data, dx, dy, dz, origins, dirs, h, levels_flat, level_meta):
    """Maximum projection that leaps over zero-density pyramid cells.

    Skipped samples are exactly 0.0, so folding a single 0.0 candidate
    back in whenever anything was skipped reproduces the brute-force
    maximum bit for bit.
    """
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    vals = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        mval = -math.inf
        k = 0
        while k < k_total:
            t = t0 + (k + 0.5) * h
            px = ox + t * wx
            py = oy + t * wy
            pz = oz + t * wz
            ci, cj, ck = _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz)
            if ci >= 0 and _level_value(levels_flat, level_meta, 0, ci, cj, ck) != 0:
                v = trilinear_one(data, dx, dy, dz, px, py, pz)
                taken[r] += 1
                if v > mval:
                    mval = v
                k += 1
                continue
            skipped[r] += 1
            if ci < 0:
                k += 1
                continue
            m = _highest_empty_level(levels_flat, level_meta, ci, cj, ck)
            te = _cell_exit(dx, dy, dz, nx, ny, nz, m, ci, cj, ck, ox, oy, oz, wx, wy, wz)
            if te == math.inf:
                skipped[r] += k_total - k - 1
                k = k_total
                continue
            ts = te - _EXIT_MARGIN * (1.0 + abs(te))
            extra = int(math.floor((ts - t) / h))
            if extra < 0:
                extra = 0
            room = k_total - k - 1
            if extra > room:
                extra = room
            skipped[r] += extra
            k += 1 + extra
        if k_total == 0:
            vals[r] = 0.0
        elif skipped[r] > 0 and not (mval > 0.0):
            vals[r] = 0.0
        else:
            vals[r] = mval
    return vals, taken, skipped


@njit
def proximity_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert, clearance,
):
    """Front-to-back compositing with distance-map leaps.

    `clearance` holds, per cell, a guaranteed-empty Euclidean radius in
    index units (0.0 marks a non-empty cell, inf an all-empty map); the
    jump stays short of it by the worst-case sample offsets.
    """
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc_alpha = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        axs = wx / dx
        ays = wy / dy
        azs = wz / dz
        step_cells = h * math.sqrt(axs * axs + ays * ays + azs * azs)
        acc = 0.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        k = 0
        while k < k_total:
            t = t0 + (k + 0.5) * h
            px = ox + t * wx
            py = oy + t * wy
            pz = oz + t * wz
            ci, cj, ck = _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz)
            if ci < 0:
                skipped[r] += 1
                k += 1
                continue
            clr = clearance[ck, cj, ci]
            if clr == 0.0:
                acc, cr, cg, cb = composite_sample(
                    alpha, red, green, blue, dx, dy, dz, px, py, pz, ratio, acc, cr, cg, cb
                )
                taken[r] += 1
                if acc >= ert:
                    terminated[r] = 1
                    break
                k += 1
                continue
            skipped[r] += 1
            if clr == math.inf:
                skipped[r] += k_total - k - 1
                k = k_total
                continue
            room_cells = clr - _CELL_SLACK
            if room_cells > 0.0:
                extra = int(math.floor(room_cells / step_cells - _EXIT_MARGIN))
                if extra < 0:
                    extra = 0
                room = k_total - k - 1
                if extra > room:
                    extra = room
                skipped[r] += extra
                k += 1 + extra
            else:
                k += 1
        rgb[r, 0] = cr
        rgb[r, 1] = cg
        rgb[r, 2] = cb
        acc_alpha[r] = acc
    return rgb, acc_alpha, taken, skipped, terminated


@njit
def proximity_mip_block(data, dx, dy, dz, origins, dirs, h, clearance):
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    vals = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        axs = wx / dx
        ays = wy / dy
        azs = wz / dz
        step_cells = h * math.sqrt(axs * axs + ays * ays + azs * azs)
        mval = -math.inf
        k = 0
        while k < k_total:
            t = t0 + (k + 0.5) * h
            px = ox + t * wx
            py = oy + t * wy
            pz = oz + t * wz
            ci, cj, ck = _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz)
            if ci < 0:
                skipped[r] += 1
                k += 1
                continue
            clr = clearance[ck, cj, ci]
            if clr == 0.0:
                v = trilinear_one(data, dx, dy, dz, px, py, pz)
                taken[r] += 1
                if v > mval:
                    mval = v
                k += 1
                continue
            skipped[r] += 1
            if clr == math.inf:
                skipped[r] += k_total - k - 1
                k = k_total
                continue
            room_cells = clr - _CELL_SLACK
            if room_cells > 0.0:
                extra = int(math.floor(room_cells / step_cells - _EXIT_MARGIN))
                if extra < 0:
                    extra = 0
                room = k_total - k - 1
                if extra > room:
                    extra = room
                skipped[r] += extra
                k += 1 + extra
            else:
                k += 1
        if k_total == 0:
            vals[r] = 0.0
        elif skipped[r] > 0 and not (mval > 0.0):
            vals[r] = 0.0
        else:
            vals[r] = mval
    return vals, taken, skipped


@njit
def homog_composite_block(
    alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert,
    homog, a_mid, r_mid, g_mid, b_mid,
):
    """Compositing that replaces samples in homogeneous cells by their
    precomputed midpoint classification.

    Every lattice index is visited; a midpoint evaluation counts as
    skipped because the interpolation work is what it saves.
    """
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc_alpha = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.uint8)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        acc = 0.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        for k in range(k_total):
            t = t0 + (k + 0.5) * h
            px = ox + t * wx
            py = oy + t * wy
            pz = oz + t * wz
            ci, cj, ck = _cell_of(dx, dy, dz, nx, ny, nz, px, py, pz)
            if ci >= 0 and homog[ck, cj, ci] != 0:
                a = np.float64(a_mid[ck, cj, ci])
                if a > 0.0:
                    if ratio != 1.0:
                        a = 1.0 - (1.0 - a) ** ratio
                    w1 = (1.0 - acc) * a
                    cr += w1 * np.float64(r_mid[ck, cj, ci])
                    cg += w1 * np.float64(g_mid[ck, cj, ci])
                    cb += w1 * np.float64(b_mid[ck, cj, ci])
                    acc += w1
                skipped[r] += 1
            else:
                acc, cr, cg, cb = composite_sample(
                    alpha, red, green, blue, dx, dy, dz, px, py, pz, ratio, acc, cr, cg, cb
                )
                taken[r] += 1
            if acc >= ert:
                terminated[r] = 1
                break
        rgb[r, 0] = cr
        rgb[r, 1] = cg
        rgb[r, 2] = cb
        acc_alpha[r] = acc
    return rgb, acc_alpha, taken, skipped, terminated
