"""Per-ray traversal kernels, numba flavor.

Sample positions along a ray form a fixed lattice: t_k = t_enter +
(k + 0.5) * h, always computed from the index k (never accumulated), so
a traversal that skips ahead lands on bitwise-identical positions.
Compositing reads pre-classified opacity/color volumes; a sample whose
cell corners all carry zero opacity interpolates to exactly 0.0 and
contributes nothing, which is what makes skipping it exact.
"""
from __future__ import annotations

import math

import numpy as np

from ..backend import njit
from .sample_nb import trilinear_one

_ZERO_GRADIENT = 1e-12


@njit(inline="always")
def _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez):
    """Ray/box parameter range [t0, t1] against [0,ex]x[0,ey]x[0,ez].

    t0 starts at 0 so marching never goes behind the ray origin.  A miss
    is returned as (0, -1).
    """
    t0 = 0.0
    t1 = math.inf
    if wx == 0.0:
        if ox < 0.0 or ox > ex:
            return 0.0, -1.0
    else:
        ta = (0.0 - ox) / wx
        tb = (ex - ox) / wx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    if wy == 0.0:
        if oy < 0.0 or oy > ey:
            return 0.0, -1.0
    else:
        ta = (0.0 - oy) / wy
        tb = (ey - oy) / wy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    if wz == 0.0:
        if oz < 0.0 or oz > ez:
            return 0.0, -1.0
    else:
        ta = (0.0 - oz) / wz
        tb = (ez - oz) / wz
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    return t0, t1


@njit
def clip_block(origins, dirs, ex, ey, ez):
    n = origins.shape[0]
    t0 = np.empty(n, dtype=np.float64)
    t1 = np.empty(n, dtype=np.float64)
    for r in range(n):
        a, b = _clip(
            origins[r, 0], origins[r, 1], origins[r, 2],
            dirs[r, 0], dirs[r, 1], dirs[r, 2],
            ex, ey, ez,
        )
        t0[r] = a
        t1[r] = b
    return t0, t1


@njit(inline="always")
def _sample_count(t0, t1, h, cap):
    """Number of lattice samples in [t0, t1]; the rounding keeps every
    sample inside the interval while covering it to within h/2.

    Clamps as float before converting so a degenerate interval can
    never push a non-finite value through the int cast.
    """
    if not (t1 > t0):
        return 0
    kf = math.floor((t1 - t0) / h + 0.5)
    if kf <= 0.0:
        return 0
    if kf >= cap:
        return cap
    return int(kf)


@njit(inline="always")
def _lattice_cap(ex, ey, ez, h):
    return int(math.sqrt(ex * ex + ey * ey + ez * ez) / h) + 2


@njit
def first_hit_block(
    data, dx, dy, dz, origins, dirs, h, iso_t,
    br, bg, bb, shaded, ka, kd, ks, shin, lx, ly, lz,
):
    """March to the first sample >= iso_t, bisect 8 times, Phong-shade.

    Returns (rgba, depth, samples); depth is inf on miss.
    """
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    rgba = np.zeros((n, 4), dtype=np.float64)
    depth = np.full(n, np.inf, dtype=np.float64)
    samples = np.zeros(n, dtype=np.int64)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        t_prev = t0
        for k in range(k_total):
            t = t0 + (k + 0.5) * h
            v = trilinear_one(data, dx, dy, dz, ox + t * wx, oy + t * wy, oz + t * wz)
            samples[r] += 1
            if v >= iso_t:
                lo = t_prev
                hi = t
                for _ in range(8):
                    mid = 0.5 * (lo + hi)
                    vm = trilinear_one(
                        data, dx, dy, dz, ox + mid * wx, oy + mid * wy, oz + mid * wz
                    )
                    if vm >= iso_t:
                        hi = mid
                    else:
                        lo = mid
                samples[r] += 8
                th = hi
                px = ox + th * wx
                py = oy + th * wy
                pz = oz + th * wz
                cr = br
                cg = bg
                cb = bb
                if shaded != 0:
                    gx = (
                        trilinear_one(data, dx, dy, dz, px + dx, py, pz)
                        - trilinear_one(data, dx, dy, dz, px - dx, py, pz)
                    ) / (2.0 * dx)
                    gy = (
                        trilinear_one(data, dx, dy, dz, px, py + dy, pz)
                        - trilinear_one(data, dx, dy, dz, px, py - dy, pz)
                    ) / (2.0 * dy)
                    gz = (
                        trilinear_one(data, dx, dy, dz, px, py, pz + dz)
                        - trilinear_one(data, dx, dy, dz, px, py, pz - dz)
                    ) / (2.0 * dz)
                    mag = math.sqrt(gx * gx + gy * gy + gz * gz)
                    if mag > _ZERO_GRADIENT:
                        nxn = -gx / mag
                        nyn = -gy / mag
                        nzn = -gz / mag
                        ndl = nxn * lx + nyn * ly + nzn * lz
                        diff = ndl if ndl > 0.0 else 0.0
                        lit = ka + kd * diff
                        cr = br * lit
                        cg = bg * lit
                        cb = bb * lit
                        if diff > 0.0 and ks > 0.0:
                            rx = 2.0 * ndl * nxn - lx
                            ry = 2.0 * ndl * nyn - ly
                            rz = 2.0 * ndl * nzn - lz
                            rdv = -(rx * wx + ry * wy + rz * wz)
                            if rdv > 0.0:
                                s = ks * rdv ** shin
                                cr += s
                                cg += s
                                cb += s
                rgba[r, 0] = cr
                rgba[r, 1] = cg
                rgba[r, 2] = cb
                rgba[r, 3] = 1.0
                depth[r] = th
                break
            t_prev = t
    return rgba, depth, samples


@njit
def integral_block(data, dx, dy, dz, origins, dirs, h, mode, lmip_thr):
    """Projection traversals over raw density: mode 0 = average (sum * h),
    1 = maximum, 2 = first local maximum >= lmip_thr (global max fallback).
    """
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    vals = np.zeros(n, dtype=np.float64)
    samples = np.zeros(n, dtype=np.int64)
    scratch = np.empty(cap, dtype=np.float64)
    for r in range(n):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        wx = dirs[r, 0]
        wy = dirs[r, 1]
        wz = dirs[r, 2]
        t0, t1 = _clip(ox, oy, oz, wx, wy, wz, ex, ey, ez)
        k_total = _sample_count(t0, t1, h, cap)
        if k_total == 0:
            continue
        for k in range(k_total):
            t = t0 + (k + 0.5) * h
            scratch[k] = trilinear_one(
                data, dx, dy, dz, ox + t * wx, oy + t * wy, oz + t * wz
            )
        samples[r] += k_total
        if mode == 0:
            total = 0.0
            for k in range(k_total):
                total += scratch[k]
            vals[r] = total * h
        elif mode == 1:
            m = -math.inf
            for k in range(k_total):
                if scratch[k] > m:
                    m = scratch[k]
            vals[r] = m
        else:
            found = False
            for k in range(k_total):
                v = scratch[k]
                vp = scratch[k - 1] if k > 0 else -math.inf
                vn = scratch[k + 1] if k < k_total - 1 else -math.inf
                if v >= lmip_thr and v > vp and v >= vn:
                    vals[r] = v
                    found = True
                    break
            if not found:
                m = -math.inf
                for k in range(k_total):
                    if scratch[k] > m:
                        m = scratch[k]
                vals[r] = m
    return vals, samples


@njit(inline="always")
def composite_sample(alpha, red, green, blue, dx, dy, dz, px, py, pz, ratio, acc, cr, cg, cb):
    """Front-to-back accumulation of one sample into (acc, cr, cg, cb).

    The opacity read comes first; zero-opacity samples change nothing,
    so callers may skip them without altering the result.
    """
    a = trilinear_one(alpha, dx, dy, dz, px, py, pz)
    if a > 0.0:
        if ratio != 1.0:
            a = 1.0 - (1.0 - a) ** ratio
        w1 = (1.0 - acc) * a
        cr += w1 * trilinear_one(red, dx, dy, dz, px, py, pz)
        cg += w1 * trilinear_one(green, dx, dy, dz, px, py, pz)
        cb += w1 * trilinear_one(blue, dx, dy, dz, px, py, pz)
        acc += w1
    return acc, cr, cg, cb


@njit
def composite_block(alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert):
    """Front-to-back over-operator compositing with early termination.

    ratio is sample step over reference step for opacity correction
    (1.0 means the stored opacities apply as-is).  A ray stops once its
    accumulated alpha reaches `ert`.
    """
    n = origins.shape[0]
    nz, ny, nx = alpha.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    rgb = np.zeros((n, 3), dtype=np.float64)
    acc_alpha = np.zeros(n, dtype=np.float64)
    samples = np.zeros(n, dtype=np.int64)
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
            acc, cr, cg, cb = composite_sample(
                alpha, red, green, blue, dx, dy, dz, px, py, pz, ratio, acc, cr, cg, cb
            )
            samples[r] += 1
            if acc >= ert:
                terminated[r] = 1
                break
        rgb[r, 0] = cr
        rgb[r, 1] = cg
        rgb[r, 2] = cb
        acc_alpha[r] = acc
    return rgb, acc_alpha, samples, terminated
