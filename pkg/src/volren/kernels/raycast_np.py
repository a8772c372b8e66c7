"""Per-ray traversal kernels, vectorized numpy flavor.

Mirrors raycast_nb expression-for-expression: the loop over the sample
index k stays sequential (addition order matters) while the work inside
each step vectorizes across rays, so per-ray values match the scalar
backend bitwise.  Power goes through math.pow because numpy's SIMD
np.power differs from libm in the last ulp.
"""
from __future__ import annotations

import math

import numpy as np

from .sample_np import trilinear_batch

_ZERO_GRADIENT = 1e-12

# Elementwise libm pow; np.power would drift from the scalar backend.
_pow_libm = np.vectorize(math.pow, otypes=[np.float64])


def _clip_batch(origins, dirs, ex, ey, ez):
    n = origins.shape[0]
    t0 = np.zeros(n, dtype=np.float64)
    t1 = np.full(n, np.inf, dtype=np.float64)
    miss = np.zeros(n, dtype=bool)
    for axis, e in ((0, ex), (1, ey), (2, ez)):
        o = origins[:, axis]
        w = dirs[:, axis]
        zero = w == 0.0
        ws = np.where(zero, 1.0, w)
        ta = (0.0 - o) / ws
        tb = (e - o) / ws
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        miss |= zero & ((o < 0.0) | (o > e))
        t0 = np.where(zero, t0, np.maximum(t0, lo))
        t1 = np.where(zero, t1, np.minimum(t1, hi))
    t0 = np.where(miss, 0.0, t0)
    t1 = np.where(miss, -1.0, t1)
    return t0, t1


def clip_block(origins, dirs, ex, ey, ez):
    return _clip_batch(origins, dirs, ex, ey, ez)


def _sample_counts(t0, t1, h, cap):
    with np.errstate(invalid="ignore"):
        kf = np.floor((t1 - t0) / h + 0.5)
    kf = np.where(t1 > t0, kf, 0.0)
    kf = np.clip(kf, 0.0, float(cap))
    return kf.astype(np.int64)


def _lattice_cap(ex, ey, ez, h):
    return int(math.sqrt(ex * ex + ey * ey + ez * ez) / h) + 2


def _points_at(origins, dirs, t):
    return origins + t[:, None] * dirs


def first_hit_block(
    data, dx, dy, dz, origins, dirs, h, iso_t,
    br, bg, bb, shaded, ka, kd, ks, shin, lx, ly, lz,
):
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    rgba = np.zeros((n, 4), dtype=np.float64)
    depth = np.full(n, np.inf, dtype=np.float64)
    samples = np.zeros(n, dtype=np.int64)
    active = counts > 0
    max_k = int(counts.max()) if n else 0
    for k in range(max_k):
        alive = active & (k < counts)
        idx = alive.nonzero()[0]
        if idx.size == 0:
            break
        t = t0[idx] + (k + 0.5) * h
        v = trilinear_batch(data, dx, dy, dz, _points_at(origins[idx], dirs[idx], t))
        samples[idx] += 1
        hit = v >= iso_t
        if not hit.any():
            continue
        hidx = idx[hit]
        ho = origins[hidx]
        hw = dirs[hidx]
        lo = t0[hidx].copy() if k == 0 else t0[hidx] + (k - 0.5) * h
        hi = t0[hidx] + (k + 0.5) * h
        for _ in range(8):
            mid = 0.5 * (lo + hi)
            vm = trilinear_batch(data, dx, dy, dz, _points_at(ho, hw, mid))
            refine = vm >= iso_t
            hi = np.where(refine, mid, hi)
            lo = np.where(refine, lo, mid)
        samples[hidx] += 8
        th = hi
        p = _points_at(ho, hw, th)
        m = hidx.size
        cr = np.full(m, br, dtype=np.float64)
        cg = np.full(m, bg, dtype=np.float64)
        cb = np.full(m, bb, dtype=np.float64)
        if shaded != 0:
            gx = (
                trilinear_batch(data, dx, dy, dz, p + np.array([dx, 0.0, 0.0]))
                - trilinear_batch(data, dx, dy, dz, p - np.array([dx, 0.0, 0.0]))
            ) / (2.0 * dx)
            gy = (
                trilinear_batch(data, dx, dy, dz, p + np.array([0.0, dy, 0.0]))
                - trilinear_batch(data, dx, dy, dz, p - np.array([0.0, dy, 0.0]))
            ) / (2.0 * dy)
            gz = (
                trilinear_batch(data, dx, dy, dz, p + np.array([0.0, 0.0, dz]))
                - trilinear_batch(data, dx, dy, dz, p - np.array([0.0, 0.0, dz]))
            ) / (2.0 * dz)
            mag = np.sqrt(gx * gx + gy * gy + gz * gz)
            si = (mag > _ZERO_GRADIENT).nonzero()[0]
            if si.size:
                nxn = -gx[si] / mag[si]
                nyn = -gy[si] / mag[si]
                nzn = -gz[si] / mag[si]
                ndl = nxn * lx + nyn * ly + nzn * lz
                diff = np.maximum(ndl, 0.0)
                lit = ka + kd * diff
                cr[si] = br * lit
                cg[si] = bg * lit
                cb[si] = bb * lit
                if ks > 0.0:
                    rx = 2.0 * ndl * nxn - lx
                    ry = 2.0 * ndl * nyn - ly
                    rz = 2.0 * ndl * nzn - lz
                    wsub = hw[si]
                    rdv = -(rx * wsub[:, 0] + ry * wsub[:, 1] + rz * wsub[:, 2])
                    glint = (diff > 0.0) & (rdv > 0.0)
                    if glint.any():
                        s = ks * _pow_libm(rdv[glint], shin)
                        gi = si[glint]
                        cr[gi] += s
                        cg[gi] += s
                        cb[gi] += s
        rgba[hidx, 0] = cr
        rgba[hidx, 1] = cg
        rgba[hidx, 2] = cb
        rgba[hidx, 3] = 1.0
        depth[hidx] = th
        active[hidx] = False
    return rgba, depth, samples


def integral_block(data, dx, dy, dz, origins, dirs, h, mode, lmip_thr):
    n = origins.shape[0]
    nz, ny, nx = data.shape
    ex = nx * dx
    ey = ny * dy
    ez = nz * dz
    cap = _lattice_cap(ex, ey, ez, h)
    t0, t1 = _clip_batch(origins, dirs, ex, ey, ez)
    counts = _sample_counts(t0, t1, h, cap)
    vals = np.zeros(n, dtype=np.float64)
    samples = counts.copy()
    max_k = int(counts.max()) if n else 0
    if max_k == 0:
        return vals, samples
    ray_vals = np.full((n, max_k), -np.inf, dtype=np.float64)
    for k in range(max_k):
        alive = k < counts
        idx = alive.nonzero()[0]
        t = t0[idx] + (k + 0.5) * h
        ray_vals[idx, k] = trilinear_batch(
            data, dx, dy, dz, _points_at(origins[idx], dirs[idx], t)
        )
    if mode == 0:
        total = np.zeros(n, dtype=np.float64)
        for k in range(max_k):
            alive = k < counts
            total = np.where(alive, total + ray_vals[:, k], total)
        vals = np.where(counts > 0, total * h, 0.0)
    elif mode == 1:
        # max is exactly order-independent, so one reduction suffices
        vals = np.where(counts > 0, np.max(ray_vals, axis=1), 0.0)
    else:
        prev = np.full((n, max_k), -np.inf, dtype=np.float64)
        prev[:, 1:] = ray_vals[:, :-1]
        nxt = np.full((n, max_k), -np.inf, dtype=np.float64)
        nxt[:, :-1] = ray_vals[:, 1:]
        cols = np.arange(max_k)[None, :]
        qualify = (
            (ray_vals >= lmip_thr)
            & (ray_vals > prev)
            & (ray_vals >= nxt)
            & (cols < counts[:, None])
        )
        first = np.argmax(qualify, axis=1)
        has = qualify.any(axis=1)
        chosen = ray_vals[np.arange(n), first]
        fallback = np.where(counts > 0, np.max(ray_vals, axis=1), 0.0)
        vals = np.where(has, chosen, fallback)
    return vals, samples


def composite_block(alpha, red, green, blue, dx, dy, dz, origins, dirs, h, ratio, ert):
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
    samples = np.zeros(n, dtype=np.int64)
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
        a = trilinear_batch(alpha, dx, dy, dz, pts)
        samples[idx] += 1
        pos = a > 0.0
        if pos.any():
            pidx = idx[pos]
            ap = a[pos]
            if ratio != 1.0:
                ap = 1.0 - _pow_libm(1.0 - ap, ratio)
            w1 = (1.0 - acc[pidx]) * ap
            pp = pts[pos]
            rgb[pidx, 0] += w1 * trilinear_batch(red, dx, dy, dz, pp)
            rgb[pidx, 1] += w1 * trilinear_batch(green, dx, dy, dz, pp)
            rgb[pidx, 2] += w1 * trilinear_batch(blue, dx, dy, dz, pp)
            acc[pidx] += w1
        done = acc[idx] >= ert
        if done.any():
            tidx = idx[done]
            terminated[tidx] = 1
            running[tidx] = False
    return rgb, acc, samples, terminated
