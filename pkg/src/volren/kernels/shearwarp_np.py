"""Vectorized twin of the slice-compositing kernel.

Each base pixel is composited at most once per slice and pixels do not
interact within a slice, so whole rows can be evaluated at once.  Every
arithmetic expression mirrors the scalar kernel's operand order to keep
the two backends byte-identical.
"""
from __future__ import annotations

import numpy as np


def _payload_map(starts, lens, pays, r, e, ni):
    idx = np.full(ni, -1, dtype=np.int64)
    for c in range(r, e):
        s = starts[c]
        idx[s : s + lens[c]] = pays[c] + np.arange(lens[c], dtype=np.int64)
    return idx


def _gather(values, payload_idx, cols, ni):
    inside = (cols >= 0) & (cols < ni)
    g = np.where(inside, payload_idx[np.clip(cols, 0, ni - 1)], -1)
    vals = np.where(g >= 0, values[np.clip(g, 0, None)], 0.0)
    return vals


def composite_rows(
    starts, lens, pays, row_ptr,
    alpha, red, green, blue,
    k, nj, ni, ioff, joff, wu, wv, v0, v1,
    base_r, base_g, base_b, base_a, links, tau,
):
    bw = base_a.shape[1]
    w00 = (1.0 - wu) * (1.0 - wv)
    w01 = wu * (1.0 - wv)
    w10 = (1.0 - wu) * wv
    w11 = wu * wv
    count = 0
    for v in range(v0, v1):
        j0 = v - joff
        j1 = j0 + 1
        r0, e0 = (row_ptr[k * nj + j0], row_ptr[k * nj + j0 + 1]) if 0 <= j0 < nj else (0, 0)
        r1, e1 = (row_ptr[k * nj + j1], row_ptr[k * nj + j1 + 1]) if 0 <= j1 < nj else (0, 0)
        if e0 == r0 and e1 == r1:
            continue
        covered = np.zeros(bw, dtype=bool)
        for r, e in ((r0, e0), (r1, e1)):
            for c in range(r, e):
                lo = max(0, starts[c] + ioff - 1)
                hi = min(bw, starts[c] + lens[c] + ioff)
                if lo < hi:
                    covered[lo:hi] = True
        us = np.flatnonzero(covered & ~(base_a[v] >= tau))
        if us.size == 0:
            continue
        idx0 = _payload_map(starts, lens, pays, r0, e0, ni)
        idx1 = _payload_map(starts, lens, pays, r1, e1, ni)
        i0 = us - ioff
        i1 = i0 + 1
        a00 = _gather(alpha, idx0, i0, ni)
        a01 = _gather(alpha, idx0, i1, ni)
        a10 = _gather(alpha, idx1, i0, ni)
        a11 = _gather(alpha, idx1, i1, ni)
        ia = w00 * a00 + w01 * a01 + w10 * a10 + w11 * a11
        hit = ia > 0.0
        if not np.any(hit):
            continue
        uu = us[hit]
        iah = ia[hit]
        i0h = i0[hit]
        i1h = i1[hit]
        ir = (
            w00 * _gather(red, idx0, i0h, ni)
            + w01 * _gather(red, idx0, i1h, ni)
            + w10 * _gather(red, idx1, i0h, ni)
            + w11 * _gather(red, idx1, i1h, ni)
        )
        ig = (
            w00 * _gather(green, idx0, i0h, ni)
            + w01 * _gather(green, idx0, i1h, ni)
            + w10 * _gather(green, idx1, i0h, ni)
            + w11 * _gather(green, idx1, i1h, ni)
        )
        ib = (
            w00 * _gather(blue, idx0, i0h, ni)
            + w01 * _gather(blue, idx0, i1h, ni)
            + w10 * _gather(blue, idx1, i0h, ni)
            + w11 * _gather(blue, idx1, i1h, ni)
        )
        t = 1.0 - base_a[v, uu]
        base_r[v, uu] += t * ir * iah
        base_g[v, uu] += t * ig * iah
        base_b[v, uu] += t * ib * iah
        base_a[v, uu] += t * iah
        count += int(uu.size)
        newly = uu[base_a[v, uu] >= tau]
        links[v, newly] = (newly + 1).astype(np.int32)
    return count
