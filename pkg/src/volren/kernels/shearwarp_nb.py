"""Numba kernel for base-plane slice compositing over run-length data."""
from __future__ import annotations

from ..backend import njit


@njit
def _resolve(links, v, u):
    """Next non-opaque base column >= u, compressing the skip chain."""
    while links[v, u] != u:
        links[v, u] = links[v, links[v, u]]
        u = links[v, u]
    return u


@njit
def composite_rows(
    starts, lens, pays, row_ptr,
    alpha, red, green, blue,
    k, nj, ni, ioff, joff, wu, wv, v0, v1,
    base_r, base_g, base_b, base_a, links, tau,
):
    """Composite one volume slice into base-plane rows [v0, v1).

    Voxel runs for base row v come from the volume row pair
    (v - joff, v - joff + 1); a run [s, s+L) covers base columns
    [s + ioff - 1, s + L - 1 + ioff].  Pixels whose accumulated opacity
    reached tau are skipped through the links chains.  Returns the
    number of composited voxel squares.
    """
    bw = base_a.shape[1]
    w00 = (1.0 - wu) * (1.0 - wv)
    w01 = wu * (1.0 - wv)
    w10 = (1.0 - wu) * wv
    w11 = wu * wv
    count = 0
    for v in range(v0, v1):
        j0 = v - joff
        j1 = j0 + 1
        if 0 <= j0 < nj:
            r0 = row_ptr[k * nj + j0]
            e0 = row_ptr[k * nj + j0 + 1]
        else:
            r0 = 0
            e0 = 0
        if 0 <= j1 < nj:
            r1 = row_ptr[k * nj + j1]
            e1 = row_ptr[k * nj + j1 + 1]
        else:
            r1 = 0
            e1 = 0
        if e0 == r0 and e1 == r1:
            continue
        c0 = r0
        c1 = r1
        u = 0
        while u < bw:
            u = _resolve(links, v, u)
            if u >= bw:
                break
            # advance run cursors past runs whose coverage ended before u
            while c0 < e0 and starts[c0] + lens[c0] - 1 + ioff < u:
                c0 += 1
            while c1 < e1 and starts[c1] + lens[c1] - 1 + ioff < u:
                c1 += 1
            cand = bw
            if c0 < e0:
                a = starts[c0] + ioff - 1
                if a < u:
                    a = u
                if a < cand:
                    cand = a
            if c1 < e1:
                a = starts[c1] + ioff - 1
                if a < u:
                    a = u
                if a < cand:
                    cand = a
            if cand >= bw:
                break
            if cand > u:
                u = cand
                continue
            i0 = u - ioff
            i1 = i0 + 1
            g00 = -1
            g01 = -1
            g10 = -1
            g11 = -1
            if c0 < e0 and starts[c0] <= i0 < starts[c0] + lens[c0]:
                g00 = pays[c0] + i0 - starts[c0]
            if c0 < e0 and starts[c0] <= i1 < starts[c0] + lens[c0]:
                g01 = pays[c0] + i1 - starts[c0]
            elif c0 + 1 < e0 and starts[c0 + 1] <= i1 < starts[c0 + 1] + lens[c0 + 1]:
                g01 = pays[c0 + 1] + i1 - starts[c0 + 1]
            if c1 < e1 and starts[c1] <= i0 < starts[c1] + lens[c1]:
                g10 = pays[c1] + i0 - starts[c1]
            if c1 < e1 and starts[c1] <= i1 < starts[c1] + lens[c1]:
                g11 = pays[c1] + i1 - starts[c1]
            elif c1 + 1 < e1 and starts[c1 + 1] <= i1 < starts[c1 + 1] + lens[c1 + 1]:
                g11 = pays[c1 + 1] + i1 - starts[c1 + 1]
            a00 = alpha[g00] if g00 >= 0 else 0.0
            a01 = alpha[g01] if g01 >= 0 else 0.0
            a10 = alpha[g10] if g10 >= 0 else 0.0
            a11 = alpha[g11] if g11 >= 0 else 0.0
            ia = w00 * a00 + w01 * a01 + w10 * a10 + w11 * a11
            if ia > 0.0:
                r00 = red[g00] if g00 >= 0 else 0.0
                r01 = red[g01] if g01 >= 0 else 0.0
                r10 = red[g10] if g10 >= 0 else 0.0
                r11 = red[g11] if g11 >= 0 else 0.0
                ir = w00 * r00 + w01 * r01 + w10 * r10 + w11 * r11
                b00 = green[g00] if g00 >= 0 else 0.0
                b01 = green[g01] if g01 >= 0 else 0.0
                b10 = green[g10] if g10 >= 0 else 0.0
                b11 = green[g11] if g11 >= 0 else 0.0
                ig = w00 * b00 + w01 * b01 + w10 * b10 + w11 * b11
                c00 = blue[g00] if g00 >= 0 else 0.0
                c01 = blue[g01] if g01 >= 0 else 0.0
                c10 = blue[g10] if g10 >= 0 else 0.0
                c11 = blue[g11] if g11 >= 0 else 0.0
                ib = w00 * c00 + w01 * c01 + w10 * c10 + w11 * c11
                t = 1.0 - base_a[v, u]
                base_r[v, u] += t * ir * ia
                base_g[v, u] += t * ig * ia
                base_b[v, u] += t * ib * ia
                base_a[v, u] += t * ia
                count += 1
                if base_a[v, u] >= tau:
                    links[v, u] = u + 1
            u += 1
    return count
