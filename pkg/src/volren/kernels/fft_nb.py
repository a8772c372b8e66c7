"""Iterative radix-2 transforms over row batches, numba flavor."""
from __future__ import annotations

import numpy as np

from ..backend import njit


@njit
def fft_rows(re, im, inverse):
    """Transform each row of (batch, n) float64 planes in place.

    ``n`` must be a power of two.  The forward direction uses the
    negative-exponent convention and no scaling; the inverse divides
    by ``n`` at the end.
    """
    batch, n = re.shape
    # in-place bit reversal reordering
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            for r in range(batch):
                tr = re[r, i]
                re[r, i] = re[r, j]
                re[r, j] = tr
                ti = im[r, i]
                im[r, i] = im[r, j]
                im[r, j] = ti
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        step = sign * 2.0 * np.pi / m
        for t in range(half):
            ang = step * t
            wr = np.cos(ang)
            wi = np.sin(ang)
            for s in range(0, n, m):
                a = s + t
                b = a + half
                for r in range(batch):
                    vr = re[r, b] * wr - im[r, b] * wi
                    vi = re[r, b] * wi + im[r, b] * wr
                    ur = re[r, a]
                    ui = im[r, a]
                    re[r, a] = ur + vr
                    im[r, a] = ui + vi
                    re[r, b] = ur - vr
                    im[r, b] = ui - vi
        m *= 2
    if inverse:
        inv = 1.0 / n
        for r in range(batch):
            for c in range(n):
                re[r, c] *= inv
                im[r, c] *= inv
