"""Iterative radix-2 transforms over row batches, pure numpy flavor.

Expression-for-expression mirror of the numba twin; butterflies apply
in the same order with the same twiddle arithmetic so results match
bitwise.
"""
from __future__ import annotations

import numpy as np


def _bit_reversed(n):
    perm = np.zeros(n, dtype=np.int64)
    bits = int(n).bit_length() - 1
    for b in range(bits):
        perm = (perm << 1) | ((np.arange(n) >> b) & 1)
    return perm


def fft_rows(re, im, inverse):
    """Transform each row of (batch, n) float64 planes in place."""
    batch, n = re.shape
    perm = _bit_reversed(n)
    re[:] = re[:, perm]
    im[:] = im[:, perm]
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        step = sign * 2.0 * np.pi / m
        for t in range(half):
            ang = step * t
            wr = np.cos(ang)
            wi = np.sin(ang)
            a = np.arange(t, n, m)
            b = a + half
            vr = re[:, b] * wr - im[:, b] * wi
            vi = re[:, b] * wi + im[:, b] * wr
            ur = re[:, a].copy()
            ui = im[:, a].copy()
            re[:, a] = ur + vr
            im[:, a] = ui + vi
            re[:, b] = ur - vr
            im[:, b] = ui - vi
        m *= 2
    if inverse:
        inv = 1.0 / n
        re *= inv
        im *= inv
