"""Public sampling entry point over the selected kernel backend."""
from __future__ import annotations

import numpy as np

from .backend import select_kernels
from .volume import ScalarVolume

_K = select_kernels("sample")


def sample_trilinear(vol: ScalarVolume, points) -> np.ndarray:
    """Trilinearly interpolate the volume at world-space `points` (N, 3).

    Points outside the volume box evaluate to 0.0.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    single = pts.ndim == 1
    if single:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {pts.shape}")
    dx, dy, dz = vol.spacing
    out = _K.trilinear_batch(vol.data, dx, dy, dz, pts)
    return float(out[0]) if single else out
