"""Piecewise-linear transfer functions mapping density to color and opacity."""
from __future__ import annotations

import hashlib

import numpy as np


class TransferFunction:
    """Control points over the density domain [0, 1].

    Points are rows (density, r, g, b, a).  Densities must be strictly
    ascending with the first point at 0.0 and the last at 1.0; every
    channel lies in [0, 1].  Evaluation interpolates linearly between
    neighboring points.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 5 or pts.shape[0] < 2:
            raise ValueError("need at least two (density, r, g, b, a) control points")
        d = pts[:, 0]
        if d[0] != 0.0 or d[-1] != 1.0:
            raise ValueError("control points must start at density 0.0 and end at 1.0")
        if np.any(np.diff(d) <= 0):
            raise ValueError("control point densities must be strictly ascending")
        if pts.min() < 0.0 or pts[:, 1:].max() > 1.0:
            raise ValueError("channel values must lie in [0, 1]")
        self.points = pts

    def __call__(self, density: np.ndarray) -> np.ndarray:
        """Evaluate to an array of shape density.shape + (4,): rgba."""
        d = np.asarray(density, dtype=np.float64)
        out = np.empty(d.shape + (4,), dtype=np.float64)
        xs = self.points[:, 0]
        for c in range(4):
            out[..., c] = np.interp(d, xs, self.points[:, c + 1])
        return out

    def opacity(self, density: np.ndarray) -> np.ndarray:
        d = np.asarray(density, dtype=np.float64)
        return np.interp(d, self.points[:, 0], self.points[:, 4])

    def color(self, density: np.ndarray) -> np.ndarray:
        d = np.asarray(density, dtype=np.float64)
        out = np.empty(d.shape + (3,), dtype=np.float64)
        for c in range(3):
            out[..., c] = np.interp(d, self.points[:, 0], self.points[:, c + 1])
        return out

    def opacity_lipschitz(self) -> float:
        """Largest |d alpha / d density| over the segments."""
        dd = np.diff(self.points[:, 0])
        da = np.diff(self.points[:, 4])
        return float(np.max(np.abs(da / dd)))

    def fingerprint(self) -> str:
        return hashlib.sha1(self.points.tobytes()).hexdigest()

    @classmethod
    def grayscale_ramp(cls) -> "TransferFunction":
        """Identity ramp: gray level and opacity both equal to density."""
        return cls([(0.0, 0, 0, 0, 0), (1.0, 1, 1, 1, 1)])

    @classmethod
    def iso_surface(cls, threshold: float, color=(1.0, 1.0, 1.0), width: float = 0.02) -> "TransferFunction":
        """Opacity 0 below `threshold`, ramping to 1 over `width`."""
        t = float(threshold)
        if not 0.0 < t < 1.0:
            raise ValueError("threshold must be inside (0, 1)")
        hi = min(1.0, t + width)
        r, g, b = color
        pts = [(0.0, r, g, b, 0.0), (t, r, g, b, 0.0)]
        if hi < 1.0:
            pts.append((hi, r, g, b, 1.0))
        pts.append((1.0, r, g, b, 1.0))
        return cls(pts)


def save_tf(path, tf: TransferFunction) -> None:
    """Write one "density r g b a" line per control point."""
    with open(path, "w", encoding="utf-8") as f:
        for row in tf.points:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_tf(path) -> TransferFunction:
    """Parse a control-point file written by :func:`save_tf`."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{ln}: expected 5 fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{ln}: unparseable numbers {line!r}") from None
    return TransferFunction(rows)
