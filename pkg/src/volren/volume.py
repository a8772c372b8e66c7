"""Scalar volume container, .rvol file I/O, and synthetic phantoms.

Conventions used across the package:

* ``ScalarVolume.data`` has shape ``(nz, ny, nx)`` in C order, so the
  flat buffer is x-fastest.  Public dims are reported as ``(nx, ny, nz)``.
* Voxel ``(ix, iy, iz)`` is a point sample taken at world position
  ``((ix+0.5)*dx, (iy+0.5)*dy, (iz+0.5)*dz)``; the volume occupies the
  world box ``[0, nx*dx] x [0, ny*dy] x [0, nz*dz]``.
* Payload is float32; all derived math runs in float64.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = "RVOL1"

PHANTOM_KINDS = ("sphere", "two-spheres", "box", "gaussian-blob")


@dataclass
class ScalarVolume:
    """A regular 3D grid of scalar point samples."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    _range: tuple[float, float] | None = field(default=None, repr=False)
    _fingerprint: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"expected 3D data, got shape {self.data.shape}")
        if min(self.data.shape) < 2:
            raise ValueError(f"dims must be >= 2 per axis, got {self.dims}")
        if self.data.dtype != np.float32:
            self.data = self.data.astype(np.float32)
        if not self.data.flags.c_contiguous:
            self.data = np.ascontiguousarray(self.data)
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError(f"spacing must be 3 positive values, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)"""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def extent(self) -> tuple[float, float, float]:
        """World-space size of the volume box per axis."""
        nx, ny, nz = self.dims
        dx, dy, dz = self.spacing
        return (nx * dx, ny * dy, nz * dz)

    @property
    def value_range(self) -> tuple[float, float]:
        if self._range is None:
            self._range = (float(self.data.min()), float(self.data.max()))
        return self._range

    def fingerprint(self) -> str:
        """Content hash of dims, spacing and payload; keys derived-data caches."""
        if self._fingerprint is None:
            h = hashlib.sha1()
            h.update(_header_line(self).encode("ascii"))
            h.update(self.data.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def voxel_centers(self, axis: int) -> np.ndarray:
        """World coordinates of the voxel centers along one axis (0=x)."""
        n = self.dims[axis]
        d = self.spacing[axis]
        return (np.arange(n, dtype=np.float64) + 0.5) * d


def _header_line(vol: ScalarVolume) -> str:
    nx, ny, nz = vol.dims
    dx, dy, dz = vol.spacing
    return f"{MAGIC} {nx} {ny} {nz} {dx!r} {dy!r} {dz!r}\n"


def save_volume(path, vol: ScalarVolume) -> None:
    """Write a volume as an .rvol file (text header + little-endian f32)."""
    with open(path, "wb") as f:
        f.write(_header_line(vol).encode("ascii"))
        f.write(vol.data.astype("<f4").tobytes())


def load_volume(path) -> ScalarVolume:
    """Read an .rvol file, validating the header and payload size."""
    with open(path, "rb") as f:
        header = f.readline(256)
        if not header.endswith(b"\n"):
            raise ValueError(f"{path}: missing header line")
        parts = header.decode("ascii", errors="replace").split()
        if len(parts) != 7 or parts[0] != MAGIC:
            raise ValueError(f"{path}: bad header {header[:64]!r}")
        try:
            nx, ny, nz = (int(p) for p in parts[1:4])
            dx, dy, dz = (float(p) for p in parts[4:7])
        except ValueError:
            raise ValueError(f"{path}: unparseable header fields") from None
        if min(nx, ny, nz) < 2:
            raise ValueError(f"{path}: dims must be >= 2, got {(nx, ny, nz)}")
        if min(dx, dy, dz) <= 0:
            raise ValueError(f"{path}: spacing must be positive")
        count = nx * ny * nz
        payload = f.read(4 * count + 1)
        if len(payload) != 4 * count:
            raise ValueError(
                f"{path}: payload has {len(payload)} bytes, expected {4 * count}"
            )
    data = np.frombuffer(payload, dtype="<f4").reshape(nz, ny, nx)
    return ScalarVolume(np.ascontiguousarray(data), (dx, dy, dz))


def normalize(vol: ScalarVolume) -> ScalarVolume:
    """Affinely map values onto [0, 1]; a constant volume maps to all zeros."""
    lo, hi = vol.value_range
    if hi == lo:
        data = np.zeros_like(vol.data)
    else:
        data = ((vol.data.astype(np.float64) - lo) / (hi - lo)).astype(np.float32)
    out = ScalarVolume(data, vol.spacing)
    out._range = (0.0, 0.0) if hi == lo else (0.0, 1.0)
    return out


def normalized_for_rendering(vol: ScalarVolume) -> ScalarVolume:
    """Return `vol` unless its values leave [0, 1], else a normalized copy.

    Renderers classify density through transfer functions defined on
    [0, 1].  Data already inside that domain is used untouched so that
    calibrated phantom values survive into the image.
    """
    lo, hi = vol.value_range
    if lo >= 0.0 and hi <= 1.0:
        return vol
    return normalize(vol)


def gradient_volume(vol: ScalarVolume) -> np.ndarray:
    """Central-difference gradient, shape (nz, ny, nx, 3) ordered (gx, gy, gz).

    Interior voxels use (f[i+1] - f[i-1]) / (2*delta); faces fall back to
    the one-sided difference over a single spacing.
    """
    dx, dy, dz = vol.spacing
    gz, gy, gx = np.gradient(vol.data.astype(np.float64), dz, dy, dx, edge_order=1)
    return np.stack([gx, gy, gz], axis=-1)


def _center_grid(dims, spacing):
    nx, ny, nz = dims
    dx, dy, dz = spacing
    x = (np.arange(nx, dtype=np.float64) + 0.5) * dx
    y = (np.arange(ny, dtype=np.float64) + 0.5) * dy
    z = (np.arange(nz, dtype=np.float64) + 0.5) * dz
    return np.meshgrid(z, y, x, indexing="ij")[::-1]  # X, Y, Z each (nz,ny,nx)


def make_phantom(kind: str, dims=(64, 64, 64), spacing=(1.0, 1.0, 1.0), **params) -> ScalarVolume:
    """Build a synthetic volume.

    Kinds
    -----
    sphere
        Signed "inside-ness" of a sphere: value = radius - |p - c| in world
        units, positive inside, zero exactly on the surface.  Params:
        ``center`` (fractions of extent, default (.5,.5,.5)), ``radius``
        (fraction of the smallest extent, default 0.3).
    two-spheres
        Two solid spheres along z on a zero background: density 0.6 at
        z=0.3 (near, for a viewer looking along +z) and 0.9 at z=0.7 (far).
        Param ``radius`` as for sphere (default 0.15 each).
    box
        Binary solid box, 1.0 inside, 0.0 outside.  Param ``half`` is the
        half-extent as a fraction of extent per axis (default 0.35).
    gaussian-blob
        exp(-r^2 / (2 sigma^2)) with ``sigma`` a fraction of the smallest
        extent (default 0.2).
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}, choose from {PHANTOM_KINDS}")
    ext = np.array([d * s for d, s in zip(dims, spacing)])
    X, Y, Z = _center_grid(dims, spacing)

    if kind == "sphere":
        center = np.asarray(params.pop("center", (0.5, 0.5, 0.5))) * ext
        radius = float(params.pop("radius", 0.3)) * float(ext.min())
        r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
        data = radius - r
    elif kind == "two-spheres":
        radius = float(params.pop("radius", 0.15)) * float(ext.min())
        near = np.array([0.5, 0.5, 0.3]) * ext
        far = np.array([0.5, 0.5, 0.7]) * ext
        rn = np.sqrt((X - near[0]) ** 2 + (Y - near[1]) ** 2 + (Z - near[2]) ** 2)
        rf = np.sqrt((X - far[0]) ** 2 + (Y - far[1]) ** 2 + (Z - far[2]) ** 2)
        data = np.maximum(np.where(rn <= radius, 0.6, 0.0), np.where(rf <= radius, 0.9, 0.0))
    elif kind == "box":
        half = np.asarray(params.pop("half", (0.35, 0.35, 0.35)), dtype=np.float64)
        center = np.asarray(params.pop("center", (0.5, 0.5, 0.5))) * ext
        inside = (
            (np.abs(X - center[0]) <= half[0] * ext[0])
            & (np.abs(Y - center[1]) <= half[1] * ext[1])
            & (np.abs(Z - center[2]) <= half[2] * ext[2])
        )
        data = inside.astype(np.float64)
    else:  # gaussian-blob
        center = np.asarray(params.pop("center", (0.5, 0.5, 0.5))) * ext
        sigma = float(params.pop("sigma", 0.2)) * float(ext.min())
        r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
        data = np.exp(-r2 / (2.0 * sigma * sigma))

    if params:
        raise TypeError(f"unknown phantom params for {kind!r}: {sorted(params)}")
    return ScalarVolume(data.astype(np.float32), spacing)
