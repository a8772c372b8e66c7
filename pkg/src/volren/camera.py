"""Cameras and pixel-to-ray geometry.

The camera frame (right, up, forward) is orthonormal with
right x up = forward.  Pixel (0, 0) is the top-left of the image:
screen x runs along +right and screen y runs along -up.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Orthographic:
    """Parallel projection over a world-space window of width x height."""

    width: float
    height: float


@dataclass(frozen=True)
class Perspective:
    """Pinhole projection with a vertical field of view in degrees."""

    fov_y: float = 45.0


@dataclass
class Camera:
    eye: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    right: np.ndarray
    projection: Orthographic | Perspective
    image_dims: tuple[int, int] = (256, 256)

    def __post_init__(self):
        self.eye = np.asarray(self.eye, dtype=np.float64)
        self.forward = np.asarray(self.forward, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        for name in ("forward", "up", "right"):
            v = getattr(self, name)
            n = np.linalg.norm(v)
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"camera {name} must be unit length, |v|={n}")
        if abs(float(np.dot(self.forward, self.up))) > 1e-9 or abs(
            float(np.dot(self.forward, self.right))
        ) > 1e-9:
            raise ValueError("camera axes must be orthogonal")
        w, h = self.image_dims
        if w < 1 or h < 1:
            raise ValueError(f"image dims must be positive, got {self.image_dims}")

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for v in (self.eye, self.forward, self.up, self.right):
            h.update(np.asarray(v, dtype=np.float64).tobytes())
        h.update(repr(self.projection).encode())
        h.update(repr(self.image_dims).encode())
        return h.hexdigest()

    def pixel_origins_dirs(self) -> tuple[np.ndarray, np.ndarray]:
        """Ray origin and unit direction per pixel, each (h*w, 3), row-major."""
        w, h = self.image_dims
        px = np.arange(w, dtype=np.float64) + 0.5
        py = np.arange(h, dtype=np.float64) + 0.5
        if isinstance(self.projection, Orthographic):
            sx = self.projection.width / w
            sy = self.projection.height / h
            ox = (px - w / 2.0) * sx
            oy = (h / 2.0 - py) * sy
            offsets = ox[None, :, None] * self.right + oy[:, None, None] * self.up
            origins = (self.eye + offsets).reshape(-1, 3)
            dirs = np.broadcast_to(self.forward, origins.shape).copy()
        else:
            ty = math.tan(math.radians(self.projection.fov_y) / 2.0)
            tx = ty * (w / h)
            cx = (2.0 * px / w - 1.0) * tx
            cy = (1.0 - 2.0 * py / h) * ty
            dirs = (
                self.forward
                + cx[None, :, None] * self.right
                + cy[:, None, None] * self.up
            ).reshape(-1, 3)
            dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            origins = np.broadcast_to(self.eye, dirs.shape).copy()
        return np.ascontiguousarray(origins), np.ascontiguousarray(dirs)


def look_at(eye, target, up_hint=(0.0, 1.0, 0.0), projection=None, image_dims=(256, 256)) -> Camera:
    """Build a camera at `eye` looking toward `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(forward)
    if n == 0:
        raise ValueError("eye and target coincide")
    forward = forward / n
    up_hint = np.asarray(up_hint, dtype=np.float64)
    right = np.cross(up_hint, forward)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        # forward is parallel to the hint; pick another one
        up_hint = np.array([1.0, 0.0, 0.0])
        right = np.cross(up_hint, forward)
        rn = np.linalg.norm(right)
    right = right / rn
    up = np.cross(forward, right)
    if projection is None:
        projection = Orthographic(2.0, 2.0)
    return Camera(eye, forward, up, right, projection, tuple(image_dims))


def orbit(center, distance, azimuth_deg, elevation_deg, projection, image_dims=(256, 256)) -> Camera:
    """Camera on a sphere around `center`, looking inward.

    Azimuth rotates in the x-z plane (0 along -z), elevation lifts toward +y.
    """
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    offset = np.array(
        [
            math.sin(az) * math.cos(el),
            math.sin(el),
            -math.cos(az) * math.cos(el),
        ]
    )
    eye = np.asarray(center, dtype=np.float64) + distance * offset
    return look_at(eye, center, projection=projection, image_dims=image_dims)


def axis_camera(vol_extent, axis: str = "+z", image_dims=None, width=None) -> Camera:
    """Axis-aligned orthographic camera framing the whole volume.

    With the default framing, a pixel grid equal to the voxel grid puts
    every ray exactly through a column of voxel centers.
    """
    ext = np.asarray(vol_extent, dtype=np.float64)
    center = ext / 2.0
    sign = -1.0 if axis.startswith("-") else 1.0
    ax = "xyz".index(axis[-1])
    eye = center.copy()
    eye[ax] -= sign * ext[ax]  # anywhere outside along the view axis
    up_hint = (0.0, 1.0, 0.0) if ax != 1 else (0.0, 0.0, 1.0)
    cam = look_at(eye, center, up_hint=up_hint, image_dims=(2, 2))
    if width is None:
        w_world = float(ext[int(np.argmax(np.abs(cam.right)))])
        h_world = float(ext[int(np.argmax(np.abs(cam.up)))])
    else:
        w_world = h_world = float(width)
    if image_dims is None:
        image_dims = (int(round(w_world)), int(round(h_world)))
    cam.projection = Orthographic(w_world, h_world)
    cam.image_dims = tuple(image_dims)
    return cam
