"""Per-voxel classification: opacity and shaded color volumes.

Compositing renderers (ray casting, splatting, shear-warp) do not apply
the transfer function at ray samples.  Instead the volume is classified
once: every voxel gets an opacity and a lit color, and traversal
interpolates those directly.  Two things fall out of this:

* A cell whose eight corner opacities are all zero interpolates to
  exactly zero opacity everywhere inside, so empty-space skipping can
  drop its samples without changing the image by even a bit.
* Shading cost is paid per voxel, not per sample.

Shading here is ambient plus diffuse only, which keeps the classified
volume independent of the camera; the specular term needs a view
direction and lives in the first-hit surface renderer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transfer import TransferFunction
from .volume import ScalarVolume, gradient_volume, normalized_for_rendering

_ZERO_GRADIENT = 1e-12


@dataclass(frozen=True)
class Shading:
    """Lighting weights for per-voxel (and first-hit) illumination.

    ``light`` points from the surface toward the light source and is
    normalized on construction.  ``specular``/``exponent`` only affect
    the first-hit renderer; classified volumes stay view-independent.
    """

    ambient: float = 0.3
    diffuse: float = 0.7
    specular: float = 0.2
    exponent: float = 16.0
    light: tuple[float, float, float] = (0.577350269189626, 0.577350269189626, -0.577350269189626)

    def __post_init__(self):
        for name in ("ambient", "diffuse", "specular"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} weight must be >= 0")
        if self.exponent <= 0.0:
            raise ValueError("specular exponent must be positive")
        v = np.asarray(self.light, dtype=np.float64)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("light direction must be nonzero")
        object.__setattr__(self, "light", tuple(float(c) for c in v / n))

    def key(self) -> str:
        return repr((self.ambient, self.diffuse, self.specular, self.exponent, self.light))


@dataclass
class ClassifiedVolume:
    """Voxel-aligned opacity and color, laid out for the sampling kernels.

    ``alpha`` is (nz, ny, nx) float32; ``color`` is (3, nz, ny, nx)
    float32 so each channel is its own contiguous volume.
    """

    alpha: np.ndarray
    color: np.ndarray
    spacing: tuple[float, float, float]
    fingerprint: str = ""
    _grad: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha.ndim != 3 or self.alpha.dtype != np.float32:
            raise ValueError("alpha must be a 3D float32 volume")
        if self.color.shape != (3,) + self.alpha.shape or self.color.dtype != np.float32:
            raise ValueError(f"color must be float32 shaped {(3,) + self.alpha.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.alpha.shape
        return (nx, ny, nz)

    def channel(self, c: int) -> np.ndarray:
        return self.color[c]

    def nbytes(self) -> int:
        total = self.alpha.nbytes + self.color.nbytes
        if self._grad is not None:
            total += self._grad.nbytes
        return total


def shade_colors(color: np.ndarray, grad: np.ndarray, shading: Shading) -> np.ndarray:
    """Scale emission colors by ambient + diffuse lighting.

    `color` is (..., 3), `grad` the matching density gradients.  The
    normal is the negated normalized gradient (high density is inside).
    Voxels with no gradient keep their unlit emission color.
    """
    mag = np.sqrt(np.sum(grad * grad, axis=-1))
    safe = np.where(mag > _ZERO_GRADIENT, mag, 1.0)
    normal = -grad / safe[..., None]
    light = np.asarray(shading.light, dtype=np.float64)
    ndotl = np.maximum(np.einsum("...c,c->...", normal, light), 0.0)
    lit = shading.ambient + shading.diffuse * ndotl
    lit = np.where(mag > _ZERO_GRADIENT, lit, 1.0)
    return color * lit[..., None]


def classify_volume(
    vol: ScalarVolume, tf: TransferFunction, shading: Shading | None = None
) -> ClassifiedVolume:
    """Map every voxel through the transfer function (and optional lighting).

    Values outside [0, 1] are normalized first, matching what the
    renderers do before classification.
    """
    norm = normalized_for_rendering(vol)
    density = norm.data.astype(np.float64)
    alpha = tf.opacity(density)
    color = tf.color(density)
    if shading is not None:
        color = shade_colors(color, gradient_volume(norm), shading)
    fp = f"{vol.fingerprint()}:{tf.fingerprint()}:{shading.key() if shading else 'unlit'}"
    return ClassifiedVolume(
        alpha=alpha.astype(np.float32),
        color=np.ascontiguousarray(np.moveaxis(color, -1, 0), dtype=np.float32),
        spacing=norm.spacing,
        fingerprint=fp,
    )


def classified_gradients(vol: ScalarVolume, cvol: ClassifiedVolume) -> np.ndarray:
    """Cached density gradients for renderers that shade per voxel run."""
    if cvol._grad is None:
        cvol._grad = gradient_volume(normalized_for_rendering(vol))
    return cvol._grad
