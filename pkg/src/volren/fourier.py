"""Frequency-domain projection rendering.

A volume's 3D spectrum is precomputed once; each view then costs one
2D slice through the spectrum plus a 2D inverse transform, yielding
the parallel X-ray projection of the volume along the view direction.

The volume is zero-padded into a power-of-two cube at least twice its
largest dimension, cyclically shifted so the cube center acts as the
phase origin, and transformed with the in-package radix-2 FFT.  The
spectrum is stored shifted back, zero frequency at the cube center, so
view planes always pass through the middle sample.

Projection images come out on a fixed lattice: one pixel per voxel
pitch, centered on the volume.  The camera chooses the orientation and
the crop size; its world-space window does not rescale the output.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backend import select_kernels
from .camera import Camera, Orthographic
from .image import FrameBuffer
from .volume import ScalarVolume

_FFT = select_kernels("fft")
_K = select_kernels("fourier")

MAGIC = "RSPEC1"
FILTERS = ("nearest", "bilinear", "sinc2", "sinc4")

_ROW_CHUNK = 32


@dataclass
class SpectrumVolume:
    """Centered 3D spectrum of a padded volume, stored as float64 planes."""

    re: np.ndarray
    im: np.ndarray
    dims: tuple[int, int, int]  # source volume (nx, ny, nz)
    spacing: float
    source_fingerprint: str = ""

    def __post_init__(self):
        self.re = np.ascontiguousarray(self.re, dtype=np.float64)
        self.im = np.ascontiguousarray(self.im, dtype=np.float64)
        n = self.re.shape[0]
        if self.re.shape != (n, n, n) or self.im.shape != (n, n, n):
            raise ValueError("spectrum planes must be matching cubes")
        if n & (n - 1):
            raise ValueError(f"spectrum size must be a power of two, got {n}")

    @property
    def n(self) -> int:
        return self.re.shape[0]

    def nbytes(self) -> int:
        return self.re.nbytes + self.im.nbytes


def _transform_axis(re, im, axis, inverse):
    n = re.shape[0]
    if axis == 2:
        _FFT.fft_rows(re.reshape(n * n, n), im.reshape(n * n, n), inverse)
        return
    order = (0, 2, 1) if axis == 1 else (1, 2, 0)
    back = (0, 2, 1) if axis == 1 else (2, 0, 1)
    rt = np.ascontiguousarray(re.transpose(order))
    it = np.ascontiguousarray(im.transpose(order))
    _FFT.fft_rows(rt.reshape(n * n, n), it.reshape(n * n, n), inverse)
    re[:] = rt.transpose(back)
    im[:] = it.transpose(back)


def _fft3(re, im, inverse):
    for axis in (2, 1, 0):
        _transform_axis(re, im, axis, inverse)


def _fft2(re, im, inverse):
    n = re.shape[0]
    _FFT.fft_rows(re, im, inverse)
    rt = np.ascontiguousarray(re.T)
    it = np.ascontiguousarray(im.T)
    _FFT.fft_rows(rt, it, inverse)
    re[:] = rt.T
    im[:] = it.T


def padded_size(dims, max_n=256) -> int:
    n = 1
    while n < 2 * max(dims):
        n *= 2
    if n > max_n:
        raise ValueError(
            f"padded spectrum would be {n}^3 which exceeds the max_n={max_n} guard"
        )
    return n


def precompute_spectrum(vol: ScalarVolume, *, max_n: int = 256) -> SpectrumVolume:
    """Forward-transform a volume for projection rendering.

    Requires isotropic spacing: the spectrum lattice has a single
    pitch, and slice orientations assume index space is not stretched.
    """
    sx, sy, sz = vol.spacing
    if not (sx == sy == sz):
        raise ValueError(
            f"frequency-domain rendering requires isotropic spacing, got {vol.spacing}"
        )
    nx, ny, nz = vol.dims
    n = padded_size((nx, ny, nz), max_n)
    re = np.zeros((n, n, n), dtype=np.float64)
    offx = (n - nx) // 2
    offy = (n - ny) // 2
    offz = (n - nz) // 2
    re[offz : offz + nz, offy : offy + ny, offx : offx + nx] = vol.data
    im = np.zeros_like(re)
    half = n // 2
    re = np.roll(re, (-half, -half, -half), axis=(0, 1, 2))
    _fft3(re, im, inverse=False)
    re = np.roll(re, (half, half, half), axis=(0, 1, 2))
    im = np.roll(im, (half, half, half), axis=(0, 1, 2))
    return SpectrumVolume(re, im, (nx, ny, nz), sx, vol.fingerprint())


def _slice_call(spec, right, up, filt, b0, b1, out_re, out_im):
    if filt == "nearest":
        _K.slice_nearest(spec.re, spec.im, right, up, b0, b1, out_re, out_im)
    elif filt == "bilinear":
        _K.slice_trilinear(spec.re, spec.im, right, up, b0, b1, out_re, out_im)
    elif filt == "sinc2":
        _K.slice_sinc(spec.re, spec.im, right, up, 2, b0, b1, out_re, out_im)
    elif filt == "sinc4":
        _K.slice_sinc(spec.re, spec.im, right, up, 4, b0, b1, out_re, out_im)
    else:
        raise ValueError(f"unknown slice filter {filt!r}, expected one of {FILTERS}")


def extract_slice(
    spec: SpectrumVolume, right, up, filt: str = "bilinear", workers: int = 1
):
    """Resample the spectrum on the plane spanned by right and up."""
    if filt not in FILTERS:
        raise ValueError(f"unknown slice filter {filt!r}, expected one of {FILTERS}")
    right = np.ascontiguousarray(right, dtype=np.float64)
    up = np.ascontiguousarray(up, dtype=np.float64)
    n = spec.n
    out_re = np.empty((n, n), dtype=np.float64)
    out_im = np.empty((n, n), dtype=np.float64)
    spans = [(b, min(b + _ROW_CHUNK, n)) for b in range(0, n, _ROW_CHUNK)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(
                pool.map(
                    lambda s: _slice_call(spec, right, up, filt, s[0], s[1], out_re, out_im),
                    spans,
                )
            )
    else:
        for b0, b1 in spans:
            _slice_call(spec, right, up, filt, b0, b1, out_re, out_im)
    return out_re, out_im


def _apply_lowpass(out_re, out_im, cutoff):
    n = out_re.shape[0]
    c = n * 0.5
    ac = np.arange(n, dtype=np.float64) - c
    rr = np.sqrt(ac[None, :] ** 2 + ac[:, None] ** 2)
    keep = rr <= cutoff * c
    out_re[:] = np.where(keep, out_re, 0.0)
    out_im[:] = np.where(keep, out_im, 0.0)


def project_complex(
    spec: SpectrumVolume,
    right,
    up,
    filt: str = "bilinear",
    lowpass: float | None = None,
    workers: int = 1,
):
    """Full-lattice complex projection plane; linear in the spectrum."""
    sre, sim = extract_slice(spec, right, up, filt, workers)
    if lowpass is not None:
        _apply_lowpass(sre, sim, float(lowpass))
    half = spec.n // 2
    sre = np.roll(sre, (-half, -half), axis=(0, 1))
    sim = np.roll(sim, (-half, -half), axis=(0, 1))
    _fft2(sre, sim, inverse=True)
    sre = np.roll(sre, (half, half), axis=(0, 1))
    sim = np.roll(sim, (half, half), axis=(0, 1))
    return sre, sim


def render(
    spec: SpectrumVolume,
    camera: Camera,
    filt: str = "bilinear",
    lowpass: float | None = None,
    workers: int = 1,
    stats: dict | None = None,
) -> FrameBuffer:
    """Project the spectrum along the camera's view direction."""
    if not isinstance(camera.projection, Orthographic):
        raise ValueError("frequency-domain rendering supports orthographic cameras only")
    w, h = camera.image_dims
    n = spec.n
    if w > n or h > n:
        raise ValueError(
            f"image dims {camera.image_dims} exceed the projection lattice {n}"
        )
    pre, _ = project_complex(spec, camera.right, camera.up, filt, lowpass, workers)
    img = pre * spec.spacing
    x0 = n // 2 - w // 2
    y0 = n // 2 - h // 2
    crop = img[y0 : y0 + h, x0 : x0 + w]
    if stats is not None:
        stats["padded_n"] = n
        stats["filter"] = filt
    return FrameBuffer.from_gray(crop[::-1])


def save_spectrum(path, spec: SpectrumVolume) -> None:
    """Write a spectrum as an ASCII header plus interleaved float64 pairs."""
    n = spec.n
    nx, ny, nz = spec.dims
    fp = spec.source_fingerprint or "-"
    header = f"{MAGIC} {nx} {ny} {nz} {spec.spacing!r} {n} {fp}\n"
    pairs = np.empty((n, n, n, 2), dtype=np.float64)
    pairs[..., 0] = spec.re
    pairs[..., 1] = spec.im
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pairs.tobytes())


def load_spectrum(path) -> SpectrumVolume:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace")
        fields = header.split()
        if len(fields) != 7 or fields[0] != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC} file")
        try:
            nx, ny, nz, n = int(fields[1]), int(fields[2]), int(fields[3]), int(fields[5])
            spacing = float(fields[4])
        except ValueError as exc:
            raise ValueError(f"{path}: bad header numbers") from exc
        fp = "" if fields[6] == "-" else fields[6]
        count = n * n * n * 2
        payload = fh.read(count * 8 + 1)
        if len(payload) != count * 8:
            raise ValueError(f"{path}: payload size mismatch")
    pairs = np.frombuffer(payload, dtype=np.float64).reshape(n, n, n, 2)
    return SpectrumVolume(
        pairs[..., 0].copy(), pairs[..., 1].copy(), (nx, ny, nz), spacing, fp
    )
