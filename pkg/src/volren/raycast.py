"""Image-order rendering: one ray per pixel, five traversal modes.

Modes
-----
iso
    First-hit surface: march until a sample reaches the threshold,
    refine the crossing with 8 bisection steps, Phong-shade using the
    central-difference gradient at the hit point.
xray / mip / lmip
    Scalar projections of the (normalized) density: step-weighted sum,
    maximum, or first local maximum above a threshold with a global-max
    fallback.
composite
    Front-to-back alpha blending over a pre-classified volume
    (see classify): C += (1-A) * a * c, A += (1-A) * a, with optional
    early termination once A reaches a threshold.

All modes sample the same fixed lattice t_k = t_enter + (k + 0.5) * h
along each ray, so alternative traversals that skip empty stretches can
reproduce a render exactly.  Images are deterministic for any worker
count: the image is cut into fixed row blocks and every pixel is
computed independently.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backend import select_kernels
from .camera import Camera
from .classify import ClassifiedVolume, Shading, classify_volume
from .image import FrameBuffer
from .transfer import TransferFunction
from .volume import ScalarVolume, normalized_for_rendering

_K = select_kernels("raycast")

MODES = ("iso", "xray", "mip", "lmip", "composite")

_INTEGRAL_CODE = {"xray": 0, "mip": 1, "lmip": 2}

#: Rows per work unit; fixed so images cannot depend on the worker count.
_ROW_BLOCK = 16


@dataclass
class RayConfig:
    """Traversal parameters shared by the ray-driven renderers.

    ``step`` is the sample spacing as a fraction of the smallest voxel
    spacing.  Composite opacity is corrected for non-unit steps via
    a_corr = 1 - (1 - a)^step, so the stored opacities mean "per one
    voxel of path".  ``ert_threshold`` stops a ray once accumulated
    alpha reaches it; at the default 1.0 only a fully opaque sample
    can trigger it.
    """

    mode: str = "composite"
    step: float = 1.0
    iso_threshold: float = 0.5
    lmip_threshold: float = 0.5
    ert_threshold: float = 1.0
    shading: Shading | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not 0.0 < self.ert_threshold <= 1.0:
            raise ValueError(f"ert_threshold must lie in (0, 1], got {self.ert_threshold}")


def _as_ray_arrays(origins, dirs):
    o = np.ascontiguousarray(np.asarray(origins, dtype=np.float64))
    d = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64))
    if o.ndim != 2 or o.shape[1] != 3 or o.shape != d.shape:
        raise ValueError(f"rays must be two (N, 3) arrays, got {o.shape} and {d.shape}")
    return o, d


def clip_rays(vol: ScalarVolume, origins, dirs):
    """Entry/exit distances of each ray against the volume box.

    Entry is clamped to 0 (marching never goes behind the origin); a
    miss comes back with exit <= entry.
    """
    o, d = _as_ray_arrays(origins, dirs)
    ex, ey, ez = vol.extent
    return _K.clip_block(o, d, ex, ey, ez)


def first_hit_rays(vol: ScalarVolume, origins, dirs, cfg: RayConfig, tf: TransferFunction | None = None):
    """Surface rays: returns (rgba, depth, samples) per ray; depth inf on miss."""
    o, d = _as_ray_arrays(origins, dirs)
    norm = normalized_for_rendering(vol)
    dx, dy, dz = norm.spacing
    br, bg, bb = (1.0, 1.0, 1.0) if tf is None else tf.color(np.float64(cfg.iso_threshold))
    sh = cfg.shading
    if sh is None:
        args = (0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
    else:
        args = (1, sh.ambient, sh.diffuse, sh.specular, sh.exponent, *sh.light)
    return _K.first_hit_block(
        norm.data, dx, dy, dz, o, d,
        cfg.step * min(norm.spacing), cfg.iso_threshold,
        float(br), float(bg), float(bb), *args,
    )


def integral_rays(vol: ScalarVolume, origins, dirs, cfg: RayConfig):
    """Projection rays (xray/mip/lmip): returns (values, samples) per ray."""
    if cfg.mode not in _INTEGRAL_CODE:
        raise ValueError(f"integral_rays needs an xray/mip/lmip config, got {cfg.mode!r}")
    o, d = _as_ray_arrays(origins, dirs)
    norm = normalized_for_rendering(vol)
    dx, dy, dz = norm.spacing
    return _K.integral_block(
        norm.data, dx, dy, dz, o, d,
        cfg.step * min(norm.spacing), _INTEGRAL_CODE[cfg.mode], cfg.lmip_threshold,
    )


def composite_rays(cvol: ClassifiedVolume, origins, dirs, cfg: RayConfig):
    """Alpha-blending rays over a classified volume.

    Returns (rgb, accumulated alpha, samples, terminated) per ray.
    """
    o, d = _as_ray_arrays(origins, dirs)
    dx, dy, dz = cvol.spacing
    return _K.composite_block(
        cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
        dx, dy, dz, o, d,
        cfg.step * min(cvol.spacing), float(cfg.step), cfg.ert_threshold,
    )


def _row_spans(height: int):
    return [(r, min(r + _ROW_BLOCK, height)) for r in range(0, height, _ROW_BLOCK)]


def _run_spans(work, spans, workers: int):
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)


def render(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    cfg: RayConfig,
    *,
    workers: int = 1,
    stats: dict | None = None,
    classified: ClassifiedVolume | None = None,
) -> FrameBuffer:
    """Render the volume through the camera with the configured traversal.

    ``classified`` lets callers inject a cached classification for
    composite mode; anything else classifies on the fly.  ``stats``
    (a dict, filled in place) receives samples_taken, rays_terminated
    and wall_ms.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    start = time.perf_counter()
    w, h = cam.image_dims
    origins, dirs = cam.pixel_origins_dirs()
    n = w * h
    samples = np.zeros(n, dtype=np.int64)
    terminated = 0
    depth = None

    if cfg.mode == "composite":
        if tf is None and classified is None:
            raise ValueError("composite mode needs a transfer function or a classified volume")
        cvol = classified if classified is not None else classify_volume(vol, tf, cfg.shading)
        dx, dy, dz = cvol.spacing
        hw = cfg.step * min(cvol.spacing)
        rgba = np.zeros((n, 4), dtype=np.float64)
        term = np.zeros(n, dtype=np.uint8)

        def work(span):
            sl = slice(span[0] * w, span[1] * w)
            rgb_b, acc_b, smp_b, term_b = _K.composite_block(
                cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
                dx, dy, dz, origins[sl], dirs[sl], hw, float(cfg.step), cfg.ert_threshold,
            )
            rgba[sl, :3] = rgb_b
            rgba[sl, 3] = acc_b
            samples[sl] = smp_b
            term[sl] = term_b

        _run_spans(work, _row_spans(h), workers)
        terminated = int(term.sum())
    elif cfg.mode == "iso":
        norm = normalized_for_rendering(vol)
        dx, dy, dz = norm.spacing
        hw = cfg.step * min(norm.spacing)
        br, bg, bb = (1.0, 1.0, 1.0) if tf is None else tf.color(np.float64(cfg.iso_threshold))
        sh = cfg.shading
        if sh is None:
            shade_args = (0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
        else:
            shade_args = (1, sh.ambient, sh.diffuse, sh.specular, sh.exponent, *sh.light)
        rgba = np.zeros((n, 4), dtype=np.float64)
        depth = np.empty(n, dtype=np.float64)

        def work(span):
            sl = slice(span[0] * w, span[1] * w)
            rgba_b, depth_b, smp_b = _K.first_hit_block(
                norm.data, dx, dy, dz, origins[sl], dirs[sl],
                hw, cfg.iso_threshold, float(br), float(bg), float(bb), *shade_args,
            )
            rgba[sl] = rgba_b
            depth[sl] = depth_b
            samples[sl] = smp_b

        _run_spans(work, _row_spans(h), workers)
    else:
        norm = normalized_for_rendering(vol)
        dx, dy, dz = norm.spacing
        hw = cfg.step * min(norm.spacing)
        code = _INTEGRAL_CODE[cfg.mode]
        vals = np.zeros(n, dtype=np.float64)

        def work(span):
            sl = slice(span[0] * w, span[1] * w)
            vals_b, smp_b = _K.integral_block(
                norm.data, dx, dy, dz, origins[sl], dirs[sl],
                hw, code, cfg.lmip_threshold,
            )
            vals[sl] = vals_b
            samples[sl] = smp_b

        _run_spans(work, _row_spans(h), workers)
        rgba = np.empty((n, 4), dtype=np.float64)
        rgba[:, 0] = rgba[:, 1] = rgba[:, 2] = vals
        rgba[:, 3] = 1.0

    fb = FrameBuffer(w, h, rgba.reshape(h, w, 4))
    if depth is not None:
        fb.depth = depth.reshape(h, w)
    if stats is not None:
        stats["mode"] = cfg.mode
        stats["samples_taken"] = int(samples.sum())
        stats["samples_skipped"] = 0
        stats["rays_terminated"] = terminated
        stats["wall_ms"] = (time.perf_counter() - start) * 1000.0
    return fb
