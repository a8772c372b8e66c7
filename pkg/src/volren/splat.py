"""Object-order rendering: voxels thrown onto the image as footprints.

Instead of sending a ray through every pixel, each voxel is projected
onto the image plane and spreads its classified color over nearby
pixels, weighted by a precomputed footprint table: the 3D
reconstruction kernel integrated along the view axis.  Orthographic
projection keeps that integral the same for every voxel, so one table
serves the whole volume per view.

Traversal walks the volume axis most aligned with the view direction,
slice by slice, back to front.  Each slice accumulates its weighted
contributions on a sheet parallel to the image plane; a completed
sheet is alpha-composited over the running image (x-ray mode adds it
instead).  Blending per sheet rather than per splat makes overlapping
footprints inside one slice order-insensitive.

Two artifacts come with the algorithm and are exercised by tests:
images are softer than ray-cast ones (the kernel is a low-pass
filter), and animations can pop when the dominant axis flips near a
45 degree view.

The hierarchical variant splats level-l cells of the averaging
pyramid.  A cell's footprint is the exact sum of the footprints of
the 2^l * 2^l * 2^l fine voxels it covers, so a constant block renders
the same whether splatted coarse or fine, while the splat count drops
eightfold per level.
"""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accel import AveragePyramid, build_average_pyramid
from .backend import select_kernels
from .camera import Camera, Orthographic
from .classify import Shading, classify_volume, shade_colors
from .image import FrameBuffer
from .transfer import TransferFunction
from .volume import ScalarVolume, normalized_for_rendering

_K = select_kernels("splat")

KERNELS = ("gaussian", "cone", "bilinear")

SPLAT_MODES = ("composite", "xray")

#: Kernel support radius in voxel units.
_EXTENT = {"gaussian": 2.0, "cone": 2.0, "bilinear": 1.0}

#: Default gaussian width.  The kernel has unit 3D mass, so footprints
#: of adjacent voxels sum to ~1 over flat regions and additive (x-ray)
#: splats stay calibrated against ray integrals.
DEFAULT_SIGMA = 0.42

#: Gauss-Legendre points for the along-axis kernel integral.
_QUAD_POINTS = 64

#: Voxel rows per sheet work unit; fixed so images cannot depend on
#: the worker count.
_ROW_BLOCK = 8

_CACHE_CAP = 64

_GENERIC_CACHE: dict = {}
_VIEW_CACHE: dict = {}


@dataclass
class FootprintTable:
    """Kernel footprint sampled on a regular 2D grid.

    A generic table (build_generic_footprint) lives in voxel units; a
    view table (view_transform_footprint) lives in screen pixels.
    ``resolution`` counts samples per unit, ``extent`` is the support
    radius per axis in the same unit, and ``weights`` an odd-sized grid
    centered on the kernel center.  ``sigma`` only matters for the
    gaussian kernel.
    """

    kernel: str
    resolution: int
    extent: tuple[float, float]
    weights: np.ndarray
    sigma: float = DEFAULT_SIGMA
    _digest: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unsupported kernel {self.kernel!r}, choose from {KERNELS}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError(f"table resolution must be an integer >= 2, got {self.resolution}")
        self.resolution = int(self.resolution)
        ext = self.extent
        ext = (float(ext), float(ext)) if np.isscalar(ext) else tuple(float(e) for e in ext)
        if len(ext) != 2 or min(ext) <= 0.0:
            raise ValueError(f"extent must be one or two positive radii, got {self.extent}")
        self.extent = ext
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if (
            self.weights.ndim != 2
            or self.weights.shape[0] % 2 == 0
            or self.weights.shape[1] % 2 == 0
        ):
            raise ValueError(f"weights must be a 2D odd-sized grid, got shape {self.weights.shape}")
        if np.any(self.weights < 0.0):
            raise ValueError("footprint weights must be >= 0")

    @property
    def center(self) -> tuple[int, int]:
        """(column, row) index of the kernel center cell."""
        return ((self.weights.shape[1] - 1) // 2, (self.weights.shape[0] - 1) // 2)

    def mass(self) -> float:
        """Integral of the table over its plane (cell sum times cell area)."""
        return float(self.weights.sum()) / float(self.resolution**2)

    def digest(self) -> str:
        """Content hash; keys the per-view table cache."""
        if self._digest is None:
            h = hashlib.sha1()
            h.update(repr((self.kernel, self.sigma, self.resolution, self.extent)).encode())
            h.update(self.weights.tobytes())
            self._digest = h.hexdigest()
        return self._digest


@dataclass
class SheetBuffer:
    """Accumulation plane for one volume slice, parallel to the image.

    ``color`` holds premultiplied rgb.  Overlapping footprints can sum
    past full opacity inside one slice, so ``load`` clamps everything
    to [0, 1] before the sheet is blended.
    """

    dims: tuple[int, int]
    color: np.ndarray = None
    alpha: np.ndarray = None

    def __post_init__(self):
        w, h = self.dims
        if w < 1 or h < 1:
            raise ValueError(f"sheet dims must be positive, got {self.dims}")
        if self.color is None:
            self.color = np.zeros((h, w, 3), dtype=np.float64)
        if self.alpha is None:
            self.alpha = np.zeros((h, w), dtype=np.float64)
        if self.color.shape != (h, w, 3) or self.alpha.shape != (h, w):
            raise ValueError(
                f"sheet buffers must be ({h}, {w}, 3) and ({h}, {w}), "
                f"got {self.color.shape} and {self.alpha.shape}"
            )

    def clear(self) -> None:
        self.color[:] = 0.0
        self.alpha[:] = 0.0

    def load(self, red, green, blue, alpha) -> None:
        """Install one slice's raw accumulations, clamped to [0, 1]."""
        np.clip(red, 0.0, 1.0, out=self.color[..., 0])
        np.clip(green, 0.0, 1.0, out=self.color[..., 1])
        np.clip(blue, 0.0, 1.0, out=self.color[..., 2])
        np.clip(alpha, 0.0, 1.0, out=self.alpha)


def _kernel3(kernel: str, sigma: float, x, y, u):
    """3D reconstruction kernel value at voxel-unit offsets (x, y, u)."""
    if kernel == "bilinear":
        return (
            np.maximum(0.0, 1.0 - np.abs(x))
            * np.maximum(0.0, 1.0 - np.abs(y))
            * np.maximum(0.0, 1.0 - np.abs(u))
        )
    ext = _EXTENT[kernel]
    r = np.sqrt(x * x + y * y + u * u)
    if kernel == "gaussian":
        norm = (2.0 * math.pi) ** 1.5 * sigma**3
        vals = np.exp(-(r * r) / (2.0 * sigma * sigma)) / norm
    else:
        vals = np.maximum(0.0, 1.0 - r / ext) * (3.0 / (math.pi * ext**3))
    return np.where(r < ext, vals, 0.0)


def build_generic_footprint(
    kernel: str = "gaussian", resolution: int = 8, *, sigma: float = DEFAULT_SIGMA
) -> FootprintTable:
    """Integrate the 3D kernel along the view axis onto a 2D grid.

    ``resolution`` counts grid samples per voxel unit.  Every kernel
    integrates to one over 3D space; the gaussian is truncated at its
    extent without renormalizing, so its table mass falls a fraction of
    a percent short of one (the flat-field test pins that residual).
    """
    if kernel not in KERNELS:
        raise ValueError(f"unsupported kernel {kernel!r}, choose from {KERNELS}")
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"table resolution must be an integer >= 2, got {resolution}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    resolution = int(resolution)
    ext = _EXTENT[kernel]
    m = int(round(ext * resolution))
    xs = (np.arange(2 * m + 1, dtype=np.float64) - m) / resolution
    gx, gy = np.meshgrid(xs, xs)
    nodes, wts = np.polynomial.legendre.leggauss(_QUAD_POINTS)
    weights = np.zeros_like(gx)
    for uq, wq in zip(nodes * ext, wts * ext):
        weights += wq * _kernel3(kernel, sigma, gx, gy, uq)
    return FootprintTable(kernel, resolution, (ext, ext), weights, sigma=float(sigma))


def _sample_grid(weights: np.ndarray, fx, fy, sampling: str):
    """Read a table at fractional indices; outside the grid reads 0."""
    gh, gw = weights.shape
    if sampling == "nearest":
        ix = np.floor(fx + 0.5).astype(np.int64)
        iy = np.floor(fy + 0.5).astype(np.int64)
        ok = (ix >= 0) & (ix < gw) & (iy >= 0) & (iy < gh)
        return np.where(ok, weights[np.clip(iy, 0, gh - 1), np.clip(ix, 0, gw - 1)], 0.0)
    i0 = np.floor(fx)
    j0 = np.floor(fy)
    tx = fx - i0
    ty = fy - j0
    i0 = i0.astype(np.int64)
    j0 = j0.astype(np.int64)
    out = np.zeros(np.broadcast(fx, fy).shape, dtype=np.float64)
    for dj in (0, 1):
        wy = ty if dj else 1.0 - ty
        for di in (0, 1):
            wx = tx if di else 1.0 - tx
            ii = i0 + di
            jj = j0 + dj
            ok = (ii >= 0) & (ii < gw) & (jj >= 0) & (jj < gh)
            vals = weights[np.clip(jj, 0, gh - 1), np.clip(ii, 0, gw - 1)]
            out += np.where(ok, vals, 0.0) * wx * wy
    return out


def _screen_rows(cam: Camera, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis screen-pixel step for a unit voxel-index step.

    Row 0 maps an index displacement to screen-x pixels, row 1 to
    screen-y (down-positive, matching image row order).
    """
    w, h = cam.image_dims
    pw = cam.projection.width / w
    ph = cam.projection.height / h
    s = np.asarray(spacing, dtype=np.float64)
    return s * cam.right / pw, -(s * cam.up) / ph


def view_transform_footprint(
    generic: FootprintTable,
    cam: Camera,
    *,
    spacing=(1.0, 1.0, 1.0),
    sampling: str = "bilinear",
    level: int = 0,
) -> FootprintTable:
    """Resample the generic footprint into screen pixels for one view.

    Orthographic projection maps a voxel displacement d to the screen
    offset (a0.d, a1.d), so the view table is the generic kernel under
    that affine map and rasterization becomes a plain 2D lookup.
    Anisotropic spacing stretches the footprint per screen axis.  For
    pyramid level l > 0 the table is the lattice sum of fine-voxel
    footprints over the 2^l cube one cell covers.  Results are cached
    on (kernel, projection geometry, sampling, level).
    """
    if not isinstance(cam.projection, Orthographic):
        raise ValueError("footprint splatting requires an orthographic camera")
    if sampling not in ("nearest", "bilinear"):
        raise ValueError(f"table sampling must be 'nearest' or 'bilinear', got {sampling!r}")
    if int(level) != level or level < 0:
        raise ValueError(f"level must be a non-negative integer, got {level}")
    level = int(level)
    s = np.asarray(spacing, dtype=np.float64)
    if s.shape != (3,) or np.any(s <= 0.0):
        raise ValueError(f"spacing must be 3 positive values, got {spacing}")
    a0, a1 = _screen_rows(cam, s)
    key = (
        generic.digest(),
        sampling,
        level,
        tuple(np.round(a0, 12)),
        tuple(np.round(a1, 12)),
    )
    hit = _VIEW_CACHE.get(key)
    if hit is not None:
        return hit

    ax = float(np.linalg.norm(a0))
    ay = float(np.linalg.norm(a1))
    n = 1 << level
    offs = np.arange(n, dtype=np.float64) + 0.5 - n / 2.0
    oz, oy, ox = np.meshgrid(offs, offs, offs, indexing="ij")
    offx = (a0[0] * ox + a0[1] * oy + a0[2] * oz).ravel()
    offy = (a1[0] * ox + a1[1] * oy + a1[2] * oz).ravel()

    gext = generic.extent[0]
    ex = ax * gext + float(np.max(np.abs(offx)))
    ey = ay * gext + float(np.max(np.abs(offy)))
    res = generic.resolution
    mx = int(math.ceil(ex * res - 1e-9))
    my = int(math.ceil(ey * res - 1e-9))
    xs = (np.arange(2 * mx + 1, dtype=np.float64) - mx) / res
    ys = (np.arange(2 * my + 1, dtype=np.float64) - my) / res
    px, py = np.meshgrid(xs, ys)
    gcx, gcy = generic.center
    weights = np.zeros_like(px)
    for m in range(offx.size):
        fx = (px - offx[m]) / ax * res + gcx
        fy = (py - offy[m]) / ay * res + gcy
        weights += _sample_grid(generic.weights, fx, fy, sampling)
    out = FootprintTable(generic.kernel, res, (ex, ey), weights, sigma=generic.sigma)
    if len(_VIEW_CACHE) >= _CACHE_CAP:
        _VIEW_CACHE.pop(next(iter(_VIEW_CACHE)))
    _VIEW_CACHE[key] = out
    return out


def _generic_table(kernel: str, resolution, sigma) -> FootprintTable:
    key = (kernel, resolution, sigma)
    tbl = _GENERIC_CACHE.get(key)
    if tbl is None:
        tbl = build_generic_footprint(kernel, resolution, sigma=sigma)
        if len(_GENERIC_CACHE) >= _CACHE_CAP:
            _GENERIC_CACHE.pop(next(iter(_GENERIC_CACHE)))
        _GENERIC_CACHE[key] = tbl
    return tbl


def _classified_planes(ldata, lvol, s_eff, tf, shading):
    """Opacity and color planes for splatting, classified per voxel.

    Normal volumes go through classify_volume; pyramid tips with a
    degenerate axis (a dimension of one) are classified directly with a
    zero gradient, which leaves their colors unlit.
    """
    if lvol is None:
        if min(ldata.shape) >= 2:
            lvol = ScalarVolume(ldata, s_eff)
        else:
            density = ldata.astype(np.float64)
            alpha = tf.opacity(density).astype(np.float32)
            color = tf.color(density)
            if shading is not None:
                color = shade_colors(color, np.zeros(ldata.shape + (3,)), shading)
            col = np.ascontiguousarray(np.moveaxis(color, -1, 0), dtype=np.float32)
            return alpha, col[0], col[1], col[2]
    cvol = classify_volume(lvol, tf, shading)
    return cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2)


def _splat_render(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    level: int,
    pyramid: AveragePyramid | None,
    mode: str,
    shading: Shading | None,
    kernel: str,
    sigma: float,
    table_res: int,
    table_sampling: str,
    significance: float,
    workers: int,
    stats: dict | None,
) -> FrameBuffer:
    if not isinstance(cam.projection, Orthographic):
        raise ValueError("footprint splatting requires an orthographic camera")
    if mode not in SPLAT_MODES:
        raise ValueError(f"splat mode must be one of {SPLAT_MODES}, got {mode!r}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if significance < 0.0:
        raise ValueError(f"significance threshold must be >= 0, got {significance}")
    start = time.perf_counter()

    if level == 0 and pyramid is None:
        lvol = normalized_for_rendering(vol)
        ldata = lvol.data
    else:
        pyr = pyramid if pyramid is not None else build_average_pyramid(vol)
        if pyr.source != vol.fingerprint():
            raise ValueError("pyramid was built from a different volume")
        if not 0 <= level <= pyr.depth:
            raise ValueError(f"level {level} out of range 0..{pyr.depth}")
        ldata = pyr.levels[level]
        lvol = None
    scale = float(1 << level)
    s_eff = tuple(sp * scale for sp in vol.spacing)

    if mode == "composite":
        if tf is None:
            raise ValueError("composite splatting needs a transfer function")
        vals, red, green, blue = _classified_planes(ldata, lvol, s_eff, tf, shading)
        use_color = 1
    else:
        vals = ldata
        red = green = blue = vals
        use_color = 0

    w, h = cam.image_dims
    pw = cam.projection.width / w
    ph = cam.projection.height / h
    se = np.asarray(s_eff, dtype=np.float64)
    a0, a1 = _screen_rows(cam, se)
    d = 0.5 * se - cam.eye
    base_x = float(np.dot(d, cam.right)) / pw + w / 2.0 - 0.5
    base_y = h / 2.0 - 0.5 - float(np.dot(d, cam.up)) / ph

    dom = int(np.argmax(np.abs(cam.forward)))
    axis = {2: 0, 1: 1, 0: 2}[dom]
    nz, ny, nx = vals.shape
    if axis == 0:
        nk, nj = nz, ny
        si, sj, sk = (a0[0], a1[0]), (a0[1], a1[1]), (a0[2], a1[2])
    elif axis == 1:
        nk, nj = ny, nz
        si, sj, sk = (a0[0], a1[0]), (a0[2], a1[2]), (a0[1], a1[1])
    else:
        nk, nj = nx, nz
        si, sj, sk = (a0[1], a1[1]), (a0[2], a1[2]), (a0[0], a1[0])
    ks = range(nk - 1, -1, -1) if cam.forward[dom] > 0.0 else range(nk)

    generic = _generic_table(kernel, table_res, sigma)
    view = view_transform_footprint(
        generic, cam, spacing=vol.spacing, sampling=table_sampling, level=level
    )
    tb = view.weights
    cx, cy = view.center
    res = float(view.resolution)
    ex, ey = view.extent
    thresh = float(significance)

    jspans = [(j0, min(j0 + _ROW_BLOCK, nj)) for j0 in range(0, nj, _ROW_BLOCK)]
    sheet = SheetBuffer((w, h))
    img_rgb = np.zeros((h, w, 3), dtype=np.float64)
    img_a = np.zeros((h, w), dtype=np.float64)
    gray = np.zeros((h, w), dtype=np.float64)
    total = 0

    def run_block(args):
        kk, j0, j1 = args
        return _K.splat_rows_block(
            vals, red, green, blue, use_color,
            axis, kk, j0, j1,
            base_x + kk * float(sk[0]), base_y + kk * float(sk[1]),
            float(si[0]), float(si[1]), float(sj[0]), float(sj[1]),
            tb, cx, cy, res, float(ex), float(ey),
            thresh, w, h,
        )

    pool = (
        ThreadPoolExecutor(max_workers=workers)
        if workers > 1 and len(jspans) > 1
        else None
    )
    try:
        for kk in ks:
            tasks = [(kk, j0, j1) for j0, j1 in jspans]
            if pool is not None:
                parts = list(pool.map(run_block, tasks))
            else:
                parts = [run_block(t) for t in tasks]
            sr, sg, sb, sa, cnt = parts[0]
            for p in parts[1:]:
                sr += p[0]
                sg += p[1]
                sb += p[2]
                sa += p[3]
                cnt += p[4]
            total += int(cnt)
            if cnt == 0:
                continue
            if mode == "composite":
                sheet.load(sr, sg, sb, sa)
                one_m = 1.0 - sheet.alpha
                img_rgb *= one_m[..., None]
                img_rgb += sheet.color
                img_a *= one_m
                img_a += sheet.alpha
            else:
                gray += sr
    finally:
        if pool is not None:
            pool.shutdown()

    rgba = np.empty((h, w, 4), dtype=np.float64)
    if mode == "composite":
        rgba[..., :3] = img_rgb
        rgba[..., 3] = img_a
    else:
        rgba[..., 0] = rgba[..., 1] = rgba[..., 2] = gray
        rgba[..., 3] = 1.0
    fb = FrameBuffer(w, h, rgba)
    if stats is not None:
        stats["mode"] = "splat"
        stats["splats"] = total
        stats["sheets"] = nk
        stats["wall_ms"] = (time.perf_counter() - start) * 1000.0
    return fb


def render_splat(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    *,
    mode: str = "composite",
    shading: Shading | None = None,
    kernel: str = "gaussian",
    sigma: float = DEFAULT_SIGMA,
    table_res: int = 8,
    table_sampling: str = "bilinear",
    significance: float = 1.0 / 255.0,
    workers: int = 1,
    stats: dict | None = None,
) -> FrameBuffer:
    """Render by projecting classified voxels as footprints, sheet by sheet.

    composite mode alpha-blends sheets back to front over the
    classified volume, with optional per-voxel lighting applied before
    projection; voxels whose opacity is at or below ``significance``
    are skipped.  xray mode adds raw density instead and tracks the
    ray-cast x-ray image closely at unit spacing.  The quality knobs
    are the kernel, the table resolution, and the table sampling rule.
    ``stats`` (filled in place) receives splats, sheets and wall_ms.
    """
    return _splat_render(
        vol, tf, cam, 0, None, mode, shading, kernel, sigma,
        table_res, table_sampling, significance, workers, stats,
    )


def render_splat_hierarchical(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    level: int,
    *,
    pyramid: AveragePyramid | None = None,
    mode: str = "composite",
    shading: Shading | None = None,
    kernel: str = "gaussian",
    sigma: float = DEFAULT_SIGMA,
    table_res: int = 8,
    table_sampling: str = "bilinear",
    significance: float = 1.0 / 255.0,
    workers: int = 1,
    stats: dict | None = None,
) -> FrameBuffer:
    """Splat one level of the averaging pyramid with matching footprints.

    Level 0 runs the exact render_splat path.  A coarser level-l cell
    carries the mean density of its block and splats the lattice sum of
    the block's fine-voxel footprints, so constant regions survive
    coarsening unchanged while the splat count drops eightfold per
    level.  ``pyramid`` reuses a prebuilt structure for this volume.
    """
    if int(level) != level or level < 0:
        raise ValueError(f"level must be a non-negative integer, got {level}")
    return _splat_render(
        vol, tf, cam, int(level), pyramid, mode, shading, kernel, sigma,
        table_res, table_sampling, significance, workers, stats,
    )
