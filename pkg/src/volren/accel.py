"""Acceleration structures for ray traversal and a boundary point renderer.

Three ways to spend less time in empty or uniform space, all built once
per volume and reusable across cameras:

* A binary presence pyramid over the interpolation cells: level 0 marks
  cells whose eight corner values are all zero, coarser levels OR-reduce
  2x2x2 blocks.  Rays leap across the largest empty enclosing cell.
* A min/max range pyramid: cells whose value range is narrower than a
  tolerance are treated as homogeneous and composited from their
  midpoint classification instead of per-sample interpolation.
* A chamfer distance map: each empty cell knows how far the nearest
  occupied cell is, so a ray can skip that far in one step regardless
  of direction.

Every skipping traversal shares its sample lattice with the plain
raycaster, and a presence or distance-map render reproduces the
brute-force image byte for byte; only the work drops.

Boundary voxel extraction scans the six axis-aligned view directions
for the first solid voxel per row and renders the surviving points as
depth-buffered splats, with optional Phong lighting, back-face culling
and a cutting plane that exposes raw densities on the cut.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import select_kernels
from .camera import Camera, Orthographic
from .classify import ClassifiedVolume, Shading, classify_volume
from .image import FrameBuffer
from .raycast import RayConfig, _row_spans, _run_spans
from .transfer import TransferFunction
from .volume import ScalarVolume, gradient_volume, normalized_for_rendering

_K = select_kernels("accel")

#: Scale between integer 3-4-5 chamfer distances and cell units.  The
#: integer metric sits inside [2*sqrt(2), sqrt(11)] times the Euclidean
#: distance; dividing by the band midpoint keeps every cell's scaled
#: distance within about +-8% of true Euclidean.
_CHAMFER_SCALE = (math.sqrt(11.0) + 2.0 * math.sqrt(2.0)) / 2.0

#: chamfer_int / sqrt(11) never exceeds the Euclidean distance, so
#: scaled distances times this factor are safe jump radii.
_EUCLID_FACTOR = _CHAMFER_SCALE / math.sqrt(11.0)

_CH_INF = np.int64(1) << np.int64(40)

_ZERO_NORMAL = 1e-12


@dataclass
class PresencePyramid:
    """Binary cell-occupancy pyramid, finest level first.

    ``levels[0]`` has one uint8 per interpolation cell (dims minus one
    per axis), nonzero iff any of the cell's eight corner values is
    nonzero.  Each coarser level OR-reduces 2x2x2 blocks, padding odd
    extents with empty cells, down to a single root cell.
    """

    levels: list
    source: str
    tf_fingerprint: str = ""
    _packed: tuple | None = field(default=None, repr=False)

    @property
    def depth(self) -> int:
        """Number of levels above the base."""
        return len(self.levels) - 1

    @property
    def cell_dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.levels[0].shape
        return (nx, ny, nz)

    def occupancy(self) -> float:
        """Fraction of base cells marked non-empty."""
        return float(np.count_nonzero(self.levels[0])) / self.levels[0].size

    def nbytes(self) -> int:
        return int(sum(lvl.nbytes for lvl in self.levels))

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat uint8 of all levels plus an int64 (levels, 4) table of
        (offset, nz, ny, nx) rows, the layout the kernels consume."""
        if self._packed is None:
            metas = []
            chunks = []
            offset = 0
            for lvl in self.levels:
                nzc, nyc, nxc = lvl.shape
                metas.append((offset, nzc, nyc, nxc))
                chunks.append(lvl.ravel())
                offset += lvl.size
            self._packed = (
                np.ascontiguousarray(np.concatenate(chunks), dtype=np.uint8),
                np.asarray(metas, dtype=np.int64),
            )
        return self._packed


@dataclass
class RangePyramid:
    """Per-cell min/max of the density field, finest level first.

    Parent cells bound their children: parent min <= child mins and
    parent max >= child maxes, with odd extents padded by empty ranges
    (+inf min, -inf max) that never win a comparison.
    """

    mins: list
    maxes: list

    @property
    def depth(self) -> int:
        return len(self.mins) - 1

    @property
    def cell_dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.mins[0].shape
        return (nx, ny, nz)

    def nbytes(self) -> int:
        return int(sum(a.nbytes + b.nbytes for a, b in zip(self.mins, self.maxes)))


@dataclass
class AveragePyramid:
    """Resolution pyramid of 2x2x2 block means over normalized density.

    Level 0 is the rendering-normalized volume itself; each coarser
    level halves every axis, border blocks averaging only the samples
    they actually contain.
    """

    levels: list
    source: str

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def nbytes(self) -> int:
        return int(sum(lvl.nbytes for lvl in self.levels))


@dataclass
class DistanceMap:
    """Chamfer distance from each cell to the nearest occupied cell.

    ``distance`` is a flat float64 array over the cell grid (x fastest),
    exactly 0.0 on occupied cells and np.inf when nothing is occupied.
    Values approximate Euclidean cell distance within about +-8% and
    shrink by at most 1 between neighboring cells one apart.
    """

    dims: tuple[int, int, int]
    distance: np.ndarray
    source: str
    tf_fingerprint: str = ""

    def grid(self) -> np.ndarray:
        cx, cy, cz = self.dims
        return self.distance.reshape(cz, cy, cx)


@dataclass
class BoundaryVoxelList:
    """Surface voxels found by the six-direction visibility scan.

    ``coords`` is (N, 3) int32 voxel indices (ix, iy, iz), free of
    duplicates; ``normals`` are unit vectors from the negated density
    gradient; ``densities`` are the normalized values at the voxels.
    """

    coords: np.ndarray
    normals: np.ndarray
    densities: np.ndarray
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    def entries(self) -> list:
        """Rows as ((ix, iy, iz), (nx, ny, nz), density) tuples."""
        return [
            (tuple(int(c) for c in self.coords[i]),
             tuple(float(v) for v in self.normals[i]),
             float(self.densities[i]))
            for i in range(len(self))
        ]


def _opacity_field(vol: ScalarVolume, tf: TransferFunction) -> np.ndarray:
    """Float32 voxel opacities exactly as a classified volume stores them."""
    norm = normalized_for_rendering(vol)
    return tf.opacity(norm.data.astype(np.float64)).astype(np.float32)


def _occupancy_cells(field: np.ndarray) -> np.ndarray:
    """Uint8 cell grid, 1 where any of the eight corner values is nonzero."""
    nzv = field != 0
    occ = nzv[:-1, :-1, :-1].copy()
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                if a == b == c == 0:
                    continue
                occ |= nzv[a : a + occ.shape[0], b : b + occ.shape[1], c : c + occ.shape[2]]
    return occ.astype(np.uint8)


def _or_reduce(cells: np.ndarray) -> np.ndarray:
    cz, cy, cx = cells.shape
    pad = np.zeros((cz + (cz & 1), cy + (cy & 1), cx + (cx & 1)), dtype=np.uint8)
    pad[:cz, :cy, :cx] = cells
    out = pad[0::2, 0::2, 0::2].copy()
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                if a == b == c == 0:
                    continue
                out |= pad[a::2, b::2, c::2]
    return out


def build_presence_pyramid(vol: ScalarVolume, tf: TransferFunction | None = None) -> PresencePyramid:
    """Occupancy pyramid over `vol`'s interpolation cells.

    With a transfer function, emptiness means zero classified opacity
    (what composite traversal skips); without one it means zero
    normalized density (what mip traversal skips).
    """
    if tf is None:
        base_field = normalized_for_rendering(vol).data
        source = "density"
        fp = ""
    else:
        base_field = _opacity_field(vol, tf)
        source = "opacity"
        fp = tf.fingerprint()
    levels = [_occupancy_cells(base_field)]
    while max(levels[-1].shape) > 1:
        levels.append(_or_reduce(levels[-1]))
    return PresencePyramid(levels=levels, source=source, tf_fingerprint=fp)


def _minmax_cells(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mins = data[:-1, :-1, :-1].copy()
    maxes = mins.copy()
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                if a == b == c == 0:
                    continue
                sl = data[a : a + mins.shape[0], b : b + mins.shape[1], c : c + mins.shape[2]]
                np.minimum(mins, sl, out=mins)
                np.maximum(maxes, sl, out=maxes)
    return mins, maxes


def _range_reduce(mins: np.ndarray, maxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cz, cy, cx = mins.shape
    shape = (cz + (cz & 1), cy + (cy & 1), cx + (cx & 1))
    pmin = np.full(shape, np.inf, dtype=mins.dtype)
    pmax = np.full(shape, -np.inf, dtype=maxes.dtype)
    pmin[:cz, :cy, :cx] = mins
    pmax[:cz, :cy, :cx] = maxes
    omin = pmin[0::2, 0::2, 0::2].copy()
    omax = pmax[0::2, 0::2, 0::2].copy()
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                if a == b == c == 0:
                    continue
                np.minimum(omin, pmin[a::2, b::2, c::2], out=omin)
                np.maximum(omax, pmax[a::2, b::2, c::2], out=omax)
    return omin, omax


def build_range_pyramid(vol: ScalarVolume) -> RangePyramid:
    """Min/max pyramid of the normalized density over interpolation cells."""
    data = normalized_for_rendering(vol).data
    mn, mx = _minmax_cells(data)
    mins = [mn]
    maxes = [mx]
    while max(mins[-1].shape) > 1:
        mn, mx = _range_reduce(mins[-1], maxes[-1])
        mins.append(mn)
        maxes.append(mx)
    return RangePyramid(mins=mins, maxes=maxes)


def _avg_reduce(a: np.ndarray) -> np.ndarray:
    nz, ny, nx = a.shape
    pz, py, px = nz + (nz & 1), ny + (ny & 1), nx + (nx & 1)
    buf = np.zeros((pz, py, px), dtype=np.float64)
    buf[:nz, :ny, :nx] = a
    cnt = np.zeros((pz, py, px), dtype=np.float64)
    cnt[:nz, :ny, :nx] = 1.0
    s = np.zeros((pz // 2, py // 2, px // 2), dtype=np.float64)
    c = np.zeros_like(s)
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                s += buf[oz::2, oy::2, ox::2]
                c += cnt[oz::2, oy::2, ox::2]
    return (s / c).astype(np.float32)


def build_average_pyramid(vol: ScalarVolume) -> AveragePyramid:
    """Mean-of-samples resolution pyramid for coarse splatting."""
    levels = [np.ascontiguousarray(normalized_for_rendering(vol).data)]
    while max(levels[-1].shape) > 1:
        levels.append(np.ascontiguousarray(_avg_reduce(levels[-1])))
    return AveragePyramid(levels=levels, source=vol.fingerprint())


def _merge_slice(dst: np.ndarray, prev: np.ndarray) -> np.ndarray:
    """Chamfer relaxation of one z slice from its finished neighbor slice."""
    best = prev + 3
    best[1:, :] = np.minimum(best[1:, :], prev[:-1, :] + 4)
    best[:-1, :] = np.minimum(best[:-1, :], prev[1:, :] + 4)
    best[:, 1:] = np.minimum(best[:, 1:], prev[:, :-1] + 4)
    best[:, :-1] = np.minimum(best[:, :-1], prev[:, 1:] + 4)
    best[1:, 1:] = np.minimum(best[1:, 1:], prev[:-1, :-1] + 5)
    best[1:, :-1] = np.minimum(best[1:, :-1], prev[:-1, 1:] + 5)
    best[:-1, 1:] = np.minimum(best[:-1, 1:], prev[1:, :-1] + 5)
    best[:-1, :-1] = np.minimum(best[:-1, :-1], prev[1:, 1:] + 5)
    return np.minimum(dst, best)


def _merge_row(row: np.ndarray, prev: np.ndarray) -> np.ndarray:
    out = np.minimum(row, prev + 3)
    out[1:] = np.minimum(out[1:], prev[:-1] + 4)
    out[:-1] = np.minimum(out[:-1], prev[1:] + 4)
    return out


def chamfer_distance(mask) -> np.ndarray:
    """Distance to the nearest True cell under the 3-4-5 chamfer metric.

    Two raster passes (forward and backward) over integer weights give
    the exact chamfer distance; the result is scaled to cell units so
    it tracks Euclidean distance within about +-8%, is exactly 0.0 on
    True cells, and is np.inf everywhere when the mask has no True.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 3:
        raise ValueError(f"expected a 3D mask, got shape {m.shape}")
    d = np.where(m, np.int64(0), _CH_INF)
    cz, cy, cx = d.shape
    idx3 = 3 * np.arange(cx, dtype=np.int64)
    for z in range(cz):
        if z > 0:
            d[z] = _merge_slice(d[z], d[z - 1])
        sl = d[z]
        for y in range(cy):
            if y > 0:
                sl[y] = _merge_row(sl[y], sl[y - 1])
            r = sl[y]
            sl[y] = np.minimum(r, np.minimum.accumulate(r - idx3) + idx3)
    for z in range(cz - 1, -1, -1):
        if z < cz - 1:
            d[z] = _merge_slice(d[z], d[z + 1])
        sl = d[z]
        for y in range(cy - 1, -1, -1):
            if y < cy - 1:
                sl[y] = _merge_row(sl[y], sl[y + 1])
            r = sl[y][::-1].copy()
            r = np.minimum(r, np.minimum.accumulate(r - idx3) + idx3)
            sl[y] = r[::-1]
    return np.where(d >= _CH_INF, np.inf, d.astype(np.float64) / _CHAMFER_SCALE)


def build_distance_map(vol: ScalarVolume, tf: TransferFunction | None = None) -> DistanceMap:
    """Chamfer distance map over `vol`'s interpolation cells.

    Emptiness follows the same rule as :func:`build_presence_pyramid`:
    classified opacity with a transfer function, normalized density
    without.
    """
    if tf is None:
        base_field = normalized_for_rendering(vol).data
        source = "density"
        fp = ""
    else:
        base_field = _opacity_field(vol, tf)
        source = "opacity"
        fp = tf.fingerprint()
    occ = _occupancy_cells(base_field)
    dist = chamfer_distance(occ.astype(bool))
    nzc, nyc, nxc = occ.shape
    return DistanceMap(
        dims=(nxc, nyc, nzc),
        distance=np.ascontiguousarray(dist.ravel()),
        source=source,
        tf_fingerprint=fp,
    )


def _require_structure(struct, source: str, tf: TransferFunction | None, vol: ScalarVolume):
    if struct.source != source:
        raise ValueError(
            f"structure was built from {struct.source!r} but this traversal needs {source!r}"
        )
    if source == "opacity" and tf is not None and struct.tf_fingerprint != tf.fingerprint():
        raise ValueError("structure was built for a different transfer function")
    nx, ny, nz = vol.dims
    if isinstance(struct, PresencePyramid):
        have = struct.cell_dims
    else:
        have = struct.dims
    if have != (nx - 1, ny - 1, nz - 1):
        raise ValueError(f"structure cell dims {have} do not match volume dims {vol.dims}")


def _composite_skipping_render(vol, tf, cam, cfg, workers, stats, classified, block, extra):
    start = time.perf_counter()
    w, h = cam.image_dims
    origins, dirs = cam.pixel_origins_dirs()
    n = w * h
    cvol = classified if classified is not None else classify_volume(vol, tf, cfg.shading)
    dx, dy, dz = cvol.spacing
    hw = cfg.step * min(cvol.spacing)
    rgba = np.zeros((n, 4), dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)
    term = np.zeros(n, dtype=np.uint8)

    def work(span):
        sl = slice(span[0] * w, span[1] * w)
        rgb_b, acc_b, tk_b, sk_b, term_b = block(
            cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
            dx, dy, dz, origins[sl], dirs[sl], hw, float(cfg.step), cfg.ert_threshold,
            *extra,
        )
        rgba[sl, :3] = rgb_b
        rgba[sl, 3] = acc_b
        taken[sl] = tk_b
        skipped[sl] = sk_b
        term[sl] = term_b

    _run_spans(work, _row_spans(h), workers)
    fb = FrameBuffer(w, h, rgba.reshape(h, w, 4))
    _fill_stats(stats, cfg.mode, taken, skipped, int(term.sum()), start)
    return fb


def _mip_skipping_render(vol, cam, cfg, workers, stats, block, extra):
    start = time.perf_counter()
    w, h = cam.image_dims
    origins, dirs = cam.pixel_origins_dirs()
    n = w * h
    norm = normalized_for_rendering(vol)
    dx, dy, dz = norm.spacing
    hw = cfg.step * min(norm.spacing)
    vals = np.zeros(n, dtype=np.float64)
    taken = np.zeros(n, dtype=np.int64)
    skipped = np.zeros(n, dtype=np.int64)

    def work(span):
        sl = slice(span[0] * w, span[1] * w)
        vals_b, tk_b, sk_b = block(
            norm.data, dx, dy, dz, origins[sl], dirs[sl], hw, *extra
        )
        vals[sl] = vals_b
        taken[sl] = tk_b
        skipped[sl] = sk_b

    _run_spans(work, _row_spans(h), workers)
    rgba = np.empty((n, 4), dtype=np.float64)
    rgba[:, 0] = rgba[:, 1] = rgba[:, 2] = vals
    rgba[:, 3] = 1.0
    fb = FrameBuffer(w, h, rgba.reshape(h, w, 4))
    _fill_stats(stats, cfg.mode, taken, skipped, 0, start)
    return fb


def _fill_stats(stats, mode, taken, skipped, terminated, start):
    if stats is not None:
        stats["mode"] = mode
        stats["samples_taken"] = int(taken.sum())
        stats["samples_skipped"] = int(skipped.sum())
        stats["rays_terminated"] = terminated
        stats["wall_ms"] = (time.perf_counter() - start) * 1000.0


def _check_skip_mode(cfg: RayConfig, workers: int):
    if cfg.mode not in ("composite", "mip"):
        raise ValueError(
            f"empty-space skipping supports composite or mip, got {cfg.mode!r}"
        )
    if workers < 1:
        raise ValueError("workers must be >= 1")


def raycast_presence(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    cfg: RayConfig,
    pyramid: PresencePyramid | None = None,
    *,
    workers: int = 1,
    stats: dict | None = None,
    classified: ClassifiedVolume | None = None,
) -> FrameBuffer:
    """Render with presence-pyramid empty-space skipping.

    Byte-identical to :func:`volren.raycast.render` with the same
    arguments; ``stats`` additionally reports ``samples_skipped``, and
    taken plus skipped equals the brute-force sample count.
    """
    _check_skip_mode(cfg, workers)
    if cfg.mode == "composite":
        if tf is None and classified is None:
            raise ValueError("composite mode needs a transfer function or a classified volume")
        if pyramid is None:
            if tf is None:
                raise ValueError("building an opacity pyramid needs the transfer function")
            pyramid = build_presence_pyramid(vol, tf)
        _require_structure(pyramid, "opacity", tf, vol)
        flat, meta = pyramid.packed()
        return _composite_skipping_render(
            vol, tf, cam, cfg, workers, stats, classified,
            _K.presence_composite_block, (flat, meta),
        )
    if pyramid is None:
        pyramid = build_presence_pyramid(vol)
    _require_structure(pyramid, "density", None, vol)
    flat, meta = pyramid.packed()
    return _mip_skipping_render(vol, cam, cfg, workers, stats, _K.presence_mip_block, (flat, meta))


def raycast_proximity(
    vol: ScalarVolume,
    tf: TransferFunction | None,
    cam: Camera,
    cfg: RayConfig,
    dmap: DistanceMap | None = None,
    *,
    workers: int = 1,
    stats: dict | None = None,
    classified: ClassifiedVolume | None = None,
) -> FrameBuffer:
    """Render with distance-map empty-space skipping.

    Jump lengths come from each cell's guaranteed-empty radius; samples
    resume on the shared lattice, so output is byte-identical to the
    brute-force render and to :func:`raycast_presence`.
    """
    _check_skip_mode(cfg, workers)
    if cfg.mode == "composite":
        if tf is None and classified is None:
            raise ValueError("composite mode needs a transfer function or a classified volume")
        if dmap is None:
            if tf is None:
                raise ValueError("building an opacity distance map needs the transfer function")
            dmap = build_distance_map(vol, tf)
        _require_structure(dmap, "opacity", tf, vol)
        clearance = np.ascontiguousarray(dmap.grid() * _EUCLID_FACTOR)
        return _composite_skipping_render(
            vol, tf, cam, cfg, workers, stats, classified,
            _K.proximity_composite_block, (clearance,),
        )
    if dmap is None:
        dmap = build_distance_map(vol)
    _require_structure(dmap, "density", None, vol)
    clearance = np.ascontiguousarray(dmap.grid() * _EUCLID_FACTOR)
    return _mip_skipping_render(vol, cam, cfg, workers, stats, _K.proximity_mip_block, (clearance,))


def raycast_homogeneous(
    vol: ScalarVolume,
    tf: TransferFunction,
    cam: Camera,
    cfg: RayConfig,
    pyramid: RangePyramid | None = None,
    *,
    epsilon: float = 0.02,
    workers: int = 1,
    stats: dict | None = None,
) -> FrameBuffer:
    """Composite render that short-cuts homogeneous cells.

    Cells whose density range (finest range-pyramid level) is at most
    ``epsilon`` contribute their midpoint classification per sample
    instead of interpolating.  At ``epsilon=0`` only exactly-constant
    cells qualify and the image equals the brute-force render bit for
    bit; for larger tolerances the per-channel deviation stays within
    the transfer function's opacity slope times epsilon times the
    accumulated path length.  Samples through the shortcut count as
    skipped.  Unlit classification only: shaded colors vary inside
    constant cells, which would defeat the midpoint substitution.
    """
    if cfg.mode != "composite":
        raise ValueError(f"homogeneity skipping is composite-only, got {cfg.mode!r}")
    if cfg.shading is not None:
        raise ValueError("homogeneity skipping supports unlit classification only")
    if tf is None:
        raise ValueError("homogeneity skipping needs a transfer function")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if pyramid is None:
        pyramid = build_range_pyramid(vol)
    nx, ny, nz = vol.dims
    if pyramid.cell_dims != (nx - 1, ny - 1, nz - 1):
        raise ValueError(
            f"range pyramid cell dims {pyramid.cell_dims} do not match volume dims {vol.dims}"
        )
    mn = pyramid.mins[0].astype(np.float64)
    mx = pyramid.maxes[0].astype(np.float64)
    homog = np.ascontiguousarray(((mx - mn) <= epsilon).astype(np.uint8))
    vmid = (mn + mx) / 2.0
    a_mid = np.ascontiguousarray(tf.opacity(vmid).astype(np.float32))
    cols = tf.color(vmid)
    r_mid = np.ascontiguousarray(cols[..., 0], dtype=np.float32)
    g_mid = np.ascontiguousarray(cols[..., 1], dtype=np.float32)
    b_mid = np.ascontiguousarray(cols[..., 2], dtype=np.float32)
    cvol = classify_volume(vol, tf, None)
    return _composite_skipping_render(
        vol, tf, cam, cfg, workers, stats, cvol,
        _K.homog_composite_block, (homog, a_mid, r_mid, g_mid, b_mid),
    )


_SCAN_DIRECTIONS = (
    (2, False, (1.0, 0.0, 0.0)),
    (2, True, (-1.0, 0.0, 0.0)),
    (1, False, (0.0, 1.0, 0.0)),
    (1, True, (0.0, -1.0, 0.0)),
    (0, False, (0.0, 0.0, 1.0)),
    (0, True, (0.0, 0.0, -1.0)),
)


def _first_solid(solid: np.ndarray, axis: int, reverse: bool) -> np.ndarray:
    s = np.flip(solid, axis=axis) if reverse else solid
    first = s & (np.cumsum(s, axis=axis) == 1)
    return np.flip(first, axis=axis) if reverse else first


def extract_boundary_voxels(vol: ScalarVolume, threshold: float = 0.5) -> BoundaryVoxelList:
    """Voxels at or above `threshold` visible along some axis direction.

    For each of the six orthographic view directions the first solid
    voxel of every grid row facing it is kept; the union (without
    duplicates) is the renderable surface.  Normals are the negated
    normalized central-difference gradient; where the gradient
    vanishes, the normal faces the first scan direction that saw the
    voxel.  Densities are the normalized values the renderers sample.
    """
    norm = normalized_for_rendering(vol)
    solid = norm.data.astype(np.float64) >= float(threshold)
    visible = np.zeros_like(solid)
    firsts = []
    for axis, rev, vdir in _SCAN_DIRECTIONS:
        fm = _first_solid(solid, axis, rev)
        firsts.append((fm, vdir))
        visible |= fm
    kji = np.argwhere(visible)
    n = kji.shape[0]
    if n == 0:
        return BoundaryVoxelList(
            coords=np.zeros((0, 3), dtype=np.int32),
            normals=np.zeros((0, 3), dtype=np.float64),
            densities=np.zeros(0, dtype=np.float64),
            spacing=norm.spacing,
            dims=norm.dims,
        )
    kk, jj, ii = kji[:, 0], kji[:, 1], kji[:, 2]
    grad = gradient_volume(norm)[kk, jj, ii]
    mag = np.sqrt(np.sum(grad * grad, axis=1))
    normals = np.zeros((n, 3), dtype=np.float64)
    ok = mag > _ZERO_NORMAL
    normals[ok] = -grad[ok] / mag[ok, None]
    if (~ok).any():
        assigned = np.zeros(n, dtype=bool)
        for fm, vdir in firsts:
            hit = fm[kk, jj, ii] & ~assigned & ~ok
            normals[hit] = -np.asarray(vdir, dtype=np.float64)
            assigned |= hit
    return BoundaryVoxelList(
        coords=np.stack([ii, jj, kk], axis=1).astype(np.int32),
        normals=normals,
        densities=norm.data[kk, jj, ii].astype(np.float64),
        spacing=norm.spacing,
        dims=norm.dims,
    )


def front_facing(points: np.ndarray, normals: np.ndarray, cam: Camera) -> np.ndarray:
    """Mask of points whose normal faces the camera (normal . view <= 0)."""
    p = np.asarray(points, dtype=np.float64)
    nr = np.asarray(normals, dtype=np.float64)
    if isinstance(cam.projection, Orthographic):
        view = np.broadcast_to(cam.forward, p.shape)
    else:
        view = p - cam.eye
        ln = np.linalg.norm(view, axis=1, keepdims=True)
        view = view / np.where(ln == 0.0, 1.0, ln)
    return np.einsum("ij,ij->i", nr, view) <= 0.0


def _point_colors(pts, normals, cam, shading):
    n = pts.shape[0]
    cols = np.ones((n, 3), dtype=np.float64)
    if shading is None or n == 0:
        return cols
    light = np.asarray(shading.light, dtype=np.float64)
    ndl = normals @ light
    diff = np.maximum(ndl, 0.0)
    cols *= (shading.ambient + shading.diffuse * diff)[:, None]
    if shading.specular > 0.0:
        if isinstance(cam.projection, Orthographic):
            view = np.broadcast_to(cam.forward, pts.shape)
        else:
            view = pts - cam.eye
            ln = np.linalg.norm(view, axis=1, keepdims=True)
            view = view / np.where(ln == 0.0, 1.0, ln)
        refl = 2.0 * ndl[:, None] * normals - light
        rdv = -np.einsum("ij,ij->i", refl, view)
        glint = (diff > 0.0) & (rdv > 0.0)
        if glint.any():
            cols[glint] += (shading.specular * rdv[glint] ** shading.exponent)[:, None]
    return cols


def _plane_cut_points(vol: ScalarVolume, ppoint, pnormal):
    """Voxel centers within half a voxel of the plane, with densities."""
    norm = normalized_for_rendering(vol)
    nx, ny, nz = norm.dims
    sx, sy, sz = norm.spacing
    xs = (np.arange(nx, dtype=np.float64) + 0.5) * sx
    ys = (np.arange(ny, dtype=np.float64) + 0.5) * sy
    zs = (np.arange(nz, dtype=np.float64) + 0.5) * sz
    sd = (
        (xs - ppoint[0])[None, None, :] * pnormal[0]
        + (ys - ppoint[1])[None, :, None] * pnormal[1]
        + (zs - ppoint[2])[:, None, None] * pnormal[2]
    )
    thick = 0.5 * (sx * abs(pnormal[0]) + sy * abs(pnormal[1]) + sz * abs(pnormal[2]))
    cut = np.abs(sd) <= thick
    kji = np.argwhere(cut)
    if kji.shape[0] == 0:
        return np.zeros((0, 3), dtype=np.float64), np.zeros(0, dtype=np.float64)
    kk, jj, ii = kji[:, 0], kji[:, 1], kji[:, 2]
    pts = np.stack([xs[ii], ys[jj], zs[kk]], axis=1)
    return pts, norm.data[kk, jj, ii].astype(np.float64)


def _project_points(cam: Camera, pts: np.ndarray):
    """Pixel centers, depths, validity and pixels-per-world scales.

    Inverts the camera's pixel-to-ray mapping so a point on a pixel's
    ray projects to exactly that pixel's fractional index.
    """
    w, h = cam.image_dims
    rel = pts - cam.eye
    xc = rel @ cam.right
    yc = rel @ cam.up
    zc = rel @ cam.forward
    if isinstance(cam.projection, Orthographic):
        pw = cam.projection.width / w
        ph = cam.projection.height / h
        fx = xc / pw + w / 2.0 - 0.5
        fy = h / 2.0 - 0.5 - yc / ph
        valid = np.ones(pts.shape[0], dtype=bool)
        scale_x = np.full(pts.shape[0], 1.0 / pw)
        scale_y = np.full(pts.shape[0], 1.0 / ph)
    else:
        ty = math.tan(math.radians(cam.projection.fov_y) / 2.0)
        tx = ty * (w / h)
        valid = zc > 1e-12
        zs = np.where(valid, zc, 1.0)
        fx = (xc / zs / tx + 1.0) * (w / 2.0) - 0.5
        fy = (1.0 - yc / zs / ty) * (h / 2.0) - 0.5
        scale_x = (w / 2.0) / (tx * zs)
        scale_y = (h / 2.0) / (ty * zs)
    return fx, fy, zc, valid, scale_x, scale_y


_MAX_SPLAT = 33


def render_points(
    boundary: BoundaryVoxelList,
    cam: Camera,
    *,
    shading: Shading | None = None,
    plane=None,
    volume: ScalarVolume | None = None,
) -> FrameBuffer:
    """Depth-buffered square-splat rendering of boundary voxels.

    Back faces (normal pointing away from the camera) are culled.  With
    ``plane=(point, normal)`` the half-space the normal points into is
    cut away; passing the source ``volume`` as well paints the exposed
    cross-section with its raw densities as gray, unlit and uncullled.
    Splats cover each voxel's projected footprint, the nearest point
    winning every pixel; the depth plane of the result holds camera
    depth with inf background.
    """
    w, h = cam.image_dims
    sp = np.asarray(boundary.spacing, dtype=np.float64)
    pts = (boundary.coords.astype(np.float64) + 0.5) * sp
    normals = np.asarray(boundary.normals, dtype=np.float64)
    keep = front_facing(pts, normals, cam)
    pnormal = None
    if plane is not None:
        ppoint = np.asarray(plane[0], dtype=np.float64)
        pnormal = np.asarray(plane[1], dtype=np.float64)
        ln = np.linalg.norm(pnormal)
        if ln == 0.0:
            raise ValueError("plane normal must be nonzero")
        pnormal = pnormal / ln
        keep &= ((pts - ppoint) @ pnormal) <= 0.0
    pts = pts[keep]
    normals = normals[keep]
    colors = _point_colors(pts, normals, cam, shading)
    if pnormal is not None and volume is not None:
        cpts, cvals = _plane_cut_points(volume, ppoint, pnormal)
        inside = ((cpts - ppoint) @ pnormal) <= 0.0
        cpts = cpts[inside]
        cvals = cvals[inside]
        pts = np.concatenate([pts, cpts])
        colors = np.concatenate([colors, np.repeat(cvals[:, None], 3, axis=1)])
    n = pts.shape[0]
    rgba = np.zeros((h, w, 4), dtype=np.float64)
    zplane = np.full(h * w, np.inf, dtype=np.float64)
    fb = FrameBuffer(w, h, rgba)
    fb.depth = zplane.reshape(h, w)
    if n == 0:
        return fb
    fx, fy, depth, valid, scale_x, scale_y = _project_points(cam, pts)
    half_r = 0.5 * float(sp @ np.abs(cam.right))
    half_u = 0.5 * float(sp @ np.abs(cam.up))
    side = np.ceil(np.maximum(2.0 * half_r * scale_x, 2.0 * half_u * scale_y))
    side = np.clip(side, 1, _MAX_SPLAT).astype(np.int64)
    side = np.where(valid, side, 0)
    px = np.rint(np.clip(fx, -1e9, 1e9)).astype(np.int64)
    py = np.rint(np.clip(fy, -1e9, 1e9)).astype(np.int64)
    half = (side - 1) // 2
    max_side = int(side.max())
    cflat = rgba.reshape(-1, 4)
    for pass_write in (False, True):
        for dy in range(max_side):
            for dx in range(max_side):
                sel = (dx < side) & (dy < side)
                if not sel.any():
                    continue
                gx = px[sel] + dx - half[sel]
                gy = py[sel] + dy - half[sel]
                inb = (gx >= 0) & (gx < w) & (gy >= 0) & (gy < h)
                if not inb.any():
                    continue
                lin = gy[inb] * w + gx[inb]
                dsub = depth[sel][inb]
                if not pass_write:
                    np.minimum.at(zplane, lin, dsub)
                else:
                    win = dsub == zplane[lin]
                    if win.any():
                        cflat[lin[win], :3] = colors[sel][inb][win]
                        cflat[lin[win], 3] = 1.0
    return fb
