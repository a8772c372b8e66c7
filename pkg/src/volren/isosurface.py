"""Surface extraction from scalar volumes by cube triangulation.

Cells are the cubes spanned by eight neighboring voxel centers.  Each
cell's corner classification (value >= threshold) indexes the frozen
edge/triangle tables; crossing positions are found by inverse linear
interpolation along cell edges and shared between all cells touching
the edge, so the mesh comes out indexed and seam-free.

Vertex identity is a global edge id (all x edges, then y, then z, each
set in x-fastest voxel order), which makes the output independent of
how the volume is partitioned into slabs and of the worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._mc_tables import EDGE_TABLE, TRI_TABLE
from .backend import select_kernels
from .mesh import TriangleMesh
from .volume import ScalarVolume

_K = select_kernels("iso")

# local edge -> axis it runs along, and offset of its lower endpoint
# from the cell origin (x, y, z)
_EDGE_AXIS = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2], dtype=np.int64)
_EDGE_OFF = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [0, 1, 0],
        [0, 0, 0],
        [0, 0, 1],
        [1, 0, 1],
        [0, 1, 1],
        [0, 0, 1],
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
    ],
    dtype=np.int64,
)

_VERTEX_CHUNK = 16384


def cube_index(values, threshold) -> int:
    """Classification mask for one cell.

    ``values`` holds the eight corner densities in canonical order:
    the lower z face counterclockwise from the cell origin, then the
    upper z face in the same order.
    """
    t = float(threshold)
    m = 0
    for bit in range(8):
        if float(values[bit]) >= t:
            m |= 1 << bit
    return m


def edge_vertex(p0, p1, f0, f1, threshold, g0=None, g1=None):
    """Crossing point (and normal, given endpoint gradients) on one edge."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    f0 = float(f0)
    f1 = float(f1)
    s = (float(threshold) - f0) / (f1 - f0)
    pos = p0 + s * (p1 - p0)
    if g0 is None or g1 is None:
        return pos, None
    g0 = np.asarray(g0, dtype=np.float64)
    g1 = np.asarray(g1, dtype=np.float64)
    g = g0 + s * (g1 - g0)
    norm = float(np.sqrt((g * g).sum()))
    if norm > 0.0:
        return pos, -g / norm
    edge = p1 - p0
    edge = edge / np.sqrt((edge * edge).sum())
    return pos, (-edge if f1 > f0 else edge)


def _edge_counts(nx, ny, nz):
    return (nx - 1) * ny * nz, nx * (ny - 1) * nz


def _edge_ids(nx, ny, nz, ic, jc, kc, local):
    """Global edge ids for (cell, local edge) pairs.

    ``local`` is (T, 3) local edge numbers; ``ic``/``jc``/``kc`` are
    the (T,) cell origins.
    """
    cx, cy = _edge_counts(nx, ny, nz)
    axis = _EDGE_AXIS[local]
    off = _EDGE_OFF[local]
    ei = ic[:, None] + off[:, :, 0]
    ej = jc[:, None] + off[:, :, 1]
    ek = kc[:, None] + off[:, :, 2]
    ids_x = (ek * ny + ej) * (nx - 1) + ei
    ids_y = cx + (ek * (ny - 1) + ej) * nx + ei
    ids_z = cx + cy + (ek * ny + ej) * nx + ei
    return np.where(axis == 0, ids_x, np.where(axis == 1, ids_y, ids_z))


def _decode_edge_ids(ids, nx, ny, nz):
    """Inverse of the edge id map: (M, 3) lower and upper endpoints."""
    cx, cy = _edge_counts(nx, ny, nz)
    p0 = np.empty((len(ids), 3), dtype=np.int64)
    step = np.zeros((len(ids), 3), dtype=np.int64)

    is_x = ids < cx
    r = ids[is_x]
    p0[is_x, 0] = r % (nx - 1)
    r = r // (nx - 1)
    p0[is_x, 1] = r % ny
    p0[is_x, 2] = r // ny
    step[is_x, 0] = 1

    is_y = (~is_x) & (ids < cx + cy)
    r = ids[is_y] - cx
    p0[is_y, 0] = r % nx
    r = r // nx
    p0[is_y, 1] = r % (ny - 1)
    p0[is_y, 2] = r // (ny - 1)
    step[is_y, 1] = 1

    is_z = ~(is_x | is_y)
    r = ids[is_z] - cx - cy
    p0[is_z, 0] = r % nx
    r = r // nx
    p0[is_z, 1] = r % ny
    p0[is_z, 2] = r // ny
    step[is_z, 2] = 1

    return p0, p0 + step


def _slab_triangles(data, t, k0, k1):
    """Triangle edge ids for the cell slab [k0, k1), plus slab stats."""
    nz, ny, nx = data.shape
    masks = _K.cube_indices_block(data, t, k0, k1)
    crossed = EDGE_TABLE[masks] != 0
    kc, jc, ic = np.nonzero(crossed)
    work_bytes = masks.nbytes
    if len(kc) == 0:
        empty = np.zeros((0, 3), dtype=np.int64)
        return empty, int(crossed.sum()), work_bytes
    cell_masks = masks[kc, jc, ic]
    kc = kc + k0
    cell_tris = TRI_TABLE[cell_masks]
    tri3 = cell_tris[:, :15].reshape(-1, 5, 3)
    valid = tri3[:, :, 0] != -1
    reps = valid.sum(axis=1)
    # the triangle table is authored for masks whose bits mark corners
    # below the threshold; our bits mark corners at or above it, so the
    # listed winding comes out inverted and two indices swap to keep
    # triangles facing along the vertex normals
    local = tri3[valid].astype(np.int64)[:, [0, 2, 1]]
    ids = _edge_ids(
        nx,
        ny,
        nz,
        np.repeat(ic, reps),
        np.repeat(jc, reps),
        np.repeat(kc, reps),
        local,
    )
    work_bytes += cell_tris.nbytes + ids.nbytes
    return ids, int(len(kc)), work_bytes


def extract_surface(
    vol: ScalarVolume,
    threshold: float,
    *,
    workers: int = 1,
    streaming: bool = False,
    stats: dict | None = None,
) -> TriangleMesh:
    """Extract the ``threshold`` level set of ``vol`` as a triangle mesh.

    With ``streaming=True`` the volume is classified one cell layer at
    a time, so slab working memory scales with a single slice rather
    than the full volume; the result is bitwise identical either way.
    ``workers`` parallelizes vertex placement over fixed-size chunks
    and never changes the output.
    """
    data = vol.data
    nz, ny, nx = data.shape
    dx, dy, dz = vol.spacing
    t = float(threshold)

    if streaming:
        slabs = [(k, k + 1) for k in range(nz - 1)]
    else:
        slabs = [(0, nz - 1)]

    parts = []
    cells_crossed = 0
    max_slab_bytes = 0
    for k0, k1 in slabs:
        ids, crossed, work_bytes = _slab_triangles(data, t, k0, k1)
        parts.append(ids)
        cells_crossed += crossed
        max_slab_bytes = max(max_slab_bytes, work_bytes)

    tri_ids = np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.int64)
    uniq, inverse = np.unique(tri_ids, return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int64)

    positions = np.empty((len(uniq), 3), dtype=np.float64)
    normals = np.empty((len(uniq), 3), dtype=np.float64)
    if len(uniq):
        p0, p1 = _decode_edge_ids(uniq, nx, ny, nz)
        spans = [
            (s, min(s + _VERTEX_CHUNK, len(uniq)))
            for s in range(0, len(uniq), _VERTEX_CHUNK)
        ]

        def place(span):
            s, e = span
            _K.edge_vertices(
                data, dx, dy, dz, t, p0[s:e], p1[s:e], positions[s:e], normals[s:e]
            )

        if workers > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(place, spans))
        else:
            for span in spans:
                place(span)

    raw_count = len(triangles)
    if raw_count:
        dup = (
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        )
        v0 = positions[triangles[:, 0]]
        cross = np.cross(
            positions[triangles[:, 1]] - v0, positions[triangles[:, 2]] - v0
        )
        flat = (cross == 0.0).all(axis=1)
        triangles = triangles[~(dup | flat)]

    if stats is not None:
        stats["cells_total"] = (nx - 1) * (ny - 1) * (nz - 1)
        stats["cells_crossed"] = cells_crossed
        stats["max_slab_bytes"] = max_slab_bytes
        stats["triangles_raw"] = raw_count
        stats["triangles_dropped"] = raw_count - len(triangles)
        stats["vertices"] = len(uniq)

    return TriangleMesh(vertices=positions, normals=normals, triangles=triangles)
