from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volren import extract_surface, load_mesh, make_phantom, save_mesh
from volren.backend import select_kernels
from volren.isosurface import cube_index, edge_vertex
from volren.volume import ScalarVolume


def sphere_radius_error(mesh, vol):
    center = np.array(vol.extent) / 2
    r = np.linalg.norm(mesh.vertices - center, axis=1)
    true_r = 0.3 * min(vol.extent)
    return np.abs(r - true_r)


def undirected_edge_counts(triangles):
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    _, counts = np.unique(np.sort(edges, axis=1), axis=0, return_counts=True)
    return counts


def count_ambiguous_faces(data, t):
    """Cell faces whose corners classify in a diagonal pattern."""
    b = data.astype(np.float64) >= t

    def planar(a):
        c00 = a[..., :-1, :-1]
        c10 = a[..., :-1, 1:]
        c01 = a[..., 1:, :-1]
        c11 = a[..., 1:, 1:]
        return int(
            ((c00 & c11 & ~c10 & ~c01) | (~c00 & ~c11 & c10 & c01)).sum()
        )

    return planar(b) + planar(b.transpose(1, 0, 2)) + planar(b.transpose(2, 0, 1))


def test_sphere_vertices_sit_on_the_surface():
    vol = make_phantom("sphere", (64, 64, 64))
    mesh = extract_surface(vol, 0.0)
    assert len(mesh) > 1000
    err = sphere_radius_error(mesh, vol)
    assert err.max() <= np.sqrt(3.0)  # one voxel diagonal
    assert err.mean() < 0.05


def test_sphere_normals_point_radially_outward():
    vol = make_phantom("sphere", (64, 64, 64))
    mesh = extract_surface(vol, 0.0)
    center = np.array(vol.extent) / 2
    outward = mesh.vertices - center
    outward /= np.linalg.norm(outward, axis=1)[:, None]
    dots = np.clip((mesh.normals * outward).sum(axis=1), -1.0, 1.0)
    angles = np.degrees(np.arccos(dots))
    assert angles.max() <= 5.0


def test_anisotropic_spacing_keeps_world_geometry():
    vol = make_phantom("sphere", (48, 64, 40), spacing=(1.0, 0.75, 1.2))
    mesh = extract_surface(vol, 0.0)
    err = sphere_radius_error(mesh, vol)
    diag = np.sqrt(sum(s * s for s in vol.spacing))
    assert err.max() <= diag


def test_single_voxel_yields_exact_octahedron():
    data = np.zeros((5, 5, 5), dtype=np.float32)
    data[2, 2, 2] = 1.0
    mesh = extract_surface(ScalarVolume(data), 0.5)
    assert len(mesh.vertices) == 6
    assert len(mesh.triangles) == 8
    # crossings at the midpoints between the hot voxel and its neighbors
    got = set(map(tuple, np.round(mesh.vertices, 12)))
    want = {
        (2.0, 2.5, 2.5),
        (3.0, 2.5, 2.5),
        (2.5, 2.0, 2.5),
        (2.5, 3.0, 2.5),
        (2.5, 2.5, 2.0),
        (2.5, 2.5, 3.0),
    }
    assert got == want
    assert np.all(undirected_edge_counts(mesh.triangles) == 2)


def test_corner_exact_crossings_collapse_and_drop():
    # threshold equal to the peak puts every crossing at the same point
    data = np.zeros((5, 5, 5), dtype=np.float32)
    data[2, 2, 2] = 1.0
    stats = {}
    mesh = extract_surface(ScalarVolume(data), 1.0, stats=stats)
    assert len(mesh) == 0
    assert stats["triangles_dropped"] == stats["triangles_raw"] > 0


def test_threshold_above_range_gives_empty_mesh():
    vol = make_phantom("sphere", (16, 16, 16))
    stats = {}
    mesh = extract_surface(vol, 1e9, stats=stats)
    assert len(mesh.vertices) == 0
    assert len(mesh) == 0
    assert stats["cells_crossed"] == 0


def test_streaming_matches_single_slab_bitwise():
    vol = make_phantom("sphere", (24, 20, 28), spacing=(1.0, 0.7, 1.3))
    full_stats = {}
    strm_stats = {}
    full = extract_surface(vol, 0.0, stats=full_stats)
    strm = extract_surface(vol, 0.0, streaming=True, stats=strm_stats)
    assert np.array_equal(full.vertices, strm.vertices)
    assert np.array_equal(full.normals, strm.normals)
    assert np.array_equal(full.triangles, strm.triangles)
    assert strm_stats["max_slab_bytes"] * 4 < full_stats["max_slab_bytes"]


def test_worker_count_never_changes_output():
    vol = make_phantom("sphere", (32, 32, 32))
    one = extract_surface(vol, 0.0, workers=1)
    four = extract_surface(vol, 0.0, workers=4)
    assert np.array_equal(one.vertices, four.vertices)
    assert np.array_equal(one.normals, four.normals)
    assert np.array_equal(one.triangles, four.triangles)


def test_voxel_translation_shifts_mesh_exactly():
    vol = make_phantom("sphere", (32, 32, 32))
    rolled = ScalarVolume(np.roll(vol.data, 1, axis=2))  # one voxel along x
    a = extract_surface(vol, 0.0)
    b = extract_surface(rolled, 0.0)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.normals, b.normals)
    assert np.array_equal(a.vertices[:, 1:], b.vertices[:, 1:])
    assert np.allclose(b.vertices[:, 0] - a.vertices[:, 0], 1.0, atol=1e-12)


def test_negating_data_and_threshold_flips_normals_only():
    vol = make_phantom("sphere", (20, 24, 16))
    neg = ScalarVolume(-vol.data, spacing=vol.spacing)
    a = extract_surface(vol, 0.0)
    b = extract_surface(neg, -0.0)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.normals, -b.normals)
    assert len(a.triangles) == len(b.triangles)


def test_closed_phantom_is_watertight_and_oriented():
    vol = make_phantom("sphere", (32, 32, 32))
    assert count_ambiguous_faces(vol.data, 0.0) == 0
    mesh = extract_surface(vol, 0.0)
    assert np.all(undirected_edge_counts(mesh.triangles) == 2)
    directed = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    _, counts = np.unique(directed, axis=0, return_counts=True)
    assert np.all(counts == 1)
    # winding faces the same way as the interpolated normals
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    v1 = mesh.vertices[mesh.triangles[:, 1]]
    v2 = mesh.vertices[mesh.triangles[:, 2]]
    geometric = np.cross(v1 - v0, v2 - v0)
    summed = (
        mesh.normals[mesh.triangles[:, 0]]
        + mesh.normals[mesh.triangles[:, 1]]
        + mesh.normals[mesh.triangles[:, 2]]
    )
    assert np.all((geometric * summed).sum(axis=1) > 0)
    # every vertex participates in the surface
    assert set(np.unique(mesh.triangles)) == set(range(len(mesh.vertices)))


def test_shared_edges_produce_single_vertices():
    vol = make_phantom("sphere", (32, 32, 32))
    mesh = extract_surface(vol, 0.0)
    assert len(np.unique(mesh.vertices, axis=0)) == len(mesh.vertices)


@given(seed=st.integers(0, 2**31))
def test_random_volume_invariants(seed):
    rng = np.random.default_rng(seed)
    dims = rng.integers(4, 10, size=3)
    data = rng.random(tuple(dims), dtype=np.float64).astype(np.float32)
    vol = ScalarVolume(data)
    mesh = extract_surface(vol, 0.5)
    strm = extract_surface(vol, 0.5, streaming=True)
    assert np.array_equal(mesh.vertices, strm.vertices)
    assert np.array_equal(mesh.triangles, strm.triangles)
    if len(mesh.vertices) == 0:
        return
    assert np.isfinite(mesh.vertices).all()
    assert np.isfinite(mesh.normals).all()
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0, atol=1e-12)
    # each vertex sits on a lattice edge: at least two coordinates are
    # voxel-center aligned and all stay inside the volume
    frac = mesh.vertices - 0.5
    aligned = frac == np.round(frac)
    assert np.all(aligned.sum(axis=1) >= 2)
    ext = np.array(vol.extent)
    assert np.all(mesh.vertices >= 0.0)
    assert np.all(mesh.vertices <= ext)


def test_backends_agree_bitwise(rng):
    data = rng.random((9, 8, 7)).astype(np.float32)
    k_np = select_kernels("iso", backend="numpy")
    masks_np = k_np.cube_indices_block(data, 0.5, 0, 8)
    try:
        k_nb = select_kernels("iso", backend="numba")
    except ImportError:
        return
    masks_nb = k_nb.cube_indices_block(data, 0.5, 0, 8)
    assert np.array_equal(masks_nb, masks_np)

    # one edge per axis, including one touching the volume corner
    p0 = np.array([[0, 0, 0], [3, 4, 5], [2, 3, 4]], dtype=np.int64)
    p1 = np.array([[1, 0, 0], [3, 5, 5], [2, 3, 5]], dtype=np.int64)
    out = [np.empty((3, 3)) for _ in range(4)]
    k_np.edge_vertices(data, 1.0, 0.7, 1.3, 0.5, p0, p1, out[0], out[1])
    k_nb.edge_vertices(data, 1.0, 0.7, 1.3, 0.5, p0, p1, out[2], out[3])
    assert np.array_equal(out[0], out[2])
    assert np.array_equal(out[1], out[3])


def test_mesh_file_round_trip(tmp_path):
    vol = make_phantom("sphere", (16, 16, 16))
    mesh = extract_surface(vol, 0.0)
    path = tmp_path / "sphere.obj"
    save_mesh(path, mesh)
    back = load_mesh(path)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.allclose(back.vertices, mesh.vertices, rtol=1e-8, atol=1e-8)
    assert np.allclose(back.normals, mesh.normals, rtol=1e-8, atol=1e-8)


def test_cube_index_orders_corners_canonically():
    values = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    assert cube_index(values, 0.5) == 1
    values = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    assert cube_index(values, 0.5) == 0b1010
    assert cube_index([2.0] * 8, 2.0) == 255  # threshold itself counts as in


def test_edge_vertex_helper_interpolates():
    pos, nrm = edge_vertex((0, 0, 0), (1, 0, 0), 0.0, 1.0, 0.25)
    assert pos == pytest.approx([0.25, 0.0, 0.0])
    assert nrm is None
    pos, nrm = edge_vertex(
        (0, 0, 0), (1, 0, 0), 0.0, 1.0, 0.5, g0=(2.0, 0, 0), g1=(4.0, 0, 0)
    )
    assert pos == pytest.approx([0.5, 0.0, 0.0])
    assert nrm == pytest.approx([-1.0, 0.0, 0.0])
