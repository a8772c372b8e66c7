from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from volren.accel import (
    _CHAMFER_SCALE,
    BoundaryVoxelList,
    build_distance_map,
    build_presence_pyramid,
    build_range_pyramid,
    chamfer_distance,
    extract_boundary_voxels,
    front_facing,
    raycast_homogeneous,
    raycast_presence,
    raycast_proximity,
    render_points,
)
from volren.camera import Orthographic, Perspective, axis_camera, look_at, orbit
from volren.classify import Shading
from volren.raycast import RayConfig, render
from volren.transfer import TransferFunction
from volren.volume import ScalarVolume, make_phantom, normalized_for_rendering

from conftest import fb_grid, random_volume

# Opacity is exactly zero below 0.62, so normalized phantoms have large
# transparent shells for the skipping structures to exploit.
BAND_TF = TransferFunction(
    [
        (0.0, 0.0, 0.0, 0.0, 0.0),
        (0.62, 0.1, 0.2, 0.3, 0.0),
        (0.75, 1.0, 0.6, 0.2, 0.85),
        (1.0, 1.0, 0.9, 0.1, 0.9),
    ]
)


def blobby_volume(rng, dims=(20, 20, 20), spacing=(1.0, 1.0, 1.0), count=3):
    """Mostly-empty volume with a few solid balls of random value."""
    nz, ny, nx = dims[2], dims[1], dims[0]
    data = np.zeros((nz, ny, nx), dtype=np.float32)
    zz, yy, xx = np.meshgrid(
        np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij"
    )
    for _ in range(count):
        cz, cy, cx = rng.uniform((0, 0, 0), (nz - 1, ny - 1, nx - 1))
        rad = rng.uniform(2.0, 0.35 * min(nz, ny, nx))
        val = np.float32(rng.uniform(0.7, 1.0))
        inside = (zz - cz) ** 2 + (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
        data[inside] = np.maximum(data[inside], val)
    return ScalarVolume(data, spacing=spacing)


def orbit_ortho(vol, az, el, image_dims=(40, 40)):
    ext = np.asarray(vol.extent)
    side = 1.7 * float(ext.max())
    return orbit(
        ext / 2.0, 2.2 * float(ext.max()), az, el,
        Orthographic(side, side), image_dims=image_dims,
    )


def orbit_persp(vol, az, el, image_dims=(40, 40)):
    ext = np.asarray(vol.extent)
    return orbit(
        ext / 2.0, 2.2 * float(ext.max()), az, el,
        Perspective(fov_y=42.0), image_dims=image_dims,
    )


def assert_same_render(brute_fb, brute_stats, fast_fb, fast_stats):
    """Bitwise image identity plus sample-count conservation."""
    np.testing.assert_array_equal(fast_fb.rgba, brute_fb.rgba)
    assert (
        fast_stats["samples_taken"] + fast_stats["samples_skipped"]
        == brute_stats["samples_taken"]
    )
    assert fast_stats["rays_terminated"] == brute_stats["rays_terminated"]


# ---------------------------------------------------------------------------
# presence pyramid


def corner_cells_oracle(field):
    """A cell is occupied when any of its eight corners is nonzero."""
    nz, ny, nx = field.shape
    out = np.zeros((nz - 1, ny - 1, nx - 1), dtype=np.uint8)
    for z, y, x in itertools.product(range(nz - 1), range(ny - 1), range(nx - 1)):
        out[z, y, x] = 1 if np.any(field[z : z + 2, y : y + 2, x : x + 2] != 0) else 0
    return out


def octant_reduce_oracle(level, combine):
    cz, cy, cx = level.shape
    oz, oy, ox = (cz + 1) // 2, (cy + 1) // 2, (cx + 1) // 2
    out = np.empty((oz, oy, ox), dtype=level.dtype)
    for z, y, x in itertools.product(range(oz), range(oy), range(ox)):
        blk = level[2 * z : 2 * z + 2, 2 * y : 2 * y + 2, 2 * x : 2 * x + 2]
        out[z, y, x] = combine(blk)
    return out


def test_presence_base_level_marks_cells_with_any_opacity(rng):
    vol = random_volume(rng, dims=(9, 7, 8))
    pyr = build_presence_pyramid(vol, BAND_TF)
    field = BAND_TF.opacity(
        normalized_for_rendering(vol).data.astype(np.float64)
    ).astype(np.float32)
    np.testing.assert_array_equal(pyr.levels[0], corner_cells_oracle(field))
    assert pyr.source == "opacity"
    assert pyr.tf_fingerprint == BAND_TF.fingerprint()
    assert pyr.cell_dims == (8, 6, 7)
    assert pyr.occupancy() == np.count_nonzero(pyr.levels[0]) / pyr.levels[0].size


def test_presence_levels_nest_by_octant_or(rng):
    vol = random_volume(rng, dims=(9, 6, 5))
    pyr = build_presence_pyramid(vol, BAND_TF)
    for child, parent in zip(pyr.levels, pyr.levels[1:]):
        np.testing.assert_array_equal(
            parent, octant_reduce_oracle(child, lambda blk: 1 if np.any(blk) else 0)
        )
    assert pyr.levels[-1].shape == (1, 1, 1)
    assert pyr.depth == len(pyr.levels) - 1
    assert pyr.nbytes() == sum(lvl.nbytes for lvl in pyr.levels)


def test_presence_density_source_skips_only_zero_density(rng):
    vol = blobby_volume(rng, dims=(11, 9, 10))
    pyr = build_presence_pyramid(vol)
    field = normalized_for_rendering(vol).data
    np.testing.assert_array_equal(pyr.levels[0], corner_cells_oracle(field))
    assert pyr.source == "density"
    assert pyr.tf_fingerprint == ""


def test_presence_packed_table_round_trips(rng):
    vol = random_volume(rng, dims=(7, 8, 6))
    pyr = build_presence_pyramid(vol, BAND_TF)
    flat, meta = pyr.packed()
    assert flat.dtype == np.uint8 and meta.dtype == np.int64
    assert meta.shape == (len(pyr.levels), 4)
    offset = 0
    for row, lvl in zip(meta, pyr.levels):
        assert tuple(row) == (offset, *lvl.shape)
        np.testing.assert_array_equal(
            flat[offset : offset + lvl.size].reshape(lvl.shape), lvl
        )
        offset += lvl.size
    assert offset == flat.size
    assert pyr.packed() is pyr.packed()


# ---------------------------------------------------------------------------
# range pyramid


def minmax_cells_oracle(data):
    nz, ny, nx = data.shape
    mins = np.empty((nz - 1, ny - 1, nx - 1), dtype=np.float32)
    maxes = np.empty_like(mins)
    for z, y, x in itertools.product(range(nz - 1), range(ny - 1), range(nx - 1)):
        blk = data[z : z + 2, y : y + 2, x : x + 2]
        mins[z, y, x] = blk.min()
        maxes[z, y, x] = blk.max()
    return mins, maxes


def test_range_base_level_holds_cell_extrema(rng):
    vol = random_volume(rng, dims=(8, 6, 7))
    pyr = build_range_pyramid(vol)
    mins, maxes = minmax_cells_oracle(normalized_for_rendering(vol).data)
    np.testing.assert_array_equal(pyr.mins[0], mins)
    np.testing.assert_array_equal(pyr.maxes[0], maxes)
    assert pyr.mins[0].dtype == np.float32
    assert pyr.cell_dims == (7, 5, 6)


def test_range_levels_reduce_by_octant_extrema(rng):
    vol = random_volume(rng, dims=(9, 5, 7))
    pyr = build_range_pyramid(vol)
    for child, parent in zip(pyr.mins, pyr.mins[1:]):
        np.testing.assert_array_equal(
            parent, octant_reduce_oracle(child, lambda blk: blk.min())
        )
    for child, parent in zip(pyr.maxes, pyr.maxes[1:]):
        np.testing.assert_array_equal(
            parent, octant_reduce_oracle(child, lambda blk: blk.max())
        )
    assert pyr.mins[-1].shape == (1, 1, 1)
    assert float(pyr.mins[-1][0, 0, 0]) == float(pyr.mins[0].min())
    assert float(pyr.maxes[-1][0, 0, 0]) == float(pyr.maxes[0].max())


# ---------------------------------------------------------------------------
# chamfer distance


def chamfer_oracle(mask):
    """Closed-form 3-4-5 graph distance: over seeds, the cheapest path
    costs 3a + b + c for the sorted absolute offsets a >= b >= c."""
    seeds = np.argwhere(mask)
    if seeds.size == 0:
        return np.full(mask.shape, np.inf)
    pts = np.argwhere(np.ones_like(mask, dtype=bool))
    diff = np.sort(np.abs(pts[:, None, :] - seeds[None, :, :]), axis=2)
    cost = 3 * diff[:, :, 2] + diff[:, :, 1] + diff[:, :, 0]
    return (cost.min(axis=1) / _CHAMFER_SCALE).reshape(mask.shape)


def test_chamfer_matches_closed_form(rng):
    for dims in [(7, 9, 8), (6, 6, 11), (10, 4, 5)]:
        mask = rng.random(dims) < 0.06
        mask.flat[int(rng.integers(mask.size))] = True
        np.testing.assert_array_equal(chamfer_distance(mask), chamfer_oracle(mask))


def test_chamfer_edge_masks(rng):
    mask = rng.random((6, 7, 5)) < 0.1
    mask.flat[0] = True
    d = chamfer_distance(mask)
    np.testing.assert_array_equal(d == 0.0, mask)
    assert np.all(np.isfinite(d))
    assert np.all(np.isinf(chamfer_distance(np.zeros((4, 5, 6), dtype=bool))))
    assert np.all(chamfer_distance(np.ones((4, 5, 6), dtype=bool)) == 0.0)


def test_chamfer_brackets_euclidean_around_single_seed():
    mask = np.zeros((17, 17, 17), dtype=bool)
    mask[8, 8, 8] = True
    d = chamfer_distance(mask)
    zz, yy, xx = np.meshgrid(*(np.arange(17),) * 3, indexing="ij")
    euclid = np.sqrt((zz - 8.0) ** 2 + (yy - 8.0) ** 2 + (xx - 8.0) ** 2)
    off = euclid > 0
    ratio = d[off] / euclid[off]
    assert ratio.min() >= 0.90
    assert ratio.max() <= 1.10


def test_chamfer_is_lipschitz_under_neighbor_steps(rng):
    mask = rng.random((6, 7, 8)) < 0.08
    mask[3, 3, 4] = True
    d = chamfer_distance(mask)
    for off in itertools.product((-1, 0, 1), repeat=3):
        if off == (0, 0, 0):
            continue
        w = (3, 4, 5)[sum(o != 0 for o in off) - 1] / _CHAMFER_SCALE
        sl_a = tuple(
            slice(max(0, o), d.shape[i] + min(0, o)) for i, o in enumerate(off)
        )
        sl_b = tuple(
            slice(max(0, -o), d.shape[i] + min(0, -o)) for i, o in enumerate(off)
        )
        assert np.all(np.abs(d[sl_a] - d[sl_b]) <= w + 1e-12)


def test_distance_map_zeroes_occupied_cells(rng):
    vol = blobby_volume(rng, dims=(12, 10, 11))
    dmap = build_distance_map(vol, BAND_TF)
    field = BAND_TF.opacity(
        normalized_for_rendering(vol).data.astype(np.float64)
    ).astype(np.float32)
    occupied = corner_cells_oracle(field) != 0
    np.testing.assert_array_equal(dmap.grid() == 0.0, occupied)
    assert dmap.dims == (11, 9, 10)
    assert dmap.source == "opacity"
    assert dmap.tf_fingerprint == BAND_TF.fingerprint()
    assert build_distance_map(vol).source == "density"


# ---------------------------------------------------------------------------
# presence and proximity traversal


@pytest.mark.parametrize("traverse", [raycast_presence, raycast_proximity])
def test_skipping_composite_is_bitwise_identical(rng, traverse):
    vol = normalized_for_rendering(make_phantom("sphere", dims=(33, 33, 33)))
    cfg = RayConfig(mode="composite", step=0.8, ert_threshold=0.96)
    cams = [
        axis_camera(vol.extent, "+z", image_dims=(40, 40)),
        orbit_ortho(vol, 33.0, 21.0),
        orbit_persp(vol, -50.0, -35.0),
    ]
    for cam in cams:
        sb, sf = {}, {}
        brute = render(vol, BAND_TF, cam, cfg, stats=sb)
        fast = traverse(vol, BAND_TF, cam, cfg, stats=sf)
        assert_same_render(brute, sb, fast, sf)
        assert sf["samples_skipped"] > 0


@pytest.mark.parametrize("traverse", [raycast_presence, raycast_proximity])
def test_skipping_composite_shaded_is_bitwise_identical(rng, traverse):
    vol = normalized_for_rendering(make_phantom("sphere", dims=(25, 25, 25)))
    cfg = RayConfig(mode="composite", shading=Shading())
    cam = orbit_ortho(vol, 15.0, 40.0, image_dims=(32, 32))
    sb, sf = {}, {}
    brute = render(vol, BAND_TF, cam, cfg, stats=sb)
    fast = traverse(vol, BAND_TF, cam, cfg, stats=sf)
    assert_same_render(brute, sb, fast, sf)
    assert sf["samples_skipped"] > 0


@pytest.mark.parametrize("traverse", [raycast_presence, raycast_proximity])
def test_skipping_mip_is_bitwise_identical(rng, traverse):
    vol = make_phantom("two-spheres", dims=(33, 33, 33))
    cfg = RayConfig(mode="mip")
    for cam in [
        axis_camera(vol.extent, "+x", image_dims=(40, 40)),
        orbit_ortho(vol, 70.0, -25.0),
    ]:
        sb, sf = {}, {}
        brute = render(vol, None, cam, cfg, stats=sb)
        fast = traverse(vol, None, cam, cfg, stats=sf)
        np.testing.assert_array_equal(fast.rgba, brute.rgba)
        assert sf["samples_taken"] + sf["samples_skipped"] == sb["samples_taken"]
        assert sf["samples_skipped"] > 0


@pytest.mark.parametrize(
    "traverse,mode",
    [
        (raycast_presence, "composite"),
        (raycast_presence, "mip"),
        (raycast_proximity, "composite"),
        (raycast_proximity, "mip"),
    ],
)
def test_skipping_matches_brute_on_random_scenes(rng, traverse, mode):
    for trial in range(4):
        dims = tuple(int(d) for d in rng.integers(12, 22, size=3))
        spacing = tuple(float(s) for s in rng.uniform(0.7, 1.4, size=3))
        vol = blobby_volume(rng, dims=dims, spacing=spacing)
        az, el = rng.uniform(-180.0, 180.0), rng.uniform(-85.0, 85.0)
        cam = (orbit_ortho if trial % 2 == 0 else orbit_persp)(
            vol, az, el, image_dims=(28, 28)
        )
        if mode == "composite":
            zero_upto = float(rng.uniform(0.2, 0.45))
            tf = TransferFunction(
                [
                    (0.0, 0.0, 0.0, 0.0, 0.0),
                    (zero_upto, 0.3, 0.1, 0.2, 0.0),
                    (1.0, 0.9, 0.8, 0.2, 0.8),
                ]
            )
            cfg = RayConfig(
                mode="composite",
                step=float(rng.uniform(0.5, 1.3)),
                ert_threshold=float(rng.uniform(0.92, 1.0)),
            )
        else:
            tf = None
            cfg = RayConfig(mode="mip", step=float(rng.uniform(0.5, 1.3)))
        sb, sf = {}, {}
        brute = render(vol, tf, cam, cfg, stats=sb)
        fast = traverse(vol, tf, cam, cfg, stats=sf)
        np.testing.assert_array_equal(fast.rgba, brute.rgba)
        assert sf["samples_taken"] + sf["samples_skipped"] == sb["samples_taken"]


def test_presence_skip_ratio_on_sphere():
    vol = normalized_for_rendering(make_phantom("sphere", dims=(64, 64, 64)))
    cam = axis_camera(vol.extent, "+z", image_dims=(64, 64))
    stats = {}
    raycast_presence(vol, BAND_TF, cam, RayConfig(mode="composite"), stats=stats)
    total = stats["samples_taken"] + stats["samples_skipped"]
    assert stats["samples_skipped"] / total >= 0.40


@pytest.mark.parametrize("traverse", [raycast_presence, raycast_proximity])
def test_skipping_handles_degenerate_volumes(rng, traverse):
    cfg = RayConfig(mode="composite")
    empty = ScalarVolume(np.zeros((12, 12, 12), dtype=np.float32))
    cam = axis_camera(empty.extent, "+z", image_dims=(24, 24))
    sb, sf = {}, {}
    brute = render(empty, BAND_TF, cam, cfg, stats=sb)
    fast = traverse(empty, BAND_TF, cam, cfg, stats=sf)
    assert_same_render(brute, sb, fast, sf)
    assert sf["samples_taken"] == 0
    assert sf["samples_skipped"] == sb["samples_taken"]

    data = np.zeros((17, 17, 17), dtype=np.float32)
    data[8, 8, 8] = 1.0
    lone = ScalarVolume(data)
    cam = orbit_ortho(lone, 25.0, 10.0, image_dims=(24, 24))
    sb, sf = {}, {}
    brute = render(lone, BAND_TF, cam, cfg, stats=sb)
    fast = traverse(lone, BAND_TF, cam, cfg, stats=sf)
    assert_same_render(brute, sb, fast, sf)
    total = sf["samples_taken"] + sf["samples_skipped"]
    assert sf["samples_skipped"] / total >= 0.90


def test_proximity_skips_exactly_what_presence_skips(rng):
    vol = normalized_for_rendering(make_phantom("sphere", dims=(33, 33, 33)))
    cfg = RayConfig(mode="composite", step=0.9, ert_threshold=0.97)
    cam = orbit_ortho(vol, -20.0, 30.0)
    sa, sb = {}, {}
    fa = raycast_presence(vol, BAND_TF, cam, cfg, stats=sa)
    fb = raycast_proximity(vol, BAND_TF, cam, cfg, stats=sb)
    np.testing.assert_array_equal(fa.rgba, fb.rgba)
    assert sa["samples_taken"] == sb["samples_taken"]
    assert sa["samples_skipped"] == sb["samples_skipped"]
    assert sa["rays_terminated"] == sb["rays_terminated"]


def test_skipping_worker_count_does_not_change_output(rng):
    vol = normalized_for_rendering(make_phantom("sphere", dims=(21, 21, 21)))
    cfg = RayConfig(mode="composite", ert_threshold=0.95)
    cam = orbit_ortho(vol, 48.0, -18.0, image_dims=(30, 30))
    for traverse in (raycast_presence, raycast_proximity):
        s1, s3 = {}, {}
        one = traverse(vol, BAND_TF, cam, cfg, workers=1, stats=s1)
        three = traverse(vol, BAND_TF, cam, cfg, workers=3, stats=s3)
        np.testing.assert_array_equal(one.rgba, three.rgba)
        assert s1["samples_taken"] == s3["samples_taken"]
        assert s1["samples_skipped"] == s3["samples_skipped"]
    s1, s3 = {}, {}
    one = raycast_homogeneous(vol, BAND_TF, cam, cfg, workers=1, stats=s1)
    three = raycast_homogeneous(vol, BAND_TF, cam, cfg, workers=3, stats=s3)
    np.testing.assert_array_equal(one.rgba, three.rgba)
    assert s1["samples_taken"] == s3["samples_taken"]


def test_skipping_rejects_mismatched_structures(rng):
    vol = random_volume(rng, dims=(9, 9, 9))
    other = random_volume(rng, dims=(8, 9, 9))
    cam = axis_camera(vol.extent, "+z", image_dims=(8, 8))
    cfg = RayConfig(mode="composite")
    with pytest.raises(ValueError, match="cell dims"):
        raycast_presence(vol, BAND_TF, cam, cfg, build_presence_pyramid(other, BAND_TF))
    with pytest.raises(ValueError, match="needs 'opacity'"):
        raycast_presence(vol, BAND_TF, cam, cfg, build_presence_pyramid(vol))
    other_tf = TransferFunction([(0.0, 0, 0, 0, 0.1), (1.0, 1, 1, 1, 0.9)])
    with pytest.raises(ValueError, match="transfer function"):
        raycast_presence(vol, other_tf, cam, cfg, build_presence_pyramid(vol, BAND_TF))
    with pytest.raises(ValueError, match="needs 'opacity'"):
        raycast_proximity(vol, BAND_TF, cam, cfg, build_distance_map(vol))
    with pytest.raises(ValueError, match="composite or mip"):
        raycast_presence(vol, BAND_TF, cam, RayConfig(mode="xray"))
    with pytest.raises(ValueError, match="workers"):
        raycast_presence(vol, BAND_TF, cam, cfg, workers=0)
    with pytest.raises(ValueError, match="transfer function"):
        raycast_presence(vol, None, cam, cfg)


# ---------------------------------------------------------------------------
# homogeneity shortcut


def test_homogeneous_zero_epsilon_is_bitwise_identical(rng):
    vol = random_volume(rng, dims=(12, 12, 12))
    cfg = RayConfig(mode="composite", ert_threshold=0.97)
    cam = orbit_ortho(vol, 28.0, -33.0, image_dims=(24, 24))
    sb, sf = {}, {}
    brute = render(vol, BAND_TF, cam, cfg, stats=sb)
    fast = raycast_homogeneous(vol, BAND_TF, cam, cfg, epsilon=0.0, stats=sf)
    assert_same_render(brute, sb, fast, sf)
    assert sf["samples_skipped"] == 0


def test_homogeneous_zero_epsilon_skips_constant_cells(rng):
    vol = make_phantom("box", dims=(24, 24, 24))
    cfg = RayConfig(mode="composite")
    for cam in [
        axis_camera(vol.extent, "+y", image_dims=(28, 28)),
        orbit_persp(vol, 40.0, 22.0, image_dims=(28, 28)),
    ]:
        sb, sf = {}, {}
        brute = render(vol, BAND_TF, cam, cfg, stats=sb)
        fast = raycast_homogeneous(vol, BAND_TF, cam, cfg, epsilon=0.0, stats=sf)
        assert_same_render(brute, sb, fast, sf)
        assert sf["samples_skipped"] > 0


def test_homogeneous_constant_volume_needs_no_interpolation(rng):
    vol = ScalarVolume(np.full((10, 10, 10), 0.7, dtype=np.float32))
    cfg = RayConfig(mode="composite")
    cam = axis_camera(vol.extent, "+z", image_dims=(16, 16))
    sb, sf = {}, {}
    brute = render(vol, BAND_TF, cam, cfg, stats=sb)
    fast = raycast_homogeneous(vol, BAND_TF, cam, cfg, epsilon=0.0, stats=sf)
    assert_same_render(brute, sb, fast, sf)
    assert sf["samples_taken"] == 0


def test_homogeneous_tolerance_bounds_opacity_error():
    vol = normalized_for_rendering(make_phantom("sphere", dims=(64, 64, 64)))
    tf = TransferFunction.grayscale_ramp()
    cfg = RayConfig(mode="composite")
    cam = axis_camera(vol.extent, "+z", image_dims=(64, 64))
    eps = 0.05
    stats = {}
    brute = render(vol, tf, cam, cfg)
    fast = raycast_homogeneous(vol, tf, cam, cfg, epsilon=eps, stats=stats)
    # Each substituted sample is off by at most L * eps in opacity and the
    # compositing recursion damps later contributions, so the accumulated
    # channel error stays well inside one L * eps.
    err = float(np.abs(fast.rgba - brute.rgba).max())
    assert err <= tf.opacity_lipschitz() * eps
    total = stats["samples_taken"] + stats["samples_skipped"]
    assert stats["samples_skipped"] / total >= 0.25


def test_homogeneous_rejects_unsupported_configs(rng):
    vol = random_volume(rng, dims=(8, 8, 8))
    cam = axis_camera(vol.extent, "+z", image_dims=(8, 8))
    cfg = RayConfig(mode="composite")
    with pytest.raises(ValueError, match="composite-only"):
        raycast_homogeneous(vol, BAND_TF, cam, RayConfig(mode="mip"))
    with pytest.raises(ValueError, match="unlit"):
        raycast_homogeneous(
            vol, BAND_TF, cam, RayConfig(mode="composite", shading=Shading())
        )
    with pytest.raises(ValueError, match="transfer function"):
        raycast_homogeneous(vol, None, cam, cfg)
    with pytest.raises(ValueError, match="epsilon"):
        raycast_homogeneous(vol, BAND_TF, cam, cfg, epsilon=-0.1)
    with pytest.raises(ValueError, match="cell dims"):
        other = random_volume(rng, dims=(9, 8, 8))
        raycast_homogeneous(vol, BAND_TF, cam, cfg, build_range_pyramid(other))
    with pytest.raises(ValueError, match="workers"):
        raycast_homogeneous(vol, BAND_TF, cam, cfg, workers=0)


# ---------------------------------------------------------------------------
# boundary extraction


def six_scan_oracle(solid):
    """First solid voxel along every axis-parallel scan line, both ways."""
    nz, ny, nx = solid.shape
    seen = set()
    for j in range(ny):
        for k in range(nz):
            xs = [i for i in range(nx) if solid[k, j, i]]
            if xs:
                seen.add((xs[0], j, k))
                seen.add((xs[-1], j, k))
    for i in range(nx):
        for k in range(nz):
            ys = [j for j in range(ny) if solid[k, j, i]]
            if ys:
                seen.add((i, ys[0], k))
                seen.add((i, ys[-1], k))
    for i in range(nx):
        for j in range(ny):
            zs = [k for k in range(nz) if solid[k, j, i]]
            if zs:
                seen.add((i, j, zs[0]))
                seen.add((i, j, zs[-1]))
    return seen


def test_boundary_box_matches_exposed_face_enumeration():
    vol = make_phantom("box", dims=(20, 20, 20))
    boundary = extract_boundary_voxels(vol, threshold=0.5)
    solid = normalized_for_rendering(vol).data.astype(np.float64) >= 0.5
    exposed = set()
    nz, ny, nx = solid.shape
    for k, j, i in np.argwhere(solid):
        for dk, dj, di in [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]:
            kk, jj, ii = k + dk, j + dj, i + di
            outside = not (0 <= kk < nz and 0 <= jj < ny and 0 <= ii < nx)
            if outside or not solid[kk, jj, ii]:
                exposed.add((int(i), int(j), int(k)))
                break
    got = {tuple(int(c) for c in row) for row in boundary.coords}
    assert got == exposed


def test_boundary_matches_scan_line_oracle(rng):
    vol = blobby_volume(rng, dims=(10, 11, 9))
    boundary = extract_boundary_voxels(vol, threshold=0.5)
    solid = normalized_for_rendering(vol).data.astype(np.float64) >= 0.5
    got = {tuple(int(c) for c in row) for row in boundary.coords}
    assert got == six_scan_oracle(solid)
    assert len(got) == len(boundary)
    norm = normalized_for_rendering(vol).data
    for (i, j, k), dens in zip(boundary.coords, boundary.densities):
        assert dens == float(norm[k, j, i])
        assert dens >= 0.5


def test_boundary_sphere_normals_are_radial():
    vol = make_phantom("sphere", dims=(33, 33, 33))
    boundary = extract_boundary_voxels(vol, threshold=0.62)
    sp = np.asarray(boundary.spacing)
    centers = (boundary.coords.astype(np.float64) + 0.5) * sp
    radial = centers - np.asarray(vol.extent) / 2.0
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    cosang = np.sum(boundary.normals * radial, axis=1)
    assert np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))).max() <= 5.0
    assert np.allclose(np.linalg.norm(boundary.normals, axis=1), 1.0)


def test_boundary_flat_field_normals_face_the_scanner():
    vol = ScalarVolume(np.ones((8, 8, 8), dtype=np.float32))
    boundary = extract_boundary_voxels(vol, threshold=0.5)
    lookup = {
        tuple(int(c) for c in row): tuple(boundary.normals[i])
        for i, row in enumerate(boundary.coords)
    }
    assert lookup[(0, 3, 4)] == (-1.0, 0.0, 0.0)
    assert lookup[(7, 3, 4)] == (1.0, 0.0, 0.0)
    assert lookup[(3, 0, 4)] == (0.0, -1.0, 0.0)
    assert lookup[(3, 7, 4)] == (0.0, 1.0, 0.0)
    assert lookup[(3, 4, 0)] == (0.0, 0.0, -1.0)
    assert lookup[(3, 4, 7)] == (0.0, 0.0, 1.0)


def test_boundary_entries_mirror_the_arrays(rng):
    vol = blobby_volume(rng, dims=(8, 8, 8))
    boundary = extract_boundary_voxels(vol)
    rows = boundary.entries()
    assert len(rows) == len(boundary)
    coord, normal, dens = rows[0]
    assert coord == tuple(int(c) for c in boundary.coords[0])
    assert normal == tuple(float(v) for v in boundary.normals[0])
    assert dens == float(boundary.densities[0])


# ---------------------------------------------------------------------------
# point rendering


def test_front_facing_respects_projection():
    cam = look_at((5.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    pts = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    normals = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(front_facing(pts, normals, cam), [True, False])

    persp = look_at((0.0, 0.0, -5.0), (0.0, 0.0, 0.0), projection=Perspective())
    pts = np.array([[0.0, 0.0, -1.0], [3.0, 0.0, -5.0]])
    normals = np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]])
    # The second normal faces away from the forward axis but toward the
    # eye along its own view ray, so perspective culling keeps it.
    np.testing.assert_array_equal(front_facing(pts, normals, persp), [True, True])


def test_render_points_covers_the_raycast_silhouette():
    vol = normalized_for_rendering(make_phantom("sphere", dims=(33, 33, 33)))
    cam = orbit_ortho(vol, 30.0, 25.0, image_dims=(64, 64))
    surf = render(vol, None, cam, RayConfig(mode="iso", iso_threshold=0.62))
    boundary = extract_boundary_voxels(vol, threshold=0.62)
    splat = render_points(boundary, cam)
    a = fb_grid(surf, 3) > 0.0
    b = fb_grid(splat, 3) > 0.0
    inter = np.logical_and(a, b).sum()
    # Splats cover whole voxel cubes, so they must blanket the continuous
    # iso-surface silhouette completely while overshooting it by at most
    # about one voxel of radius.
    assert inter / a.sum() >= 0.99
    assert inter / np.logical_or(a, b).sum() >= 0.85


def test_render_points_culls_back_faces():
    def lone(normal):
        return BoundaryVoxelList(
            coords=np.array([[4, 4, 4]], dtype=np.int32),
            normals=np.array([normal], dtype=np.float64),
            densities=np.array([1.0]),
            spacing=(1.0, 1.0, 1.0),
            dims=(9, 9, 9),
        )

    # The "+z" camera looks along +z, so it sees faces whose normals
    # point back toward -z.
    cam = axis_camera((9.0, 9.0, 9.0), "+z", image_dims=(24, 24))
    facing = render_points(lone((0.0, 0.0, -1.0)), cam)
    away = render_points(lone((0.0, 0.0, 1.0)), cam)
    assert np.any(facing.rgba[:, :, 3] > 0.0)
    assert np.all(away.rgba == 0.0)
    assert np.all(np.isinf(away.depth))


def test_render_points_keeps_the_nearer_splat():
    spacing = (1.0, 1.0, 1.0)
    dims = (9, 9, 9)
    pair = BoundaryVoxelList(
        coords=np.array([[4, 4, 2], [4, 4, 6]], dtype=np.int32),
        normals=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]),
        densities=np.array([1.0, 1.0]),
        spacing=spacing,
        dims=dims,
    )
    vol_extent = (9.0, 9.0, 9.0)
    cam = axis_camera(vol_extent, "-z", image_dims=(9, 9))
    fb = render_points(pair, cam)
    depth = fb.depth[::-1, :]
    hit = np.isfinite(depth)
    assert np.any(hit)
    # Both voxels project onto the same pixels; the camera looks down -z
    # from above, so the z=6 voxel is nearer and owns the depth plane.
    near = np.abs(np.asarray(cam.eye)[2] - 6.5)
    assert np.allclose(depth[hit], near)


def test_render_points_places_a_lone_voxel_at_its_pixel():
    lone = BoundaryVoxelList(
        coords=np.array([[4, 4, 4]], dtype=np.int32),
        normals=np.array([[0.0, 0.0, -1.0]]),
        densities=np.array([1.0]),
        spacing=(1.0, 1.0, 1.0),
        dims=(9, 9, 9),
    )
    cam = axis_camera((9.0, 9.0, 9.0), "+z", image_dims=(9, 9))
    fb = render_points(lone, cam)
    alpha = fb_grid(fb, 3)
    assert alpha[4, 4] > 0.0
    ys, xs = np.nonzero(alpha)
    assert ys.min() >= 3 and ys.max() <= 5
    assert xs.min() >= 3 and xs.max() <= 5


def test_render_points_plane_filter_matches_manual_subset():
    vol = make_phantom("sphere", dims=(25, 25, 25))
    boundary = extract_boundary_voxels(vol, threshold=0.62)
    cam = orbit_ortho(vol, 10.0, 18.0, image_dims=(40, 40))
    center = np.asarray(vol.extent) / 2.0
    plane = (center, (1.0, 0.0, 0.0))
    cut = render_points(boundary, cam, plane=plane)
    sp = np.asarray(boundary.spacing)
    pts = (boundary.coords.astype(np.float64) + 0.5) * sp
    keep = (pts - center) @ np.array([1.0, 0.0, 0.0]) <= 0.0
    manual = BoundaryVoxelList(
        coords=boundary.coords[keep],
        normals=boundary.normals[keep],
        densities=boundary.densities[keep],
        spacing=boundary.spacing,
        dims=boundary.dims,
    )
    np.testing.assert_array_equal(cut.rgba, render_points(manual, cam).rgba)


def test_render_points_paints_the_cross_section_gray():
    vol = normalized_for_rendering(make_phantom("sphere", dims=(25, 25, 25)))
    boundary = extract_boundary_voxels(vol, threshold=0.62)
    center = np.asarray(vol.extent) / 2.0
    cam = orbit_ortho(vol, 95.0, 5.0, image_dims=(48, 48))
    fb = render_points(
        boundary, cam, shading=Shading(), plane=(center, (1.0, 0.0, 0.0)), volume=vol
    )
    rgba = fb.rgba
    gray = (
        (rgba[:, :, 3] > 0.0)
        & (rgba[:, :, 0] == rgba[:, :, 1])
        & (rgba[:, :, 1] == rgba[:, :, 2])
        & (rgba[:, :, 0] < 0.99)
    )
    assert gray.sum() > 20
    with pytest.raises(ValueError, match="normal"):
        render_points(boundary, cam, plane=(center, (0.0, 0.0, 0.0)))
