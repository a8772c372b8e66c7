from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from volren.backend import ACTIVE, select_kernels
from volren.classify import classify_volume
from volren.transfer import TransferFunction
from volren.volume import make_phantom

from conftest import random_volume

np_ray = select_kernels("raycast", "numpy")
np_samp = select_kernels("sample", "numpy")
try:
    nb_ray = select_kernels("raycast", "numba")
    nb_samp = select_kernels("sample", "numba")
except ImportError:
    nb_ray = nb_samp = None

needs_numba = pytest.mark.skipif(nb_ray is None, reason="numba is not installed")

TF = TransferFunction(
    [(0.0, 0.9, 0.1, 0.4, 0.0), (0.5, 0.2, 0.8, 0.6, 0.7), (1.0, 0.5, 0.5, 0.0, 0.3)]
)


def scattered_rays(rng, n, extent):
    ext = np.asarray(extent, dtype=np.float64)
    origins = rng.uniform(-0.4, 1.4, size=(n, 3)) * ext
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins, dirs


def test_active_backend_is_known():
    assert ACTIVE in ("numba", "numpy")


def test_backend_env_forces_numpy():
    code = "import volren.backend as b; print(b.ACTIVE)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={**os.environ, "VOLREN_BACKEND": "numpy"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_backend_env_rejects_unknown_value():
    out = subprocess.run(
        [sys.executable, "-c", "import volren.backend"],
        env={**os.environ, "VOLREN_BACKEND": "cuda"},
        capture_output=True,
        text=True,
    )
    assert out.returncode != 0
    assert "VOLREN_BACKEND" in out.stderr


def test_select_kernels_rejects_unknown_backend():
    with pytest.raises(KeyError):
        select_kernels("raycast", "fortran")


@needs_numba
def test_trilinear_backends_agree_bitwise(rng):
    vol = random_volume(rng, dims=(7, 6, 5), spacing=(0.7, 1.2, 0.9), lo=-1.0, hi=2.0)
    pts = rng.uniform(-0.3, 1.3, size=(500, 3)) * np.asarray(vol.extent)
    a = np_samp.trilinear_batch(vol.data, *vol.spacing, pts)
    b = nb_samp.trilinear_batch(vol.data, *vol.spacing, pts)
    np.testing.assert_array_equal(a, b)


@needs_numba
def test_clip_backends_agree_bitwise(rng):
    vol = random_volume(rng, dims=(9, 6, 7), spacing=(0.9, 1.0, 1.1))
    origins, dirs = scattered_rays(rng, 300, vol.extent)
    # include axis-parallel rays to cover the zero-component branch
    dirs[:40] = np.eye(3)[rng.integers(0, 3, size=40)]
    ex, ey, ez = vol.extent
    a0, a1 = np_ray.clip_block(origins, dirs, ex, ey, ez)
    b0, b1 = nb_ray.clip_block(origins, dirs, ex, ey, ez)
    np.testing.assert_array_equal(a0, b0)
    np.testing.assert_array_equal(a1, b1)


@needs_numba
@pytest.mark.parametrize("mode", [0, 1, 2])
def test_integral_backends_agree_bitwise(rng, mode):
    vol = random_volume(rng, dims=(10, 9, 8))
    origins, dirs = scattered_rays(rng, 200, vol.extent)
    args = (vol.data, *vol.spacing, origins, dirs, 0.77, mode, 0.5)
    av, asmp = np_ray.integral_block(*args)
    bv, bsmp = nb_ray.integral_block(*args)
    np.testing.assert_array_equal(av, bv)
    np.testing.assert_array_equal(asmp, bsmp)


@needs_numba
@pytest.mark.parametrize("ratio,ert", [(1.0, 1.0), (0.37, 0.9)])
def test_composite_backends_agree_bitwise(rng, ratio, ert):
    vol = make_phantom("sphere", dims=(20, 24, 18))
    cvol = classify_volume(vol, TF)
    origins, dirs = scattered_rays(rng, 200, vol.extent)
    args = (
        cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
        *cvol.spacing, origins, dirs, ratio * 1.0, ratio, ert,
    )
    argb, aacc, asmp, aterm = np_ray.composite_block(*args)
    brgb, bacc, bsmp, bterm = nb_ray.composite_block(*args)
    np.testing.assert_array_equal(argb, brgb)
    np.testing.assert_array_equal(aacc, bacc)
    np.testing.assert_array_equal(asmp, bsmp)
    np.testing.assert_array_equal(aterm, bterm)


@needs_numba
@pytest.mark.parametrize("shaded", [0, 1])
def test_first_hit_backends_agree_bitwise(rng, shaded):
    vol = make_phantom("gaussian-blob", dims=(16, 16, 16))
    origins, dirs = scattered_rays(rng, 200, vol.extent)
    l = np.array([1.0, 2.0, -2.0]) / 3.0
    args = (
        vol.data, *vol.spacing, origins, dirs, 0.5, 0.6,
        0.9, 0.7, 0.3, shaded, 0.25, 0.55, 0.2, 12.0, l[0], l[1], l[2],
    )
    argba, adep, asmp = np_ray.first_hit_block(*args)
    brgba, bdep, bsmp = nb_ray.first_hit_block(*args)
    np.testing.assert_array_equal(argba, brgba)
    np.testing.assert_array_equal(adep, bdep)
    np.testing.assert_array_equal(asmp, bsmp)


np_accel = select_kernels("accel", "numpy")
try:
    nb_accel = select_kernels("accel", "numba")
except ImportError:
    nb_accel = None

needs_numba_accel = pytest.mark.skipif(nb_accel is None, reason="numba is not installed")


def _sparse_phantom():
    vol = make_phantom("two-spheres", dims=(18, 20, 16))
    cvol = classify_volume(vol, TF)
    return vol, cvol


@needs_numba_accel
def test_presence_composite_backends_agree_bitwise(rng):
    from volren.accel import build_presence_pyramid

    vol, cvol = _sparse_phantom()
    flat, meta = build_presence_pyramid(vol, TF).packed()
    origins, dirs = scattered_rays(rng, 150, vol.extent)
    args = (
        cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
        *cvol.spacing, origins, dirs, 0.8, 0.8, 0.95, flat, meta,
    )
    for a, b in zip(np_accel.presence_composite_block(*args),
                    nb_accel.presence_composite_block(*args)):
        np.testing.assert_array_equal(a, b)


@needs_numba_accel
def test_presence_mip_backends_agree_bitwise(rng):
    from volren.accel import build_presence_pyramid
    from volren.volume import normalized_for_rendering

    vol, _ = _sparse_phantom()
    norm = normalized_for_rendering(vol)
    flat, meta = build_presence_pyramid(vol).packed()
    origins, dirs = scattered_rays(rng, 150, vol.extent)
    args = (norm.data, *norm.spacing, origins, dirs, 0.7, flat, meta)
    for a, b in zip(np_accel.presence_mip_block(*args),
                    nb_accel.presence_mip_block(*args)):
        np.testing.assert_array_equal(a, b)


@needs_numba_accel
def test_proximity_composite_backends_agree_bitwise(rng):
    from volren.accel import _EUCLID_FACTOR, build_distance_map

    vol, cvol = _sparse_phantom()
    clearance = np.ascontiguousarray(build_distance_map(vol, TF).grid() * _EUCLID_FACTOR)
    origins, dirs = scattered_rays(rng, 150, vol.extent)
    args = (
        cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
        *cvol.spacing, origins, dirs, 0.8, 0.8, 0.95, clearance,
    )
    for a, b in zip(np_accel.proximity_composite_block(*args),
                    nb_accel.proximity_composite_block(*args)):
        np.testing.assert_array_equal(a, b)


@needs_numba_accel
def test_proximity_mip_backends_agree_bitwise(rng):
    from volren.accel import _EUCLID_FACTOR, build_distance_map
    from volren.volume import normalized_for_rendering

    vol, _ = _sparse_phantom()
    norm = normalized_for_rendering(vol)
    clearance = np.ascontiguousarray(build_distance_map(vol).grid() * _EUCLID_FACTOR)
    origins, dirs = scattered_rays(rng, 150, vol.extent)
    args = (norm.data, *norm.spacing, origins, dirs, 0.7, clearance)
    for a, b in zip(np_accel.proximity_mip_block(*args),
                    nb_accel.proximity_mip_block(*args)):
        np.testing.assert_array_equal(a, b)


@needs_numba_accel
def test_homog_composite_backends_agree_bitwise(rng):
    from volren.accel import build_range_pyramid

    vol = make_phantom("box", dims=(18, 18, 18))
    cvol = classify_volume(vol, TF)
    pyr = build_range_pyramid(vol)
    mn = pyr.mins[0].astype(np.float64)
    mx = pyr.maxes[0].astype(np.float64)
    homog = np.ascontiguousarray(((mx - mn) <= 0.05).astype(np.uint8))
    vmid = (mn + mx) / 2.0
    a_mid = np.ascontiguousarray(TF.opacity(vmid).astype(np.float32))
    cols = TF.color(vmid)
    mids = tuple(np.ascontiguousarray(cols[..., c], dtype=np.float32) for c in range(3))
    origins, dirs = scattered_rays(rng, 150, vol.extent)
    args = (
        cvol.alpha, cvol.channel(0), cvol.channel(1), cvol.channel(2),
        *cvol.spacing, origins, dirs, 0.9, 0.9, 0.97, homog, a_mid, *mids,
    )
    for a, b in zip(np_accel.homog_composite_block(*args),
                    nb_accel.homog_composite_block(*args)):
        np.testing.assert_array_equal(a, b)


np_splat = select_kernels("splat", "numpy")
try:
    nb_splat = select_kernels("splat", "numba")
except ImportError:
    nb_splat = None

needs_numba_splat = pytest.mark.skipif(nb_splat is None, reason="numba is not installed")


@needs_numba_splat
@pytest.mark.parametrize("axis,use_color", [(0, 1), (1, 1), (2, 1), (0, 0)])
def test_splat_rows_backends_agree_bitwise(rng, axis, use_color):
    from volren.camera import Orthographic, orbit
    from volren.splat import build_generic_footprint, view_transform_footprint

    vals = rng.uniform(0.0, 1.0, (8, 7, 6)).astype(np.float32)
    reds = rng.uniform(0.0, 1.0, (8, 7, 6)).astype(np.float32)
    greens = rng.uniform(0.0, 1.0, (8, 7, 6)).astype(np.float32)
    blues = rng.uniform(0.0, 1.0, (8, 7, 6)).astype(np.float32)
    view = view_transform_footprint(
        build_generic_footprint("gaussian", 8),
        orbit((4.0, 4.0, 4.0), 30.0, 33.0, 21.0, Orthographic(12.0, 12.0), (20, 18)),
        spacing=(1.1, 0.9, 1.3),
    )
    mx, my = view.center
    ex, ey = view.extent
    rows = {0: 7, 1: 8, 2: 8}[axis]
    args = (
        vals, reds, greens, blues, use_color, axis, 2, 0, rows,
        3.3, 2.1, 0.83, 0.12, -0.07, 0.91,
        view.weights, mx, my, view.resolution, ex, ey, 0.25, 20, 18,
    )
    for a, b in zip(np_splat.splat_rows_block(*args), nb_splat.splat_rows_block(*args)):
        np.testing.assert_array_equal(a, b)


np_shearwarp = select_kernels("shearwarp", "numpy")
try:
    nb_shearwarp = select_kernels("shearwarp", "numba")
except ImportError:
    nb_shearwarp = None

needs_numba_shearwarp = pytest.mark.skipif(
    nb_shearwarp is None, reason="numba is not installed"
)


@needs_numba_shearwarp
@pytest.mark.parametrize("opaque_threshold", [0.98, 1.0])
def test_shearwarp_composite_rows_backends_agree_bitwise(opaque_threshold):
    import math

    from volren.camera import Orthographic, orbit
    from volren.shearwarp import factorize, rle_encode
    from volren.transfer import TransferFunction
    from volren.volume import make_phantom

    vol = make_phantom("sphere", (20, 18, 16))
    tf = TransferFunction(
        [(0.0, 0, 0, 0, 0.0), (0.5, 0.9, 0.6, 0.3, 0.6), (1.0, 1, 1, 0.9, 0.75)]
    )
    rle = rle_encode(vol, tf)
    center = np.asarray(vol.extent) / 2.0
    cam = orbit(center, 60.0, 35.0, 20.0, Orthographic(28.0, 28.0), (24, 24))
    fac = factorize(cam, vol)
    ax = rle.axis(fac.major_axis)
    alpha = ax.alpha.astype(np.float64)
    red = ax.red.astype(np.float64)
    green = ax.green.astype(np.float64)
    blue = ax.blue.astype(np.float64)
    bw, bh = fac.base_dims

    results = []
    for impl in (np_shearwarp, nb_shearwarp):
        planes = [np.zeros((bh, bw)) for _ in range(4)]
        links = np.tile(np.arange(bw + 1, dtype=np.int32), (bh, 1))
        count = 0
        for m in range(fac.n_slices):
            k = fac.k_front + m * fac.step
            su = fac.shear_u * m + fac.trans_u
            sv = fac.shear_v * m + fac.trans_v
            ioff, joff = int(math.ceil(su)), int(math.ceil(sv))
            count += impl.composite_rows(
                ax.starts, ax.lens, ax.pays, ax.row_ptr,
                alpha, red, green, blue,
                k, ax.nj, ax.ni, ioff, joff, ioff - su, joff - sv,
                0, bh, planes[0], planes[1], planes[2], planes[3],
                links, opaque_threshold,
            )
        # Path compression rewrites links differently per backend; the
        # set of opaque pixels they encode must still agree.
        opaque = links[:, :bw] != np.arange(bw, dtype=np.int32)
        results.append((planes, count, opaque))

    (planes_a, count_a, opaque_a), (planes_b, count_b, opaque_b) = results
    assert count_a == count_b
    np.testing.assert_array_equal(opaque_a, opaque_b)
    for a, b in zip(planes_a, planes_b):
        np.testing.assert_array_equal(a, b)
