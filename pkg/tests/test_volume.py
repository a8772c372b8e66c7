from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volren.volume import (
    ScalarVolume,
    load_volume,
    save_volume,
    normalize,
    normalized_for_rendering,
    make_phantom,
    gradient_volume,
)

from conftest import random_volume


def test_dims_and_extent():
    vol = ScalarVolume(np.zeros((4, 3, 2), dtype=np.float32), (1.0, 2.0, 0.5))
    assert vol.dims == (2, 3, 4)
    assert vol.extent == (2.0, 6.0, 2.0)


def test_flat_buffer_is_x_fastest():
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    vol = ScalarVolume(data)
    flat = vol.data.ravel()
    # incrementing x moves one element, incrementing z moves a whole slice
    assert flat[1] == vol.data[0, 0, 1]
    assert flat[12] == vol.data[1, 0, 0]


def test_rvol_round_trip(tmp_path, rng):
    vol = random_volume(rng, dims=(5, 4, 3), spacing=(0.5, 1.25, 2.0))
    p = tmp_path / "vol.rvol"
    save_volume(p, vol)
    back = load_volume(p)
    assert back.dims == vol.dims
    assert back.spacing == vol.spacing
    assert np.array_equal(back.data, vol.data)


def test_rvol_header_layout(tmp_path):
    vol = ScalarVolume(np.zeros((2, 2, 2), dtype=np.float32), (1.0, 1.0, 1.0))
    p = tmp_path / "v.rvol"
    save_volume(p, vol)
    raw = p.read_bytes()
    header, _, payload = raw.partition(b"\n")
    assert header.split()[0] == b"RVOL1"
    assert len(payload) == 8 * 4


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XVOL " + b[5:],
        lambda b: b[: len(b) - 4],
        lambda b: b.replace(b"RVOL1 2 2 2", b"RVOL1 0 2 2"),
        lambda b: b.replace(b"1.0 1.0 1.0", b"1.0 -1.0 1.0"),
        lambda b: b + b"\x00\x00\x00\x00",
    ],
)
def test_rvol_rejects_corrupt_files(tmp_path, mutate):
    vol = ScalarVolume(np.zeros((2, 2, 2), dtype=np.float32))
    p = tmp_path / "v.rvol"
    save_volume(p, vol)
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ValueError):
        load_volume(p)


def test_normalize_constant_volume_is_all_zero():
    vol = ScalarVolume(np.full((3, 3, 3), 7.5, dtype=np.float32))
    out = normalize(vol)
    assert np.array_equal(out.data, np.zeros_like(out.data))


@given(lo=st.floats(-100, 100), span=st.floats(0.01, 200))
def test_normalize_range_and_idempotence(lo, span):
    rng = np.random.default_rng(7)
    data = rng.uniform(lo, lo + span, size=(4, 4, 4)).astype(np.float32)
    vol = ScalarVolume(data)
    out = normalize(vol)
    lo2, hi2 = out.value_range
    assert lo2 == pytest.approx(0.0, abs=1e-6)
    assert hi2 == pytest.approx(1.0, abs=1e-6)
    again = normalize(out)
    assert np.allclose(again.data, out.data, atol=1e-6)


def test_normalized_for_rendering_passthrough():
    data = np.linspace(0.1, 0.9, 27, dtype=np.float32).reshape(3, 3, 3)
    vol = ScalarVolume(data)
    assert normalized_for_rendering(vol) is vol
    shifted = ScalarVolume(data + 1.0)
    out = normalized_for_rendering(shifted)
    assert out is not shifted
    assert out.value_range == (0.0, 1.0)


def test_fingerprint_tracks_content(rng):
    vol = random_volume(rng, dims=(4, 4, 4))
    fp1 = vol.fingerprint()
    other = ScalarVolume(vol.data.copy(), vol.spacing)
    assert other.fingerprint() == fp1
    mutated = vol.data.copy()
    mutated[0, 0, 0] += 1.0
    assert ScalarVolume(mutated, vol.spacing).fingerprint() != fp1
    respaced = ScalarVolume(vol.data.copy(), (2.0, 1.0, 1.0))
    assert respaced.fingerprint() != fp1


def test_sphere_phantom_zero_on_surface():
    vol = make_phantom("sphere", dims=(32, 32, 32))
    ext = np.array(vol.extent)
    center = ext / 2
    radius = 0.3 * ext.min()
    # value at center equals the radius, sign flips across the surface
    mid = vol.data[16, 16, 16]
    assert mid == pytest.approx(radius, abs=1.0)
    X = (np.arange(32) + 0.5) * vol.spacing[0]
    vals = vol.data[16, 16, :]
    dist = np.abs(X - center[0])
    inside = dist < radius - 1.0
    outside = dist > radius + 1.0
    assert np.all(vals[inside] > 0)
    assert np.all(vals[outside] < 0)


def test_two_spheres_phantom_densities():
    vol = make_phantom("two-spheres", dims=(64, 64, 64))
    vals = np.unique(vol.data)
    assert np.allclose(vals, [0.0, 0.6, 0.9], atol=1e-7)
    # the 0.6 sphere sits at low z (near a viewer looking along +z)
    z_of_06 = np.nonzero(vol.data == np.float32(0.6))[0]
    z_of_09 = np.nonzero(vol.data == np.float32(0.9))[0]
    assert z_of_06.max() < z_of_09.min()


def test_box_phantom_is_binary_with_expected_count():
    vol = make_phantom("box", dims=(32, 32, 32), half=(0.25, 0.25, 0.25))
    inside = int((vol.data == 1.0).sum())
    # half-extent 8 voxels around center 16: centers with |i+0.5-16|<=8 -> 16 per axis
    assert inside == 16**3
    assert set(np.unique(vol.data)) == {0.0, 1.0}


def test_gaussian_blob_peak_at_center():
    vol = make_phantom("gaussian-blob", dims=(33, 33, 33))
    assert vol.data.max() == vol.data[16, 16, 16]
    assert vol.data.max() <= 1.0


def test_phantom_rejects_unknown_kind_and_params():
    with pytest.raises(ValueError):
        make_phantom("torus")
    with pytest.raises(TypeError):
        make_phantom("sphere", wobble=3)


def test_gradient_of_linear_field_is_exact():
    nx, ny, nz = 6, 5, 4
    dx, dy, dz = 0.5, 1.0, 2.0
    x = (np.arange(nx) + 0.5) * dx
    y = (np.arange(ny) + 0.5) * dy
    z = (np.arange(nz) + 0.5) * dz
    Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
    field = 2.0 * X - 3.0 * Y + 0.25 * Z
    vol = ScalarVolume(field.astype(np.float32), (dx, dy, dz))
    g = gradient_volume(vol)
    assert np.allclose(g[..., 0], 2.0, atol=1e-5)
    assert np.allclose(g[..., 1], -3.0, atol=1e-5)
    assert np.allclose(g[..., 2], 0.25, atol=1e-5)


def test_gradient_boundary_is_one_sided():
    # quadratic in x: interior central difference is exact for x^2,
    # the boundary one-sided difference is off by exactly dx
    nx = 8
    x = (np.arange(nx) + 0.5).astype(np.float64)
    field = np.broadcast_to(x**2, (2, 2, nx)).copy()
    vol = ScalarVolume(field.astype(np.float32))
    g = gradient_volume(vol)
    assert np.allclose(g[0, 0, 1:-1, 0], 2.0 * x[1:-1], atol=1e-4)
    assert g[0, 0, 0, 0] == pytest.approx(x[1] ** 2 - x[0] ** 2, abs=1e-4)
    assert g[0, 0, -1, 0] == pytest.approx(x[-1] ** 2 - x[-2] ** 2, abs=1e-4)
