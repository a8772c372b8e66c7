from __future__ import annotations

import numpy as np
import pytest

from volren.classify import ClassifiedVolume, Shading, classify_volume, shade_colors
from volren.transfer import TransferFunction
from volren.volume import ScalarVolume, gradient_volume, make_phantom

BUMPY_TF = TransferFunction(
    [(0.0, 0.1, 0.2, 0.3, 0.0), (0.4, 1.0, 0.5, 0.0, 0.8), (1.0, 0.0, 0.0, 1.0, 0.2)]
)


def test_alpha_matches_transfer_function(rng):
    data = rng.random((6, 5, 7), dtype=np.float32)
    vol = ScalarVolume(data)
    cvol = classify_volume(vol, BUMPY_TF)
    want = np.interp(data.astype(np.float64), BUMPY_TF.points[:, 0], BUMPY_TF.points[:, 4])
    assert cvol.alpha.dtype == np.float32
    np.testing.assert_allclose(cvol.alpha, want, atol=1e-7)


def test_unlit_color_matches_transfer_function(rng):
    data = rng.random((4, 4, 4), dtype=np.float32)
    vol = ScalarVolume(data)
    cvol = classify_volume(vol, BUMPY_TF)
    want = BUMPY_TF.color(data.astype(np.float64))
    for c in range(3):
        np.testing.assert_allclose(cvol.channel(c), want[..., c], atol=1e-7)


def test_channels_are_contiguous_volumes():
    vol = make_phantom("sphere", dims=(8, 8, 8))
    cvol = classify_volume(vol, BUMPY_TF)
    assert cvol.color.shape == (3, 8, 8, 8)
    for c in range(3):
        ch = cvol.channel(c)
        assert ch.flags.c_contiguous
        assert ch.shape == cvol.alpha.shape


def test_out_of_range_data_is_normalized_first(rng):
    raw = rng.uniform(-100.0, 300.0, size=(5, 5, 5)).astype(np.float32)
    vol = ScalarVolume(raw)
    cvol = classify_volume(vol, BUMPY_TF)
    lo, hi = vol.value_range
    norm = (raw.astype(np.float64) - lo) / (hi - lo)
    want = np.interp(norm.astype(np.float32).astype(np.float64), BUMPY_TF.points[:, 0], BUMPY_TF.points[:, 4])
    np.testing.assert_allclose(cvol.alpha, want, atol=1e-6)


def test_flat_interior_keeps_unlit_emission():
    # inside the solid box the gradient vanishes; those voxels must keep
    # the raw transfer-function color while surface voxels get dimmed/lit
    vol = make_phantom("box", dims=(16, 16, 16), half=(0.3, 0.3, 0.3))
    sh = Shading(ambient=0.2, diffuse=0.8)
    cvol = classify_volume(vol, BUMPY_TF, sh)
    plain = classify_volume(vol, BUMPY_TF)
    interior = vol.data == 1.0
    # erode by one voxel so only gradient-free voxels remain
    core = interior.copy()
    for axis in range(3):
        core &= np.roll(interior, 1, axis) & np.roll(interior, -1, axis)
    for c in range(3):
        np.testing.assert_array_equal(cvol.channel(c)[core], plain.channel(c)[core])
    # the box face voxels see a gradient, so at least some colors moved
    face = interior & ~core
    assert any(
        not np.array_equal(cvol.channel(c)[face], plain.channel(c)[face]) for c in range(3)
    )


def test_diffuse_term_follows_surface_orientation():
    # light along +x: the high-x side of the sphere points its normal
    # toward the light and must come out brighter than the low-x side.
    # Odd dims put the sphere center exactly on a voxel center so the
    # row through it has axis-aligned gradients.
    vol = make_phantom("sphere", dims=(25, 25, 25))
    sh = Shading(ambient=0.2, diffuse=0.8, light=(1.0, 0.0, 0.0))
    cvol = classify_volume(vol, TransferFunction.grayscale_ramp(), sh)
    plain = classify_volume(vol, TransferFunction.grayscale_ramp())
    k = j = 12
    lit = cvol.channel(0)[k, j, :].astype(np.float64)
    base = plain.channel(0)[k, j, :].astype(np.float64)
    # normal at (18,12,12) is (+1,0,0): full diffuse; at (6,12,12) it
    # faces away from the light: ambient only
    hi_side = lit[18] / base[18]
    lo_side = lit[6] / base[6]
    assert hi_side == pytest.approx(1.0, abs=1e-6)  # 0.2 + 0.8 * 1
    assert lo_side == pytest.approx(0.2, abs=1e-6)


def test_shade_colors_oracle_single_voxel():
    grad = np.array([[0.0, 3.0, -4.0]])
    color = np.array([[1.0, 0.5, 0.25]])
    sh = Shading(ambient=0.1, diffuse=0.9, light=(0.0, -3.0 / 5.0, 4.0 / 5.0))
    out = shade_colors(color, grad, sh)
    # normal = -(0, .6, -.8) = (0, -.6, .8); n . l = .36 + .64 = 1
    np.testing.assert_allclose(out, color * (0.1 + 0.9 * 1.0), rtol=1e-12)


def test_lit_factor_stays_in_ambient_diffuse_band(rng):
    grad = rng.normal(size=(100, 3))
    color = np.ones((100, 3))
    sh = Shading(ambient=0.25, diffuse=0.6)
    out = shade_colors(color, grad, sh)
    assert out.min() >= 0.25 - 1e-12
    assert out.max() <= 0.85 + 1e-12


def test_fingerprint_distinguishes_inputs():
    vol = make_phantom("sphere", dims=(8, 8, 8))
    a = classify_volume(vol, BUMPY_TF)
    b = classify_volume(vol, BUMPY_TF)
    c = classify_volume(vol, TransferFunction.grayscale_ramp())
    d = classify_volume(vol, BUMPY_TF, Shading())
    e = classify_volume(vol, BUMPY_TF, Shading(ambient=0.5))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint
    assert a.fingerprint != d.fingerprint
    assert d.fingerprint != e.fingerprint


def test_nbytes_counts_payload():
    vol = make_phantom("sphere", dims=(8, 8, 8))
    cvol = classify_volume(vol, BUMPY_TF)
    assert cvol.nbytes() == cvol.alpha.nbytes + cvol.color.nbytes


def test_shading_validation():
    with pytest.raises(ValueError):
        Shading(ambient=-0.1)
    with pytest.raises(ValueError):
        Shading(exponent=0.0)
    with pytest.raises(ValueError):
        Shading(light=(0.0, 0.0, 0.0))
    sh = Shading(light=(2.0, 0.0, 0.0))
    assert sh.light == (1.0, 0.0, 0.0)


def test_classified_volume_shape_validation():
    alpha = np.zeros((4, 4, 4), dtype=np.float32)
    with pytest.raises(ValueError):
        ClassifiedVolume(alpha=alpha, color=np.zeros((2, 4, 4, 4), dtype=np.float32), spacing=(1, 1, 1))
    with pytest.raises(ValueError):
        ClassifiedVolume(alpha=alpha.astype(np.float64), color=np.zeros((3, 4, 4, 4), dtype=np.float32), spacing=(1, 1, 1))
