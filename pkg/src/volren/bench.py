"""Timed measurements for the performance-sensitive paths, as JSON-ready dicts.

Each suite renders real images and reports wall times alongside the
correctness checks that make the numbers meaningful (byte-identity, pixel
deltas, sample counts). The ``backends`` suite launches one subprocess per
backend because kernel bindings are frozen when the package is imported.
"""

from __future__ import annotations

import json
import os
import platform
import subprocess
import sys
import time

import numpy as np

from . import backend
from .accel import (
    build_distance_map,
    build_presence_pyramid,
    raycast_presence,
    raycast_proximity,
)
from .camera import Orthographic, axis_camera, orbit
from .fourier import precompute_spectrum
from .fourier import render as render_fourier
from .raycast import RayConfig
from .raycast import render as render_rays
from .transfer import TransferFunction
from .volume import make_phantom

SUITES = ("ert", "fvr", "accel", "backends")

# Opacity climbs to near-saturation just inside the sphere boundary, so
# opaque-threshold termination has plenty of rays to cut short.
_DENSE_TF = [
    (0.0, 0.0, 0.0, 0.0, 0.0),
    (0.55, 0.1, 0.2, 0.5, 0.0),
    (0.7, 0.9, 0.85, 0.6, 0.95),
    (1.0, 1.0, 1.0, 0.9, 0.98),
]

# Uniform half-opacity interior: rays saturate a handful of samples past the
# front face, while the tau=1 baseline marches the full depth without ever
# reaching float saturation (0.5^44 stays above the rounding floor).
_OPAQUE_CORE_TF = [
    (0.0, 0.0, 0.0, 0.0, 0.0),
    (0.4, 0.0, 0.0, 0.0, 0.0),
    (0.6, 1.0, 0.9, 0.7, 0.5),
    (1.0, 1.0, 1.0, 0.9, 0.5),
]


def _best_of(repeats, fn):
    """Call fn() repeats times, return (best wall ms, last result)."""
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, (time.perf_counter() - t0) * 1000.0)
    return best, result


def bench_ert(*, workers: int = 1, quick: bool = False) -> dict:
    """Early ray termination: image delta and sample reduction at tau 0.98."""
    n = 32 if quick else 64
    side = 48 if quick else 128
    vol = make_phantom("box", (n, n, n))
    tf = TransferFunction(_OPAQUE_CORE_TF)
    cam = orbit(
        np.asarray(vol.extent) / 2.0, 2.4 * max(vol.extent), 0.0, 0.0,
        Orthographic(0.6 * max(vol.extent), 0.6 * max(vol.extent)), (side, side),
    )
    cfg_off = RayConfig(mode="composite", step=1.0, ert_threshold=1.0)
    cfg_on = RayConfig(mode="composite", step=1.0, ert_threshold=0.98)

    def run(cfg):
        stats = {}
        fb = render_rays(vol, tf, cam, cfg, workers=workers, stats=stats)
        return fb, stats

    run(cfg_off)  # warm-up covers one-time compilation
    wall_off, (fb_off, st_off) = _best_of(3, lambda: run(cfg_off))
    wall_on, (fb_on, st_on) = _best_of(3, lambda: run(cfg_on))
    delta = float(np.abs(fb_on.rgba - fb_off.rgba).max())
    return {
        "volume": f"box {n}^3",
        "image": [side, side],
        "wall_ms_ert_off": wall_off,
        "wall_ms_ert_on": wall_on,
        "speedup": wall_off / wall_on,
        "max_pixel_delta": delta,
        "samples_ert_off": int(st_off["samples_taken"]),
        "samples_ert_on": int(st_on["samples_taken"]),
        "sample_reduction": st_off["samples_taken"] / max(1, st_on["samples_taken"]),
        "rays_terminated": int(st_on["rays_terminated"]),
    }


def bench_fvr(*, quick: bool = False) -> dict:
    """Frequency-domain rendering: time scaling across two lattice sizes.

    Volumes pad to twice their edge, so 32^3 and 64^3 sources give 64 and
    128 frequency lattices. Per view the cost is the slice resample plus a
    2D inverse transform, N^2 log N overall.
    """
    v0, v1 = (16, 32) if quick else (32, 64)
    specs = {}
    for v in (v0, v1):
        vol = make_phantom("gaussian-blob", (v, v, v))
        specs[v] = precompute_spectrum(vol)
    n0, n1 = specs[v0].n, specs[v1].n

    def run(v):
        spec = specs[v]
        cam = axis_camera((float(v), float(v), float(v)), "+z", image_dims=(spec.n, spec.n))
        return render_fourier(spec, cam, filt="sinc4")

    run(v0)
    wall0, _ = _best_of(3, lambda: run(v0))
    wall1, _ = _best_of(3, lambda: run(v1))
    expected = (n1 * n1 * np.log2(n1)) / (n0 * n0 * np.log2(n0))
    return {
        "lattices": [n0, n1],
        "wall_ms_small": wall0,
        "wall_ms_large": wall1,
        "time_ratio": wall1 / wall0,
        "expected_ratio": float(expected),
    }


def bench_accel(*, workers: int = 1, quick: bool = False) -> dict:
    """Empty-space skipping: wall time, skip fraction, and byte-identity."""
    n = 32 if quick else 64
    side = 48 if quick else 96
    vol = make_phantom("sphere", (n, n, n))
    tf = TransferFunction(_DENSE_TF)
    cam = orbit(
        np.asarray(vol.extent) / 2.0, 2.4 * max(vol.extent), 30.0, 20.0,
        Orthographic(1.3 * max(vol.extent), 1.3 * max(vol.extent)), (side, side),
    )
    cfg = RayConfig(mode="composite", step=1.0, ert_threshold=1.0)
    pyramid = build_presence_pyramid(vol, tf)
    dmap = build_distance_map(vol, tf)

    def brute():
        stats = {}
        return render_rays(vol, tf, cam, cfg, workers=workers, stats=stats), stats

    def with_pyramid():
        stats = {}
        return raycast_presence(vol, tf, cam, cfg, pyramid, workers=workers, stats=stats), stats

    def with_dmap():
        stats = {}
        return raycast_proximity(vol, tf, cam, cfg, dmap, workers=workers, stats=stats), stats

    brute(); with_pyramid(); with_dmap()  # warm-up
    wall_b, (fb_b, _) = _best_of(3, brute)
    wall_p, (fb_p, st_p) = _best_of(3, with_pyramid)
    wall_d, (fb_d, st_d) = _best_of(3, with_dmap)

    def skip_fraction(st):
        total = st["samples_taken"] + st["samples_skipped"]
        return st["samples_skipped"] / max(1, total)

    return {
        "volume": f"sphere {n}^3",
        "image": [side, side],
        "wall_ms_brute": wall_b,
        "wall_ms_pyramid": wall_p,
        "wall_ms_dmap": wall_d,
        "skip_fraction_pyramid": skip_fraction(st_p),
        "skip_fraction_dmap": skip_fraction(st_d),
        "identical_pyramid": bool(np.array_equal(fb_b.rgba, fb_p.rgba)),
        "identical_dmap": bool(np.array_equal(fb_b.rgba, fb_d.rgba)),
    }


# Run inside a fresh interpreter so the requested backend is what the kernel
# bindings actually resolve to. Prints one JSON line on success.
_BACKEND_PROBE = """
import hashlib, json, sys, time
import numpy as np
from volren import backend
from volren.camera import Orthographic, orbit
from volren.raycast import RayConfig, render
from volren.transfer import TransferFunction
from volren.volume import make_phantom

n, side = int(sys.argv[1]), int(sys.argv[2])
vol = make_phantom("sphere", (n, n, n))
tf = TransferFunction({tf_points!r})
cam = orbit(
    np.asarray(vol.extent) / 2.0, 2.4 * max(vol.extent), 30.0, 20.0,
    Orthographic(1.3 * max(vol.extent), 1.3 * max(vol.extent)), (side, side),
)
cfg = RayConfig(mode="composite", step=1.0, ert_threshold=0.98)
render(vol, tf, cam, cfg)
t0 = time.perf_counter()
fb = render(vol, tf, cam, cfg)
wall = (time.perf_counter() - t0) * 1000.0
print(json.dumps({{
    "backend": backend.ACTIVE,
    "wall_ms": wall,
    "digest": hashlib.sha1(fb.rgba.tobytes()).hexdigest(),
}}))
"""


def _numba_available() -> bool:
    import importlib.util

    return importlib.util.find_spec("numba") is not None


def bench_backends(*, quick: bool = False) -> dict:
    """Compiled vs pure-numpy kernels: speed ratio and image digests."""
    n = 24 if quick else 48
    side = 32 if quick else 64
    script = _BACKEND_PROBE.format(tf_points=_DENSE_TF)
    report = {
        "volume": f"sphere {n}^3",
        "image": [side, side],
        "available": {"numpy": True, "numba": _numba_available()},
        "runs": {},
    }
    for name in ("numpy", "numba"):
        if not report["available"][name]:
            continue
        env = dict(os.environ, VOLREN_BACKEND=name)
        proc = subprocess.run(
            [sys.executable, "-c", script, str(n), str(side)],
            env=env, capture_output=True, text=True, timeout=600,
        )
        if proc.returncode != 0:
            report["runs"][name] = {"error": proc.stderr.strip()[-500:]}
            continue
        report["runs"][name] = json.loads(proc.stdout.strip().splitlines()[-1])
    runs = report["runs"]
    if "numpy" in runs and "numba" in runs and "error" not in runs["numpy"] and "error" not in runs["numba"]:
        report["speedup_numba_over_numpy"] = runs["numpy"]["wall_ms"] / runs["numba"]["wall_ms"]
        report["images_identical"] = runs["numpy"]["digest"] == runs["numba"]["digest"]
    return report


def run_suites(suite: str = "all", *, workers: int = 1, quick: bool = False) -> dict:
    """Run one suite (or all) and return the full report."""
    wanted = SUITES if suite == "all" else (suite,)
    unknown = set(wanted) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown bench suite {sorted(unknown)}; choose from {SUITES}")
    report = {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "backend": backend.ACTIVE,
        "workers": workers,
        "quick": quick,
        "suites": {},
    }
    for name in wanted:
        if name == "ert":
            report["suites"][name] = bench_ert(workers=workers, quick=quick)
        elif name == "fvr":
            report["suites"][name] = bench_fvr(quick=quick)
        elif name == "accel":
            report["suites"][name] = bench_accel(workers=workers, quick=quick)
        elif name == "backends":
            report["suites"][name] = bench_backends(quick=quick)
    return report
