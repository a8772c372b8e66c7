"""Request-driven rendering: volume registry, schema checks, caching, dispatch.

The engine sits between wire-level callers (HTTP service, batch CLI)
and the renderer library.  It resolves volume ids, validates requests
against per-algorithm parameter schemas, builds cameras, reuses derived
structures (classified volumes, spectra, run-length volumes, pyramids,
distance maps) through a size-bounded cache, and normalizes stats.
Identical requests produce byte-identical images.
"""
from __future__ import annotations

import threading
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields as dataclass_fields, is_dataclass
from pathlib import Path

import numpy as np

from .accel import (
    build_average_pyramid,
    build_distance_map,
    build_presence_pyramid,
    build_range_pyramid,
    extract_boundary_voxels,
    raycast_homogeneous,
    raycast_presence,
    raycast_proximity,
    render_points,
)
from .camera import Camera, Orthographic, Perspective, orbit
from .classify import Shading, classify_volume
from .fourier import FILTERS, load_spectrum, precompute_spectrum, save_spectrum
from .fourier import render as render_fourier
from .image import FrameBuffer, png_bytes
from .raycast import RayConfig
from .raycast import render as render_raycast
from .shearwarp import factorize, load_rle, render_shearwarp, rle_encode, save_rle
from .splat import KERNELS, render_splat, render_splat_hierarchical
from .transfer import TransferFunction
from .volume import PHANTOM_KINDS, ScalarVolume, load_volume, make_phantom

DEFAULT_CACHE_MB = 512
DEFAULT_MAX_IMAGE_DIM = 1024
PHANTOM_DIMS = (64, 64, 64)

ALGORITHMS = (
    "composite",
    "mip",
    "lmip",
    "xray",
    "iso",
    "fvr",
    "splat",
    "shearwarp",
    "points",
)

#: Algorithms whose renderers never accept a perspective camera.
ORTHO_ONLY = ("fvr", "shearwarp")

#: Algorithms that classify through a transfer function and therefore
#: fall back to the grayscale ramp when the request does not carry one.
NEEDS_TF = ("composite", "splat", "shearwarp")


class NotFoundError(LookupError):
    """The request names a volume this engine does not have."""


class BadRequestError(ValueError):
    """The request violates the schema or an algorithm precondition."""


# ---------------------------------------------------------------------------
# request schema


def _want_number(name, value, lo=None, hi=None, *, open_lo=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BadRequestError(f"{name} must be a number, got {value!r}")
    v = float(value)
    if not np.isfinite(v):
        raise BadRequestError(f"{name} must be finite, got {value!r}")
    if lo is not None and (v <= lo if open_lo else v < lo):
        raise BadRequestError(f"{name} must be {'>' if open_lo else '>='} {lo}, got {value!r}")
    if hi is not None and v > hi:
        raise BadRequestError(f"{name} must be <= {hi}, got {value!r}")
    return v


def _want_int(name, value, lo=0):
    if isinstance(value, bool) or not isinstance(value, int):
        raise BadRequestError(f"{name} must be an integer, got {value!r}")
    if value < lo:
        raise BadRequestError(f"{name} must be >= {lo}, got {value!r}")
    return value


def _want_bool(name, value):
    if not isinstance(value, bool):
        raise BadRequestError(f"{name} must be a boolean, got {value!r}")
    return value


def _want_choice(name, value, choices):
    if value not in choices:
        raise BadRequestError(f"{name} must be one of {choices}, got {value!r}")
    return value


PARAM_SCHEMA = {
    "composite": {
        "step": lambda v: _want_number("step", v, 0.0, open_lo=True),
        "ert": lambda v: _want_number("ert", v, 0.0, 1.0, open_lo=True),
        "accel": lambda v: _want_choice("accel", v, ("none", "pyramid", "dmap", "range")),
        "epsilon": lambda v: _want_number("epsilon", v, 0.0),
        "shading": lambda v: _want_bool("shading", v),
    },
    "mip": {
        "step": lambda v: _want_number("step", v, 0.0, open_lo=True),
        "accel": lambda v: _want_choice("accel", v, ("none", "pyramid", "dmap")),
    },
    "lmip": {
        "step": lambda v: _want_number("step", v, 0.0, open_lo=True),
        "threshold": lambda v: _want_number("threshold", v, 0.0, 1.0),
    },
    "xray": {
        "step": lambda v: _want_number("step", v, 0.0, open_lo=True),
    },
    "iso": {
        "iso": lambda v: _want_number("iso", v),
        "shading": lambda v: _want_bool("shading", v),
    },
    "fvr": {
        "filter": lambda v: _want_choice("filter", v, FILTERS),
        "lowpass": lambda v: _want_number("lowpass", v, 0.0, open_lo=True),
    },
    "splat": {
        "kernel": lambda v: _want_choice("kernel", v, KERNELS),
        "table_res": lambda v: _want_int("table_res", v, 2),
        "table_sampling": lambda v: _want_choice("table_sampling", v, ("nearest", "bilinear")),
        "level": lambda v: _want_int("level", v, 0),
        "mode": lambda v: _want_choice("mode", v, ("composite", "xray")),
        "shading": lambda v: _want_bool("shading", v),
    },
    "shearwarp": {
        "opaque": lambda v: _want_number("opaque", v, 0.0, 1.0, open_lo=True),
        "shading": lambda v: _want_bool("shading", v),
    },
    "points": {
        "iso": lambda v: _want_number("iso", v),
        "shading": lambda v: _want_bool("shading", v),
    },
}


@dataclass
class CameraSpec:
    """Orbit parametrization of the request camera around the volume center.

    ``distance`` and ``width`` default (when None) to multiples of the
    volume's largest extent so that any volume is fully framed.
    """

    azimuth: float = 30.0
    elevation: float = 20.0
    distance: float | None = None
    projection: str = "orthographic"
    width: float | None = None
    fov_y: float = 45.0


@dataclass
class RenderRequest:
    """One render job: which volume, which algorithm, how to look at it."""

    volume_id: str
    algorithm: str
    camera: CameraSpec = field(default_factory=CameraSpec)
    transfer_function: list | None = None
    algorithm_params: dict = field(default_factory=dict)
    image_dims: tuple = (256, 256)

    @classmethod
    def from_dict(cls, data) -> "RenderRequest":
        if not isinstance(data, dict):
            raise BadRequestError("request body must be an object")
        allowed = {f.name for f in dataclass_fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise BadRequestError(f"unknown request fields: {sorted(unknown)}")
        if "volume_id" not in data or not isinstance(data["volume_id"], str):
            raise BadRequestError("volume_id must be a string")
        algorithm = data.get("algorithm")
        if algorithm not in ALGORITHMS:
            raise BadRequestError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")

        cam_data = data.get("camera", {})
        if not isinstance(cam_data, dict):
            raise BadRequestError("camera must be an object")
        cam_allowed = {f.name for f in dataclass_fields(CameraSpec)}
        cam_unknown = set(cam_data) - cam_allowed
        if cam_unknown:
            raise BadRequestError(f"unknown camera fields: {sorted(cam_unknown)}")
        cam = CameraSpec()
        for name in ("azimuth", "elevation", "fov_y"):
            if name in cam_data:
                setattr(cam, name, _want_number(f"camera.{name}", cam_data[name]))
        for name in ("distance", "width"):
            if cam_data.get(name) is not None:
                setattr(cam, name, _want_number(f"camera.{name}", cam_data[name], 0.0, open_lo=True))
        if "projection" in cam_data:
            cam.projection = _want_choice(
                "camera.projection", cam_data["projection"], ("orthographic", "perspective")
            )

        tf_points = data.get("transfer_function")
        if tf_points is not None:
            if not isinstance(tf_points, list):
                raise BadRequestError("transfer_function must be a list of control points")
            try:
                TransferFunction(tf_points)
            except ValueError as exc:
                raise BadRequestError(f"transfer_function: {exc}") from exc
            tf_points = [[float(c) for c in point] for point in tf_points]

        params = data.get("algorithm_params", {})
        if not isinstance(params, dict):
            raise BadRequestError("algorithm_params must be an object")
        schema = PARAM_SCHEMA[algorithm]
        unknown = set(params) - set(schema)
        if unknown:
            raise BadRequestError(
                f"algorithm_params for {algorithm!r} do not accept {sorted(unknown)}"
            )
        params = {name: schema[name](value) for name, value in params.items()}
        if algorithm == "composite" and "epsilon" in params:
            if params.get("accel") != "range":
                raise BadRequestError("epsilon applies only with accel 'range'")

        dims = data.get("image_dims", (256, 256))
        if (
            not isinstance(dims, (list, tuple))
            or len(dims) != 2
            or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in dims)
        ):
            raise BadRequestError(f"image_dims must be two positive integers, got {dims!r}")

        return cls(
            volume_id=data["volume_id"],
            algorithm=algorithm,
            camera=cam,
            transfer_function=tf_points,
            algorithm_params=params,
            image_dims=(dims[0], dims[1]),
        )

    def to_dict(self) -> dict:
        return {
            "volume_id": self.volume_id,
            "algorithm": self.algorithm,
            "camera": asdict(self.camera),
            "transfer_function": self.transfer_function,
            "algorithm_params": dict(self.algorithm_params),
            "image_dims": list(self.image_dims),
        }


# ---------------------------------------------------------------------------
# derived-structure cache


def _approx_nbytes(obj, _seen=None) -> int:
    """Rough deep byte size: array payloads plus a small per-object floor."""
    if _seen is None:
        _seen = set()
    if id(obj) in _seen:
        return 0
    _seen.add(id(obj))
    if isinstance(obj, np.ndarray):
        return obj.nbytes
    if isinstance(obj, (bytes, bytearray)):
        return len(obj)
    if isinstance(obj, (list, tuple, set, frozenset)):
        return 64 + sum(_approx_nbytes(x, _seen) for x in obj)
    if isinstance(obj, dict):
        return 64 + sum(
            _approx_nbytes(k, _seen) + _approx_nbytes(v, _seen) for k, v in obj.items()
        )
    if is_dataclass(obj) and not isinstance(obj, type):
        return 64 + sum(
            _approx_nbytes(getattr(obj, f.name), _seen) for f in dataclass_fields(obj)
        )
    if hasattr(obj, "__dict__"):
        return 64 + sum(_approx_nbytes(v, _seen) for v in vars(obj).values())
    return 64


class DerivedCache:
    """Byte-size-bounded LRU over whole derived structures.

    Concurrent misses on the same key build once: the first caller
    computes while the rest wait on an event and then re-check.  A
    single structure larger than the capacity is kept until something
    newer displaces it, so oversized volumes still render.
    """

    def __init__(self, capacity_bytes: int):
        self.capacity = int(capacity_bytes)
        self._lock = threading.Lock()
        self._entries: OrderedDict = OrderedDict()
        self._building: dict = {}
        self._total = 0

    @property
    def total_bytes(self) -> int:
        return self._total

    def __len__(self) -> int:
        return len(self._entries)

    def peek(self, key):
        """Value for `key` without promoting it, or None when absent."""
        with self._lock:
            entry = self._entries.get(key)
            return entry[0] if entry is not None else None

    def get_or_build(self, key, build):
        """Return (value, hit) for `key`, computing it at most once."""
        while True:
            with self._lock:
                if key in self._entries:
                    self._entries.move_to_end(key)
                    return self._entries[key][0], True
                event = self._building.get(key)
                if event is None:
                    self._building[key] = threading.Event()
                    break
            event.wait()
        try:
            value = build()
        except BaseException:
            with self._lock:
                self._building.pop(key).set()
            raise
        size = _approx_nbytes(value)
        with self._lock:
            self._entries[key] = (value, size)
            self._total += size
            while self._total > self.capacity and len(self._entries) > 1:
                _, (_, old_size) = self._entries.popitem(last=False)
                self._total -= old_size
            self._building.pop(key).set()
        return value, False


# ---------------------------------------------------------------------------
# engine


class Engine:
    """Shared rendering backend for the HTTP service and the batch CLI."""

    def __init__(
        self,
        volume_dir=None,
        *,
        cache_mb: int = DEFAULT_CACHE_MB,
        workers: int = 1,
        max_image_dim: int = DEFAULT_MAX_IMAGE_DIM,
        disk_cache_dir=None,
    ):
        self.volume_dir = Path(volume_dir) if volume_dir is not None else None
        self.workers = int(workers)
        self.max_image_dim = int(max_image_dim)
        self.cache = DerivedCache(cache_mb * 1024 * 1024)
        self.disk_cache_dir = Path(disk_cache_dir) if disk_cache_dir is not None else None

    # -- registry ----------------------------------------------------------

    def list_volumes(self):
        """All renderable volumes: built-in phantoms plus .rvol files.

        Returns (entries, warnings); unloadable files are excluded and
        named in the warnings.
        """
        entries, warnings = [], []
        for kind in PHANTOM_KINDS:
            vol = self._phantom(kind)
            entries.append(self._entry(f"phantom:{kind}", vol))
        if self.volume_dir is not None and self.volume_dir.is_dir():
            for path in sorted(self.volume_dir.glob("*.rvol")):
                try:
                    vol = self._file_volume(path)
                except Exception as exc:
                    warnings.append(f"{path.name}: {exc}")
                    continue
                entries.append(self._entry(path.stem, vol))
        return entries, warnings

    @staticmethod
    def _entry(vid: str, vol: ScalarVolume) -> dict:
        lo, hi = vol.value_range
        return {
            "id": vid,
            "dims": list(vol.dims),
            "spacing": [float(s) for s in vol.spacing],
            "value_range": [float(lo), float(hi)],
        }

    def _phantom(self, kind: str, counters=None) -> ScalarVolume:
        if kind not in PHANTOM_KINDS:
            raise NotFoundError(f"unknown phantom kind {kind!r}")
        return self._cached(("volume", f"phantom:{kind}"), lambda: make_phantom(kind, PHANTOM_DIMS), counters)

    def _file_volume(self, path: Path, counters=None) -> ScalarVolume:
        st = path.stat()
        key = ("volume", str(path), st.st_mtime_ns, st.st_size)
        return self._cached(key, lambda: load_volume(path), counters)

    def volume(self, volume_id: str, counters=None) -> ScalarVolume:
        """Resolve a volume id; raises NotFoundError when nothing matches."""
        if volume_id.startswith("phantom:"):
            return self._phantom(volume_id.split(":", 1)[1], counters)
        if self.volume_dir is None:
            raise NotFoundError(f"unknown volume id {volume_id!r} (no volume directory configured)")
        path = self.volume_dir / f"{volume_id}.rvol"
        if not path.is_file():
            raise NotFoundError(f"unknown volume id {volume_id!r}")
        try:
            return self._file_volume(path, counters)
        except NotFoundError:
            raise
        except Exception as exc:
            raise NotFoundError(f"volume {volume_id!r} failed to load: {exc}") from exc

    def _cached(self, key, build, counters=None):
        value, hit = self.cache.get_or_build(key, self._disk_backed(key, build))
        if counters is not None:
            counters["cache_hits" if hit else "cache_misses"] += 1
        return value

    _DISK_FORMATS = {
        "spectrum": ("spectrum-{}.rspec", load_spectrum, save_spectrum),
        "rle": ("rle-{}.npz", load_rle, save_rle),
    }

    def _disk_backed(self, key, build):
        """Wrap a builder so heavy precomputations survive process restarts.

        Only structures with a stable serialized form (projection spectra,
        run-length encodings) go to disk; everything else stays in memory.
        """
        if self.disk_cache_dir is None or key[0] not in self._DISK_FORMATS:
            return build
        pattern, load, save = self._DISK_FORMATS[key[0]]
        path = self.disk_cache_dir / pattern.format("-".join(str(p) for p in key[1:]))

        def build_or_read():
            if path.is_file():
                try:
                    return load(path)
                except Exception:
                    pass  # stale or truncated cache file; rebuild below
            value = build()
            try:
                self.disk_cache_dir.mkdir(parents=True, exist_ok=True)
                save(path, value)
            except OSError:
                pass  # caching is best-effort; the render still succeeds
            return value

        return build_or_read

    # -- camera ------------------------------------------------------------

    def _build_camera(self, spec: CameraSpec, vol: ScalarVolume, image_dims, algorithm) -> Camera:
        ext = np.asarray(vol.extent, dtype=np.float64)
        max_ext = float(ext.max())
        distance = spec.distance if spec.distance is not None else 2.4 * max_ext
        w, h = image_dims
        if spec.projection == "perspective":
            if algorithm in ORTHO_ONLY:
                raise BadRequestError(
                    f"algorithm {algorithm!r} supports orthographic cameras only"
                )
            projection = Perspective(spec.fov_y)
        else:
            width = spec.width if spec.width is not None else 1.3 * max_ext
            projection = Orthographic(width, width * h / w)
        return orbit(ext / 2.0, distance, spec.azimuth, spec.elevation, projection, (w, h))

    # -- dispatch ----------------------------------------------------------

    def execute(self, req: RenderRequest):
        """Run one request; returns (framebuffer, stats, warnings)."""
        t_start = time.perf_counter()
        counters = {"cache_hits": 0, "cache_misses": 0}
        warnings: list[str] = []
        w, h = req.image_dims
        if max(w, h) > self.max_image_dim:
            raise BadRequestError(
                f"image_dims {req.image_dims} exceed the maximum {self.max_image_dim}"
            )
        vol = self.volume(req.volume_id, counters)
        cam = self._build_camera(req.camera, vol, req.image_dims, req.algorithm)
        if req.transfer_function is not None:
            tf = TransferFunction(req.transfer_function)
        elif req.algorithm in NEEDS_TF:
            tf = TransferFunction.grayscale_ramp()
            warnings.append("no transfer function given; using the grayscale ramp")
        else:
            tf = None
        try:
            fb, stats = self._dispatch(req.algorithm, dict(req.algorithm_params), vol, tf, cam, counters)
        except (BadRequestError, NotFoundError):
            raise
        except ValueError as exc:
            raise BadRequestError(str(exc)) from exc

        out = {
            "wall_ms": (time.perf_counter() - t_start) * 1000.0,
            "samples_taken": int(stats.get("samples_taken", 0)),
            "samples_skipped": int(stats.get("samples_skipped", 0)),
            "rays_terminated": int(stats.get("rays_terminated", 0)),
        }
        out["samples_total"] = out["samples_taken"] + out["samples_skipped"]
        for key, value in stats.items():
            if key not in out and key != "wall_ms":
                out[key] = value
        out.update(counters)
        return fb, out, warnings

    def render_png(self, req: RenderRequest):
        """Run one request and PNG-encode the frame deterministically."""
        fb, stats, warnings = self.execute(req)
        return png_bytes(fb), stats, warnings

    def _dispatch(self, algo, p, vol, tf, cam, counters):
        stats: dict = {}
        vfp = vol.fingerprint()
        shading = Shading() if p.get("shading") else None

        if algo in ("composite", "mip", "lmip", "xray"):
            cfg = RayConfig(
                mode=algo,
                step=p.get("step", 1.0),
                lmip_threshold=p.get("threshold", 0.5),
                ert_threshold=p.get("ert", 1.0),
                shading=shading,
            )
            accel = p.get("accel", "none")
            classified = None
            if algo == "composite":
                classified = self._cached(
                    ("classified", vfp, tf.fingerprint(), shading is not None),
                    lambda: classify_volume(vol, tf, shading),
                    counters,
                )
            if accel == "none":
                fb = render_raycast(
                    vol, tf, cam, cfg, workers=self.workers, stats=stats, classified=classified
                )
            elif accel == "range":
                pyramid = self._cached(
                    ("range-pyramid", vfp), lambda: build_range_pyramid(vol), counters
                )
                fb = raycast_homogeneous(
                    vol, tf, cam, cfg, pyramid,
                    epsilon=p.get("epsilon", 0.02), workers=self.workers, stats=stats,
                )
            else:
                # Emptiness means zero opacity under the tf for composite
                # and zero density for the integral modes.
                tf_key = tf.fingerprint() if algo == "composite" else None
                tf_build = tf if algo == "composite" else None
                if accel == "pyramid":
                    pyramid = self._cached(
                        ("presence-pyramid", vfp, tf_key),
                        lambda: build_presence_pyramid(vol, tf_build),
                        counters,
                    )
                    fb = raycast_presence(
                        vol, tf, cam, cfg, pyramid,
                        workers=self.workers, stats=stats, classified=classified,
                    )
                else:
                    dmap = self._cached(
                        ("distance-map", vfp, tf_key),
                        lambda: build_distance_map(vol, tf_build),
                        counters,
                    )
                    fb = raycast_proximity(
                        vol, tf, cam, cfg, dmap,
                        workers=self.workers, stats=stats, classified=classified,
                    )
            return fb, stats

        if algo == "iso":
            cfg = RayConfig(
                mode="iso",
                iso_threshold=p.get("iso", 0.5),
                shading=Shading() if p.get("shading", True) else None,
            )
            return render_raycast(vol, tf, cam, cfg, workers=self.workers, stats=stats), stats

        if algo == "fvr":
            spectrum = self._cached(
                ("spectrum", vfp), lambda: precompute_spectrum(vol), counters
            )
            fb = render_fourier(
                spectrum, cam, p.get("filter", "bilinear"), p.get("lowpass"),
                workers=self.workers, stats=stats,
            )
            return fb, stats

        if algo == "splat":
            kwargs = dict(
                mode=p.get("mode", "composite"),
                shading=shading,
                kernel=p.get("kernel", "gaussian"),
                table_res=p.get("table_res", 8),
                table_sampling=p.get("table_sampling", "bilinear"),
                workers=self.workers,
                stats=stats,
            )
            level = p.get("level", 0)
            if level == 0:
                return render_splat(vol, tf, cam, **kwargs), stats
            pyramid = self._cached(
                ("average-pyramid", vfp), lambda: build_average_pyramid(vol), counters
            )
            fb = render_splat_hierarchical(vol, tf, cam, level, pyramid=pyramid, **kwargs)
            return fb, stats

        if algo == "shearwarp":
            rle = self._cached(
                ("rle", vfp, tf.fingerprint()), lambda: rle_encode(vol, tf), counters
            )
            fac = factorize(cam, vol)
            fb = render_shearwarp(
                rle, fac, tf, cam,
                opaque_threshold=p.get("opaque", 0.98),
                shading=shading, workers=self.workers, stats=stats,
            )
            return fb, stats

        if algo == "points":
            iso = float(p.get("iso", 0.5))
            boundary = self._cached(
                ("boundary", vfp, iso), lambda: extract_boundary_voxels(vol, iso), counters
            )
            fb = render_points(
                boundary, cam, shading=Shading() if p.get("shading", True) else None
            )
            return fb, stats

        raise BadRequestError(f"algorithm must be one of {ALGORITHMS}, got {algo!r}")
