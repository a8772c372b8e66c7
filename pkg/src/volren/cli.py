"""Command-line interface: batch rendering, meshing, phantoms, serving, benchmarks.

The ``render`` subcommand mirrors the HTTP request schema flag for flag, so a
batch invocation and a service call validate and render identically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import (
    ALGORITHMS,
    DEFAULT_CACHE_MB,
    BadRequestError,
    Engine,
    NotFoundError,
    RenderRequest,
)
from .fourier import FILTERS
from .image import write_png, write_ppm
from .isosurface import extract_surface
from .mesh import save_mesh
from .splat import KERNELS
from .transfer import load_tf
from .volume import PHANTOM_KINDS, load_volume, make_phantom, save_volume


def _parse_dims(text: str) -> list[int]:
    try:
        w, h = text.lower().split("x")
        return [int(w), int(h)]
    except ValueError:
        raise ValueError(f"image dims must look like WIDTHxHEIGHT, got {text!r}") from None


def _parse_spacing(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"spacing must be three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _resolve_volume(value: str, volume_dir):
    """Accept either a registry id or a direct path to a .rvol file."""
    if not value.startswith("phantom:") and value.endswith(".rvol"):
        path = Path(value)
        return path.parent, path.stem
    return volume_dir, value


def _collect_params(args) -> dict:
    """Turn explicitly passed flags into the algorithm_params mapping.

    Flags the user did not pass stay out of the mapping, so each algorithm's
    schema sees only what was actually requested and can reject mismatches.
    """
    params = {}
    direct = {
        "step": args.step,
        "ert": args.ert,
        "iso": args.iso,
        "threshold": args.lmip,
        "filter": args.filter,
        "lowpass": args.lowpass,
        "kernel": args.kernel,
        "table_res": args.table_res,
        "table_sampling": args.table_sampling,
        "level": args.level,
        "mode": args.splat_mode,
        "opaque": args.opaque,
        "shading": args.shading,
    }
    for key, value in direct.items():
        if value is not None:
            params[key] = value
    if args.accel is not None:
        if args.accel.startswith("range:"):
            params["accel"] = "range"
            params["epsilon"] = float(args.accel.split(":", 1)[1])
        elif args.accel == "range":
            params["accel"] = "range"
        else:
            params["accel"] = args.accel
    return params


def _cmd_render(args) -> int:
    volume_dir, volume_id = _resolve_volume(args.volume, args.dir)
    engine = Engine(
        volume_dir,
        cache_mb=args.cache_mb,
        workers=args.workers,
        disk_cache_dir=args.cache_dir,
    )
    camera = {"azimuth": args.az, "elevation": args.el}
    if args.dist is not None:
        camera["distance"] = args.dist
    if args.ortho_width is not None:
        camera["width"] = args.ortho_width
    if args.perspective:
        camera["projection"] = "perspective"
        camera["fov_y"] = args.fov
    request = {
        "volume_id": volume_id,
        "algorithm": args.algo,
        "camera": camera,
        "algorithm_params": _collect_params(args),
        "image_dims": _parse_dims(args.dims),
    }
    if args.tf is not None:
        request["transfer_function"] = load_tf(args.tf).points.tolist()
    fb, stats, warnings = engine.execute(RenderRequest.from_dict(request))
    for note in warnings:
        print(f"warning: {note}", file=sys.stderr)

    out = Path(args.out)
    suffix = out.suffix.lower()
    if suffix == ".png":
        write_png(out, fb)
    elif suffix == ".ppm":
        write_ppm(out, fb)
    else:
        raise ValueError(f"unsupported output format {suffix!r} (use .ppm or .png)")
    if args.stats:
        print(
            "samples_total={samples_total} samples_skipped={samples_skipped} "
            "rays_terminated={rays_terminated} wall_ms={wall_ms:.2f}".format(**stats)
        )
    return 0


def _cmd_mesh(args) -> int:
    if args.input.startswith("phantom:"):
        vol = make_phantom(args.input.split(":", 1)[1])
    else:
        vol = load_volume(args.input)
    mesh = extract_surface(vol, args.iso, workers=args.workers, streaming=args.streaming)
    save_mesh(args.out, mesh)
    print(f"{len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles -> {args.out}")
    return 0


def _cmd_phantom(args) -> int:
    dims = (args.size, args.size, args.size)
    spacing = _parse_spacing(args.spacing) if args.spacing else (1.0, 1.0, 1.0)
    vol = make_phantom(args.kind, dims, spacing)
    save_volume(args.out, vol)
    print(f"{args.kind} {dims[0]}x{dims[1]}x{dims[2]} -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import make_server

    volume_dir = args.dir if args.dir is not None else os.environ.get("RVOL_DIR")
    engine = Engine(
        volume_dir,
        cache_mb=args.cache_mb,
        workers=args.workers,
        disk_cache_dir=args.cache_dir,
    )
    ui_dir = args.ui
    if ui_dir is None:
        candidate = Path("frontend") / "dist"
        if candidate.is_dir():
            ui_dir = candidate
    server = make_server(
        engine,
        host=args.host,
        port=args.port,
        timeout_s=args.timeout,
        ui_dir=ui_dir,
        max_parallel=args.parallel,
    )
    host, port = server.server_address[:2]
    where = volume_dir if volume_dir else "phantoms only"
    print(f"serving on http://{host}:{port}/ (volumes: {where})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_bench(args) -> int:
    from . import bench

    report = bench.run_suites(args.suite, workers=args.workers, quick=args.quick)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report -> {args.out}")
    else:
        print(text)
    return 0


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=1, help="worker threads per render")
    p.add_argument("--cache-mb", type=int, default=DEFAULT_CACHE_MB, help="in-memory cache budget")
    p.add_argument("--cache-dir", default=None, help="directory for on-disk spectrum/RLE caches")
    p.add_argument("--dir", default=None, help="directory holding .rvol volumes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volren", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    render = sub.add_parser("render", help="render one image from a volume")
    render.add_argument("--volume", "-v", required=True, help="registry id (phantom:sphere, name) or path to a .rvol file")
    render.add_argument("--algo", choices=ALGORITHMS, default="composite")
    render.add_argument("--dims", default="256x256", help="image size as WIDTHxHEIGHT")
    render.add_argument("--az", type=float, default=30.0, help="camera azimuth in degrees")
    render.add_argument("--el", type=float, default=20.0, help="camera elevation in degrees")
    render.add_argument("--dist", type=float, default=None, help="camera distance (default frames the volume)")
    render.add_argument("--ortho-width", type=float, default=None, help="orthographic view width in world units")
    render.add_argument("--perspective", action="store_true", help="use a perspective camera")
    render.add_argument("--fov", type=float, default=45.0, help="vertical field of view for --perspective")
    render.add_argument("--tf", default=None, help="transfer function file")
    render.add_argument("--step", type=float, default=None, help="ray sampling step in voxel units")
    render.add_argument("--ert", type=float, default=None, help="early termination opacity threshold")
    render.add_argument("--iso", type=float, default=None, help="isosurface threshold")
    render.add_argument("--lmip", type=float, default=None, help="local-maximum threshold")
    render.add_argument("--accel", default=None, help="none | pyramid | dmap | range:<epsilon>")
    render.add_argument("--filter", choices=FILTERS, default=None, help="frequency-slice interpolation filter")
    render.add_argument("--lowpass", type=float, default=None, help="frequency-domain lowpass cutoff")
    render.add_argument("--kernel", choices=KERNELS, default=None, help="splat footprint kernel")
    render.add_argument("--table-res", type=int, default=None, help="footprint table resolution")
    render.add_argument("--table-sampling", choices=("nearest", "bilinear"), default=None)
    render.add_argument("--level", type=int, default=None, help="pyramid level for hierarchical splatting")
    render.add_argument("--splat-mode", choices=("composite", "xray"), default=None)
    render.add_argument("--opaque", type=float, default=None, help="opacity threshold for run skipping")
    render.add_argument("--shading", action=argparse.BooleanOptionalAction, default=None)
    render.add_argument("--out", "-o", required=True, help="output image path (.ppm or .png)")
    render.add_argument("--stats", action="store_true", help="print sample counters after rendering")
    _add_engine_flags(render)
    render.set_defaults(func=_cmd_render)

    mesh = sub.add_parser("mesh", help="extract an isosurface mesh as OBJ")
    mesh.add_argument("input", help="volume file or phantom:<kind>")
    mesh.add_argument("--iso", type=float, default=0.5, help="surface threshold")
    mesh.add_argument("--out", "-o", required=True, help="output .obj path")
    mesh.add_argument("--streaming", action="store_true", help="process one slab at a time")
    mesh.add_argument("--workers", type=int, default=1)
    mesh.set_defaults(func=_cmd_mesh)

    phantom = sub.add_parser("phantom", help="write a synthetic test volume")
    phantom.add_argument("kind", choices=PHANTOM_KINDS)
    phantom.add_argument("size", type=int, help="cubic edge length in voxels")
    phantom.add_argument("out", help="output .rvol path")
    phantom.add_argument("--spacing", default=None, help="voxel spacing as sx,sy,sz")
    phantom.set_defaults(func=_cmd_phantom)

    serve = sub.add_parser("serve", help="run the HTTP rendering service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--timeout", type=float, default=30.0, help="per-render timeout in seconds")
    serve.add_argument("--parallel", type=int, default=4, help="concurrent renders")
    serve.add_argument("--ui", default=None, help="directory of viewer assets served under /ui")
    _add_engine_flags(serve)
    serve.set_defaults(func=_cmd_serve)

    bench = sub.add_parser("bench", help="run performance measurements, report as JSON")
    bench.add_argument("--suite", choices=("ert", "fvr", "accel", "backends", "all"), default="all")
    bench.add_argument("--out", "-o", default=None, help="write the report here instead of stdout")
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--quick", action="store_true", help="smaller volumes, faster run")
    bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (BadRequestError, NotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
