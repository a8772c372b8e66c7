"""Command-line interface: subcommands, exit codes, output formats."""

import json

import pytest

from volren.cli import main
from volren.mesh import load_mesh
from volren.transfer import TransferFunction, save_tf
from volren.volume import load_volume


@pytest.fixture()
def sphere_rvol(tmp_path):
    path = tmp_path / "ball.rvol"
    assert main(["phantom", "sphere", "24", str(path)]) == 0
    return path


def test_phantom_writes_loadable_volume(tmp_path, capsys):
    out = tmp_path / "blob.rvol"
    assert main(["phantom", "gaussian-blob", "16", str(out), "--spacing", "1,1,2"]) == 0
    vol = load_volume(out)
    assert vol.dims == (16, 16, 16)
    assert vol.spacing == (1.0, 1.0, 2.0)
    assert str(out) in capsys.readouterr().out


def test_mesh_extracts_obj(sphere_rvol, tmp_path, capsys):
    out = tmp_path / "ball.obj"
    assert main(["mesh", str(sphere_rvol), "--iso", "0", "-o", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("v ")
    mesh = load_mesh(out)
    assert len(mesh.triangles) > 100
    assert "vertices" in capsys.readouterr().out


def test_mesh_accepts_phantom_id(tmp_path):
    out = tmp_path / "direct.obj"
    assert main(["mesh", "phantom:sphere", "--iso", "0", "-o", str(out)]) == 0
    assert out.stat().st_size > 0


def test_render_ppm_deterministic(sphere_rvol, tmp_path):
    a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
    args = ["render", "--volume", str(sphere_rvol), "--algo", "mip", "--dims", "32x32"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    data = a.read_bytes()
    assert data.startswith(b"P6\n32 32\n255\n")
    assert data == b.read_bytes()


def test_render_png_output(sphere_rvol, tmp_path):
    out = tmp_path / "img.png"
    assert main(["render", "--volume", str(sphere_rvol), "--algo", "iso", "--iso", "0",
                 "--dims", "32x32", "-o", str(out)]) == 0
    assert out.read_bytes().startswith(b"\x89PNG")


def test_render_stats_line(sphere_rvol, tmp_path, capsys):
    out = tmp_path / "img.ppm"
    assert main(["render", "--volume", str(sphere_rvol), "--algo", "composite",
                 "--step", "1.0", "--ert", "0.98", "--dims", "32x32",
                 "-o", str(out), "--stats"]) == 0
    stdout = capsys.readouterr().out
    assert "samples_total=" in stdout
    assert "samples_skipped=" in stdout
    assert "rays_terminated=" in stdout


def test_render_with_tf_file(sphere_rvol, tmp_path):
    tf_path = tmp_path / "band.tf"
    save_tf(tf_path, TransferFunction([
        (0.0, 0.0, 0.0, 0.0, 0.0),
        (0.6, 1.0, 0.8, 0.5, 0.7),
        (1.0, 1.0, 1.0, 0.9, 0.9),
    ]))
    out = tmp_path / "img.ppm"
    assert main(["render", "--volume", str(sphere_rvol), "--algo", "composite",
                 "--tf", str(tf_path), "--dims", "32x32", "-o", str(out)]) == 0
    assert out.stat().st_size > 0


def test_render_range_accel_flag(sphere_rvol, tmp_path, capsys):
    out = tmp_path / "img.ppm"
    assert main(["render", "--volume", str(sphere_rvol), "--algo", "composite",
                 "--accel", "range:0.05", "--dims", "32x32",
                 "-o", str(out), "--stats"]) == 0
    stdout = capsys.readouterr().out
    skipped = int(stdout.split("samples_skipped=")[1].split()[0])
    assert skipped > 0


def test_render_disk_cache_flag(tmp_path):
    cache = tmp_path / "cache"
    out = tmp_path / "img.ppm"
    assert main(["render", "--volume", "phantom:gaussian-blob", "--algo", "fvr",
                 "--dims", "32x32", "--cache-dir", str(cache), "-o", str(out)]) == 0
    assert any(p.name.startswith("spectrum-") for p in cache.iterdir())


@pytest.mark.parametrize(
    "args, needle",
    [
        (["render", "--volume", "phantom:sphere", "--dims", "banana", "-o", "x.ppm"],
         "image dims must look like"),
        (["render", "--volume", "nosuch.rvol", "--algo", "mip", "-o", "x.ppm"],
         "unknown volume id"),
        (["render", "--volume", "phantom:gaussian-blob", "--algo", "fvr", "--step", "1.0",
          "-o", "x.ppm"],
         "do not accept"),
        (["render", "--volume", "phantom:sphere", "--algo", "mip", "-o", "x.jpg"],
         "unsupported output format"),
    ],
)
def test_validation_failures_exit_2(args, needle, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(args) == 2
    assert needle in capsys.readouterr().err


def test_missing_required_flag_exits_nonzero(capsys):
    assert main(["render"]) != 0
    assert main([]) != 0


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_bench_quick_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["bench", "--suite", "ert", "--quick", "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    ert = report["suites"]["ert"]
    assert {"speedup", "max_pixel_delta", "sample_reduction"} <= set(ert)
    assert ert["max_pixel_delta"] <= 0.02


def test_bench_stdout(capsys):
    assert main(["bench", "--suite", "accel", "--quick"]) == 0
    report = json.loads(capsys.readouterr().out)
    accel = report["suites"]["accel"]
    assert accel["identical_pyramid"] and accel["identical_dmap"]
