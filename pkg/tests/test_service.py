"""HTTP service: endpoints, error mapping, concurrency, static viewer files."""

import base64
import http.client
import json
import threading
import time

import pytest

from volren.engine import Engine
from volren.service import RenderService, make_server

BAND_TF = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.55, 0.0, 0.0, 0.0, 0.0],
    [0.7, 1.0, 0.8, 0.5, 0.8],
    [1.0, 1.0, 1.0, 0.9, 0.9],
]


def request_body(algo="mip", **over):
    body = {
        "volume_id": "phantom:sphere",
        "algorithm": algo,
        "camera": {"azimuth": 30.0, "elevation": 20.0},
        "image_dims": [48, 48],
    }
    body.update(over)
    return body


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    ui = tmp_path_factory.mktemp("ui")
    (ui / "index.html").write_text("<html>viewer</html>")
    (ui / "app.js").write_text("console.log('hi')")
    (ui / "secret.txt").parent.joinpath("style.css").write_text("body {}")
    srv = make_server(Engine(), port=0, ui_dir=ui)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()
    thread.join(timeout=5)


def http_get(server, path):
    conn = http.client.HTTPConnection("127.0.0.1", server.server_address[1], timeout=30)
    try:
        conn.putrequest("GET", path)
        conn.endheaders()
        resp = conn.getresponse()
        return resp.status, resp.getheader("Content-Type"), resp.read()
    finally:
        conn.close()


def http_post(server, path, payload):
    conn = http.client.HTTPConnection("127.0.0.1", server.server_address[1], timeout=60)
    try:
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        conn.request("POST", path, body, {"Content-Type": "application/json"})
        resp = conn.getresponse()
        return resp.status, json.loads(resp.read())
    finally:
        conn.close()


# -- endpoints -------------------------------------------------------------


def test_volumes_lists_phantoms(server):
    status, ctype, body = http_get(server, "/volumes")
    assert status == 200 and ctype.startswith("application/json")
    payload = json.loads(body)
    ids = [v["id"] for v in payload["volumes"]]
    assert "phantom:sphere" in ids and "phantom:gaussian-blob" in ids
    assert payload["warnings"] == []


def test_render_returns_png_envelope(server):
    status, payload = http_post(server, "/render", request_body())
    assert status == 200
    png = base64.b64decode(payload["image_png_base64"])
    assert png.startswith(b"\x89PNG")
    assert payload["stats"]["wall_ms"] > 0
    assert isinstance(payload["warnings"], list)


def test_render_repeat_is_byte_identical(server):
    body = request_body(algo="composite", transfer_function=BAND_TF)
    _, first = http_post(server, "/render", body)
    _, second = http_post(server, "/render", body)
    assert first["image_png_base64"] == second["image_png_base64"]


def test_second_render_reports_cache_hit(server):
    body = request_body(algo="xray")
    http_post(server, "/render", body)
    _, payload = http_post(server, "/render", body)
    assert payload["stats"]["cache_hits"] >= 1
    assert payload["stats"]["cache_misses"] == 0


def test_root_lists_endpoints(server):
    status, _, body = http_get(server, "/")
    assert status == 200
    assert set(json.loads(body)["endpoints"]) == {"/render", "/volumes", "/ui"}


def test_unknown_path_404(server):
    status, _, _ = http_get(server, "/nope")
    assert status == 404


# -- error mapping ---------------------------------------------------------


def test_invalid_json_400(server):
    status, payload = http_post(server, "/render", b"{not json")
    assert status == 400
    assert payload["error"].startswith("request body is not valid JSON")


def test_schema_violation_400(server):
    status, payload = http_post(server, "/render", request_body(extra_field=1))
    assert status == 400
    assert "unknown request fields" in payload["error"]


def test_unknown_volume_404(server):
    status, payload = http_post(server, "/render", request_body(volume_id="nosuch"))
    assert status == 404
    assert "unknown volume id" in payload["error"]


def test_perspective_fvr_400_names_reason(server):
    body = request_body(
        algo="fvr",
        volume_id="phantom:gaussian-blob",
        camera={"projection": "perspective"},
    )
    status, payload = http_post(server, "/render", body)
    assert status == 400
    assert "orthographic cameras only" in payload["error"]


def test_oversized_dims_400(server):
    status, payload = http_post(server, "/render", request_body(image_dims=[4096, 4096]))
    assert status == 400
    assert "exceed the maximum" in payload["error"]


def test_render_timeout_504():
    service = RenderService(Engine(), timeout_s=0.001)
    try:
        body = json.dumps(request_body(algo="composite", image_dims=[256, 256])).encode()
        status, payload = service.handle_render(body)
        assert status == 504
        assert "timed out" in payload["error"]
    finally:
        service.close()


# -- concurrency -----------------------------------------------------------


def test_interleaved_equals_serial(server):
    bodies = [
        request_body(algo="mip", camera={"azimuth": float(az)}, image_dims=[40, 40])
        for az in (0, 45, 90, 135)
    ]
    serial = [http_post(server, "/render", b)[1]["image_png_base64"] for b in bodies]

    results = [None] * len(bodies)

    def worker(i):
        results[i] = http_post(server, "/render", bodies[i])[1]["image_png_base64"]

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(len(bodies))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == serial


# -- static viewer files ---------------------------------------------------


def test_ui_serves_index(server):
    status, ctype, body = http_get(server, "/ui")
    assert status == 200 and ctype.startswith("text/html")
    assert b"viewer" in body


def test_ui_serves_assets_with_content_type(server):
    status, ctype, _ = http_get(server, "/ui/app.js")
    assert status == 200 and ctype.startswith("text/javascript")
    status, ctype, _ = http_get(server, "/ui/style.css")
    assert status == 200 and ctype.startswith("text/css")


def test_ui_blocks_path_traversal(server):
    status, _, _ = http_get(server, "/ui/../test_service.py")
    assert status == 404
    status, _, _ = http_get(server, "/ui/%2e%2e/secret")
    assert status == 404


def test_ui_missing_file_404(server):
    status, _, _ = http_get(server, "/ui/vanished.js")
    assert status == 404
