"""HTTP rendering service: POST /render, GET /volumes, static /ui.

A thin stateless wire layer over :class:`volren.engine.Engine`.  Request
bodies and responses are UTF-8 JSON; rendered frames travel inside the
response envelope as base64 PNG bytes.  Requests are handled
concurrently (one thread per connection) while renders run on a shared
bounded pool with a server-side timeout; all shared state lives in the
engine's synchronized cache, so interleaved requests cannot interfere.
"""
from __future__ import annotations

import base64
import json
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as RenderTimeout
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np

from .engine import BadRequestError, Engine, NotFoundError, RenderRequest

DEFAULT_TIMEOUT_S = 30.0
MAX_BODY_BYTES = 4 << 20

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


class RenderService:
    """Request handling split out from the HTTP plumbing for testability."""

    def __init__(
        self,
        engine: Engine,
        *,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        ui_dir=None,
        max_parallel: int = 4,
    ):
        self.engine = engine
        self.timeout_s = float(timeout_s)
        self.ui_dir = Path(ui_dir) if ui_dir is not None else None
        self._pool = ThreadPoolExecutor(max_workers=max_parallel)

    def close(self):
        self._pool.shutdown(wait=False, cancel_futures=True)

    def handle_volumes(self):
        entries, warnings = self.engine.list_volumes()
        return 200, {"volumes": entries, "warnings": warnings}

    def handle_render(self, body: bytes):
        try:
            data = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return 400, {"error": f"request body is not valid JSON: {exc}"}
        try:
            req = RenderRequest.from_dict(data)
        except BadRequestError as exc:
            return 400, {"error": str(exc)}
        # A timed-out render keeps running on its pool thread until done
        # (threads cannot be killed); the client just stops waiting.
        future = self._pool.submit(self.engine.render_png, req)
        try:
            png, stats, warnings = future.result(timeout=self.timeout_s)
        except RenderTimeout:
            return 504, {"error": f"render timed out after {self.timeout_s:g} s"}
        except BadRequestError as exc:
            return 400, {"error": str(exc)}
        except NotFoundError as exc:
            return 404, {"error": str(exc)}
        return 200, {
            "image_png_base64": base64.b64encode(png).decode("ascii"),
            "stats": stats,
            "warnings": warnings,
        }

    def handle_static(self, path: str):
        """Serve a file under /ui from the configured viewer directory."""
        if self.ui_dir is None or not self.ui_dir.is_dir():
            return 404, None, {"error": "no viewer assets configured"}
        rel = path[len("/ui") :].lstrip("/") or "index.html"
        root = self.ui_dir.resolve()
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            return 404, None, {"error": "not found"}
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return 404, None, {"error": f"no such asset {rel!r}"}
        ctype = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        return 200, ctype, target.read_bytes()


class _Handler(BaseHTTPRequestHandler):
    server_version = "volren-service"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    @property
    def service(self) -> RenderService:
        return self.server.service

    def _send_json(self, status: int, payload: dict):
        body = json.dumps(payload, default=_json_default).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, ctype: str, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = urlsplit(self.path).path
        if path == "/volumes":
            status, payload = self.service.handle_volumes()
            self._send_json(status, payload)
        elif path == "/ui" or path.startswith("/ui/"):
            status, ctype, body = self.service.handle_static(path)
            if status == 200:
                self._send_bytes(status, ctype, body)
            else:
                self._send_json(status, body)
        elif path == "/":
            self._send_json(200, {"endpoints": ["/render", "/volumes", "/ui"]})
        else:
            self._send_json(404, {"error": f"no such endpoint {path!r}"})

    def do_POST(self):
        path = urlsplit(self.path).path
        if path != "/render":
            self._send_json(404, {"error": f"no such endpoint {path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if length < 0 or length > MAX_BODY_BYTES:
            self._send_json(400, {"error": "missing or oversized request body"})
            return
        body = self.rfile.read(length)
        status, payload = self.service.handle_render(body)
        self._send_json(status, payload)


class VolrenServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: RenderService):
        super().__init__(address, _Handler)
        self.service = service

    def server_close(self):
        super().server_close()
        self.service.close()


def make_server(
    engine: Engine,
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    ui_dir=None,
    max_parallel: int = 4,
) -> VolrenServer:
    """Build a ready-to-run server; port 0 picks a free port."""
    service = RenderService(
        engine, timeout_s=timeout_s, ui_dir=ui_dir, max_parallel=max_parallel
    )
    return VolrenServer((host, port), service)
