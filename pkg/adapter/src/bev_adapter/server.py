"""Transports: line-JSON over stdio (primary) and a small HTTP server.

Both answer every request with exactly one response object: ``{"id": I,
"boxes": [...]}`` on success, ``{"id": I, "error": MSG}`` on any failure.
Lines that do not even parse get id null.  Handling is strictly serial;
run several adapters for parallelism.
"""

from __future__ import annotations

import base64
import io
import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .bridge import BridgeError, model_bridge


def _decode_image(entry) -> tuple[str, np.ndarray]:
    if not isinstance(entry, dict):
        raise BridgeError(f"image entry must be an object, got {type(entry).__name__}")
    try:
        camera = str(entry["camera"])
        payload = entry["png_base64"]
    except KeyError as exc:
        raise BridgeError(f"image entry missing {exc} field") from exc
    if not isinstance(payload, str):
        raise BridgeError("png_base64 must be a string")
    try:
        raw = base64.b64decode(payload, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            array = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    except Exception as exc:
        raise BridgeError(f"camera {camera!r} carries an undecodable image: {exc}") from exc
    return camera, array


def _ordered_images(entries, camera_order: Optional[Sequence[str]]) -> list[np.ndarray]:
    decoded = [_decode_image(e) for e in entries]
    if camera_order is None:
        return [img for _, img in decoded]
    by_name = dict(decoded)
    if len(by_name) != len(decoded):
        raise BridgeError("duplicate camera names in request")
    missing = [c for c in camera_order if c not in by_name]
    extra = [c for c in by_name if c not in camera_order]
    if missing or extra:
        raise BridgeError(
            f"camera set mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}"
        )
    return [by_name[c] for c in camera_order]


def handle_request(doc, model, camera_order: Optional[Sequence[str]] = None) -> dict:
    """One parsed request object in, one response object out. Never raises."""
    request_id = doc.get("id") if isinstance(doc, dict) else None
    try:
        if not isinstance(doc, dict):
            raise BridgeError("request must be a JSON object")
        entries = doc.get("images")
        if not isinstance(entries, list) or not entries:
            raise BridgeError("request needs a non-empty images array")
        images = _ordered_images(entries, camera_order)
        boxes = model_bridge(images, model)
        return {"id": request_id, "boxes": boxes}
    except Exception as exc:  # error object instead of a dead process
        return {"id": request_id, "error": f"{type(exc).__name__}: {exc}"}


def handle_line(line: str, model, camera_order: Optional[Sequence[str]] = None) -> Optional[dict]:
    """Raw protocol line in, response object out; blank lines are skipped."""
    if not line.strip():
        return None
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"unparseable request line: {exc}"}
    return handle_request(doc, model, camera_order)


def serve_stdio(model, camera_order: Optional[Sequence[str]] = None,
                stdin=None, stdout=None) -> None:
    """Answer requests line by line until the input stream closes."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        response = handle_line(line, model, camera_order)
        if response is None:
            continue
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self) -> None:  # noqa: N802 (fixed by http.server)
        if self.path != "/detect":
            self.send_error(404, "only POST /detect is served")
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        try:
            doc = json.loads(body)
        except json.JSONDecodeError as exc:
            response = {"id": None, "error": f"unparseable request body: {exc}"}
        else:
            response = handle_request(doc, self.server.model, self.server.camera_order)
        payload = json.dumps(response).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args) -> None:
        print(f"{self.address_string()} {fmt % args}", file=sys.stderr)


def make_http_server(model, camera_order: Optional[Sequence[str]],
                     host: str, port: int) -> HTTPServer:
    server = HTTPServer((host, port), _Handler)
    server.model = model
    server.camera_order = camera_order
    return server


def serve_http(model, camera_order: Optional[Sequence[str]],
               host: str = "127.0.0.1", port: int = 8440) -> None:
    server = make_http_server(model, camera_order, host, port)
    print(f"serving on http://{host}:{server.server_address[1]}/detect", file=sys.stderr)
    try:
        server.serve_forever()
    finally:
        server.server_close()
