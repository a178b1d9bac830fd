"""Single-worker HTTP service speaking the reinpaint backend wire protocol.

POST /inpaint with JSON {"image": base64 PNG, "mask": base64 PNG, "seed":
uint64} returns {"image": base64 PNG} of the same dimensions. Masks are
8-bit grayscale, 255 = keep / 0 = masked. GET /health reports the loaded
inpainter's name. Errors: 400 for malformed JSON/base64/PNG, 422 for an
image/mask dimension mismatch, 500 with a JSON body when the inpainter
itself fails.

Requests are handled strictly one at a time; that is the documented
capacity contract, and callers bound their in-flight requests accordingly.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import PIL.Image

from .inpainters import INPAINTERS

log = logging.getLogger(__name__)


class ProtocolError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _decode_png(b64_text: str, what: str) -> PIL.Image.Image:
    try:
        raw = base64.b64decode(b64_text, validate=True)
    except (binascii.Error, TypeError) as exc:
        raise ProtocolError(400, f"{what}: invalid base64: {exc}") from exc
    try:
        img = PIL.Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise ProtocolError(400, f"{what}: undecodable PNG: {exc}") from exc
    return img


def _parse_request(body: bytes) -> tuple[np.ndarray, np.ndarray, int]:
    try:
        payload = json.loads(body)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(400, f"malformed JSON body: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError(400, "request body must be a JSON object")
    for field in ("image", "mask"):
        if not isinstance(payload.get(field), str):
            raise ProtocolError(400, f"missing or non-string {field!r} field")
    image_img = _decode_png(payload["image"], "image")
    if image_img.mode == "L":
        image_img = image_img.convert("RGB")
    if image_img.mode != "RGB":
        raise ProtocolError(400, f"image must be 8-bit RGB or grayscale PNG, "
                                 f"got mode {image_img.mode!r}")
    mask_img = _decode_png(payload["mask"], "mask")
    if mask_img.mode != "L":
        raise ProtocolError(400, f"mask must be 8-bit grayscale PNG, "
                                 f"got mode {mask_img.mode!r}")
    image = np.asarray(image_img, dtype=np.uint8)
    keep = np.asarray(mask_img) >= 128
    if image.shape[:2] != keep.shape:
        raise ProtocolError(
            422, f"dimension mismatch: image {image.shape[1]}x{image.shape[0]} "
                 f"vs mask {keep.shape[1]}x{keep.shape[0]}")
    try:
        seed = int(payload.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ProtocolError(400, f"seed must be an integer: {exc}") from exc
    return image, keep, seed


def _encode_png(image: np.ndarray) -> str:
    buf = io.BytesIO()
    PIL.Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class InpaintHandler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.client_address[0], *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send_json(200, {"name": self.server.inpainter_name})
        else:
            self._send_json(404, {"error": f"no such path {self.path!r}"})

    def do_POST(self):
        if self.path != "/inpaint":
            self._send_json(404, {"error": f"no such path {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            image, keep, seed = _parse_request(body)
            result = self.server.inpainter(image, keep, seed)
            result = np.asarray(result, dtype=np.uint8)
            if result.shape != image.shape:
                raise RuntimeError(
                    f"inpainter returned shape {result.shape}, expected {image.shape}")
            self._send_json(200, {"image": _encode_png(result)})
        except ProtocolError as exc:
            self._send_json(exc.status, {"error": str(exc)})
        except Exception as exc:
            log.exception("inpainter failed")
            self._send_json(500, {"error": f"inpainter failed: {exc}"})


def make_server(host: str, port: int, inpainter, name: str) -> HTTPServer:
    """Build the single-worker server; port 0 picks a free port."""
    server = HTTPServer((host, port), InpaintHandler)
    server.inpainter = inpainter
    server.inpainter_name = name
    return server


def serve(host: str, port: int, inpainter, name: str) -> None:
    server = make_server(host, port, inpainter, name)
    log.info("serving inpainter %r on %s:%d", name, *server.server_address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="reinpaint-backend",
        description="Reference inpainting backend speaking the reinpaint protocol")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8642)
    parser.add_argument("--inpainter", choices=sorted(INPAINTERS), default="nearest")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    serve(args.host, args.port, INPAINTERS[args.inpainter], args.inpainter)
    return 0


if __name__ == "__main__":
    sys.exit(main())
