"""In-process HTTP stub implementing the generation-service protocol.

Backs /generate with the package surrogate so client conformance tests can
run hermetically.  Failure knobs simulate transport drops, wrong response
dimensions, and request-id mismatches.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from augmentor.codec import GrayImage, image_from_png_bytes, png_bytes
from augmentor.generators import GenRequest, SurrogateGenerator


def nearest_downsample(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = pixels.shape
    rows = np.minimum((np.arange(out_h) * h) // out_h, h - 1)
    cols = np.minimum((np.arange(out_w) * w) // out_w, w - 1)
    return pixels[np.ix_(rows, cols)]


class StubState:
    def __init__(self) -> None:
        self.fail_next = 0          # drop this many connections abruptly
        self.wrong_dims = False     # return an image one row short
        self.bad_request_id = False # echo a corrupted id
        self.lock = threading.Lock()
        self.requests_served = 0


class _Handler(BaseHTTPRequestHandler):
    state: StubState
    generator = SurrogateGenerator()

    def log_message(self, fmt, *args):  # silence test output
        pass

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        return json.loads(self.rfile.read(length))

    def do_GET(self) -> None:
        if self.path == "/health":
            self._send_json({"status": "ready", "model": "stub-surrogate"})
        else:
            self._send_json({"error": "not found"}, status=404)

    def do_POST(self) -> None:
        with self.state.lock:
            if self.state.fail_next > 0:
                self.state.fail_next -= 1
                # abrupt close -> client sees a transport error
                self.connection.close()
                return
        if self.path == "/generate":
            self._handle_generate()
        elif self.path == "/encode-latent":
            self._handle_encode_latent()
        else:
            self._send_json({"error": "not found"}, status=404)

    def _handle_generate(self) -> None:
        body = self._read_json()
        image = image_from_png_bytes(base64.b64decode(body["image_png_base64"]))
        req = GenRequest(
            image=image,
            prompt=body["prompt"],
            strength=float(body["strength"]),
            seed=int(body["seed"]),
            guidance_scale=float(body["guidance_scale"]),
        )
        out = self.generator.generate(req).image
        pixels = out.pixels
        if self.state.wrong_dims:
            pixels = pixels[:-1] if pixels.shape[0] > 1 else np.vstack([pixels, pixels])
        request_id = body["request_id"]
        if self.state.bad_request_id:
            request_id = request_id + "-corrupt"
        with self.state.lock:
            self.state.requests_served += 1
        self._send_json(
            {
                "image_png_base64": base64.b64encode(png_bytes(GrayImage(pixels))).decode("ascii"),
                "request_id": request_id,
            }
        )

    def _handle_encode_latent(self) -> None:
        body = self._read_json()
        image = image_from_png_bytes(base64.b64decode(body["image_png_base64"]))
        latent = nearest_downsample(image.pixels, 4, 8)
        self._send_json({"latent": latent.ravel().tolist(), "shape": [1, 4, 8]})


class StubServer:
    """Context manager running the stub on an ephemeral localhost port."""

    def __init__(self) -> None:
        self.state = StubState()
        handler = type("BoundHandler", (_Handler,), {"state": self.state})
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
