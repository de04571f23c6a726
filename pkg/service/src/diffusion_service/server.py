"""HTTP layer: accepts concurrent connections, serializes model calls.

Endpoints (JSON over HTTP/1.1):
  POST /generate       {image_png_base64, prompt, strength, guidance_scale,
                        seed, request_id[, steps]} -> {image_png_base64,
                        request_id}
  POST /encode-latent  {image_png_base64} -> {latent, shape}
  GET  /health         -> {status, model}

Status codes: 400 malformed request, 404 unknown path, 413 more requests
in flight than the configured batch capacity, 503 backend not ready.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from diffusion_service.backends import BackendNotReady, DiffusionBackend, StubBackend
from diffusion_service.config import DEFAULT_STEPS, ServiceConfig
from diffusion_service.imaging import b64_decode_png, b64_encode_png


class RequestError(ValueError):
    """Client-side problem with a request body."""


class _ServiceState:
    def __init__(self, config: ServiceConfig, backend) -> None:
        self.config = config
        self.backend = backend
        self.inference_lock = threading.Lock()
        self.counter_lock = threading.Lock()
        self.in_flight = 0


def _number(body: dict, field: str, default=None) -> float:
    value = body.get(field, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RequestError(f"{field} must be a number")
    return float(value)


def _require_image(body: dict) -> np.ndarray:
    payload = body.get("image_png_base64")
    if not isinstance(payload, str):
        raise RequestError("image_png_base64 must be a base64 string")
    try:
        return b64_decode_png(payload)
    except Exception as exc:  # noqa: BLE001 - decoding problems are 400s
        raise RequestError("image_png_base64 is not a decodable PNG") from exc


def _parse_generate(body: dict) -> dict:
    pixels = _require_image(body)
    if not isinstance(body.get("prompt"), str):
        raise RequestError("prompt must be a string")
    if not isinstance(body.get("request_id"), str):
        raise RequestError("request_id must be a string")
    strength = _number(body, "strength")
    if not 0.001 <= strength <= 1.0:
        raise RequestError(f"strength {strength} outside [0.001, 1]")
    guidance = _number(body, "guidance_scale", 7.5)
    if guidance <= 0:
        raise RequestError("guidance_scale must be positive")
    seed = body.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise RequestError("seed must be an integer")
    steps = body.get("steps", DEFAULT_STEPS)
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
        raise RequestError("steps must be a positive integer")
    return {
        "pixels": pixels,
        "prompt": body["prompt"],
        "strength": strength,
        "guidance_scale": guidance,
        "seed": seed,
        "steps": steps,
        "request_id": body["request_id"],
    }


class _Handler(BaseHTTPRequestHandler):
    state: _ServiceState

    def log_message(self, fmt, *args):  # keep stdout clean for the CLI
        pass

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length))
        except (ValueError, UnicodeDecodeError) as exc:
            raise RequestError("body is not valid JSON") from exc
        if not isinstance(body, dict):
            raise RequestError("body must be a JSON object")
        return body

    def do_GET(self) -> None:
        if self.path != "/health":
            self._send_json({"error": "not found"}, status=404)
            return
        backend = self.state.backend
        payload = {
            "status": "ready" if backend.ready else "not-ready",
            "model": backend.model_label,
        }
        if not backend.ready:
            payload["detail"] = backend.detail
        self._send_json(payload)

    def do_POST(self) -> None:
        if self.path not in ("/generate", "/encode-latent"):
            self._send_json({"error": "not found"}, status=404)
            return
        try:
            body = self._read_body()
            if self.path == "/generate":
                job = _parse_generate(body)
            else:
                job = {"pixels": _require_image(body)}
        except RequestError as exc:
            self._send_json({"error": str(exc)}, status=400)
            return
        state = self.state
        with state.counter_lock:
            if state.in_flight >= state.config.max_batch:
                self._send_json(
                    {"error": f"batch capacity {state.config.max_batch} exceeded"},
                    status=413,
                )
                return
            state.in_flight += 1
        try:
            with state.inference_lock:
                if self.path == "/generate":
                    out = state.backend.generate(
                        job["pixels"],
                        prompt=job["prompt"],
                        strength=job["strength"],
                        guidance_scale=job["guidance_scale"],
                        seed=job["seed"],
                        steps=job["steps"],
                    )
                    response = {
                        "image_png_base64": b64_encode_png(out),
                        "request_id": job["request_id"],
                    }
                else:
                    latent, shape = state.backend.encode_latent(job["pixels"])
                    response = {"latent": latent.tolist(), "shape": shape}
        except BackendNotReady as exc:
            self._send_json({"error": f"backend not ready: {exc}"}, status=503)
            return
        finally:
            with state.counter_lock:
                state.in_flight -= 1
        self._send_json(response)


class ServiceServer:
    """Threaded HTTP server bound to a backend; context-manager friendly."""

    def __init__(self, config: ServiceConfig, backend, host: str = "127.0.0.1",
                 port: int | None = None) -> None:
        self.state = _ServiceState(config, backend)
        handler = type("BoundHandler", (_Handler,), {"state": self.state})
        bind_port = config.port if port is None else port
        self.httpd = ThreadingHTTPServer((host, bind_port), handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def start(self) -> "ServiceServer":
        self.thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self) -> "ServiceServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(config: ServiceConfig, stub: bool = False, host: str = "127.0.0.1",
          port: int | None = None) -> ServiceServer:
    """Build a server around the configured backend (not yet started)."""
    backend = StubBackend(config) if stub else DiffusionBackend(config)
    return ServiceServer(config, backend, host=host, port=port)


def stub_mode(config: ServiceConfig, host: str = "127.0.0.1",
              port: int | None = None) -> ServiceServer:
    """Hermetic variant: same protocol, no model dependencies."""
    return serve(config, stub=True, host=host, port=port)
