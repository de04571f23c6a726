"""Candidate-image generation: seeded in-process surrogate and HTTP client.

The surrogate blends the input with moment-matched column noise so that
downstream filtering sees realistic accept/reject structure without any
model weights.  The remote client speaks the JSON-over-HTTP protocol of
the companion generation service and never resizes images.
"""

from __future__ import annotations

import base64
import math
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from augmentor.codec import GrayImage, image_from_png_bytes, png_bytes

# strengths below this return the input untouched, making k->0 testable
IDENTITY_BYPASS = 0.002

DEFAULT_GUIDANCE = 7.5


class RemoteGeneratorError(RuntimeError):
    """Base class for remote-backend failures."""


class GeneratorUnreachableError(RemoteGeneratorError):
    """Transport failure or timeout after all retries."""


class MalformedResponseError(RemoteGeneratorError):
    """Response is not the documented JSON shape or echoes the wrong id."""


class DimensionMismatchError(RemoteGeneratorError):
    """Returned image dimensions differ from the request image."""


@dataclass
class GenRequest:
    image: GrayImage
    prompt: str
    strength: float
    seed: int
    guidance_scale: float = DEFAULT_GUIDANCE

    def __post_init__(self) -> None:
        if not 0.001 <= self.strength <= 1.0:
            raise ValueError(f"strength {self.strength} outside [0.001, 1]")
        if self.guidance_scale <= 0:
            raise ValueError("guidance_scale must be positive")


@dataclass
class GenResult:
    image: GrayImage
    backend: str
    request_echo: GenRequest


def strength_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid from start by step, rounded to 1e-9."""
    if not (0.0 < start <= stop <= 1.0):
        raise ValueError("need 0 < start <= stop <= 1")
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(math.floor((stop - start) / step + 0.5)) + 1
    values = [round(start + i * step, 9) for i in range(count)]
    values = [v for v in values if v <= stop + step / 2]
    if not values:
        raise ValueError("empty strength grid")
    return values


def _smooth_columns(field: np.ndarray) -> np.ndarray:
    """3x1 vertical moving average; edge rows average available neighbors."""
    n = field.shape[0]
    if n < 3:
        if n == 1:
            return field.copy()
        out = np.empty_like(field)
        out[0] = (field[0] + field[1]) / 2.0
        out[1] = (field[0] + field[1]) / 2.0
        return out
    out = np.empty_like(field)
    out[1:-1] = (field[:-2] + field[1:-1] + field[2:]) / 3.0
    out[0] = (field[0] + field[1]) / 2.0
    out[-1] = (field[-2] + field[-1]) / 2.0
    return out


class SurrogateGenerator:
    """Deterministic stand-in for the image-to-image diffusion backend.

    output = clamp01((1 - k) * input + k * noise) where the noise field is
    a seeded Gaussian draw rescaled to each input column's mean and spread,
    then smoothed vertically.  Strengths below 0.002 bypass the noise and
    return the input bit-exactly.
    """

    backend = "surrogate"

    def generate(self, req: GenRequest) -> GenResult:
        x = req.image.pixels
        if req.strength < IDENTITY_BYPASS:
            return GenResult(GrayImage(x.copy()), self.backend, req)
        rng = np.random.default_rng(req.seed)
        noise = rng.standard_normal(x.shape)
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        field = mu[None, :] + sd[None, :] * noise
        field = _smooth_columns(field)
        out = np.clip((1.0 - req.strength) * x + req.strength * field, 0.0, 1.0)
        return GenResult(GrayImage(out), self.backend, req)

    def generate_batch(self, reqs: list[GenRequest]) -> list[GenResult]:
        return [self.generate(r) for r in reqs]


class RemoteGenerator:
    """HTTP client for the generation service protocol.

    POST /generate and /encode-latent carry base64 PNG payloads; requests
    are retried up to three times on transport failure and matched to
    responses by request_id.  Dimension changes are an error, never a
    silent resize.
    """

    backend = "remote"

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        retry_wait: float = 0.05,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.retry_wait = retry_wait

    def _post(self, path: str, payload: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(3):
            try:
                resp = requests.post(
                    f"{self.endpoint}{path}", json=payload, timeout=self.timeout
                )
                resp.raise_for_status()
                return resp.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                time.sleep(self.retry_wait * (attempt + 1))
            except requests.HTTPError as exc:
                raise MalformedResponseError(f"{path} returned {exc}") from exc
            except ValueError as exc:
                raise MalformedResponseError(f"{path} returned non-JSON body") from exc
        raise GeneratorUnreachableError(f"{path} unreachable after 3 attempts") from last_exc

    def health(self) -> dict:
        try:
            resp = requests.get(f"{self.endpoint}/health", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise GeneratorUnreachableError("health probe failed") from exc
        except (requests.HTTPError, ValueError) as exc:
            raise MalformedResponseError("health probe returned a bad response") from exc

    def generate(self, req: GenRequest) -> GenResult:
        request_id = uuid.uuid4().hex
        payload = {
            "image_png_base64": base64.b64encode(png_bytes(req.image)).decode("ascii"),
            "prompt": req.prompt,
            "strength": req.strength,
            "guidance_scale": req.guidance_scale,
            "seed": req.seed,
            "request_id": request_id,
        }
        body = self._post("/generate", payload)
        try:
            echoed = body["request_id"]
            raw = base64.b64decode(body["image_png_base64"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError("generate response missing fields") from exc
        if echoed != request_id:
            raise MalformedResponseError(
                f"response id {echoed!r} does not match request {request_id!r}"
            )
        try:
            image = image_from_png_bytes(raw)
        except Exception as exc:
            raise MalformedResponseError("generate response is not a decodable PNG") from exc
        if (image.height, image.width) != (req.image.height, req.image.width):
            raise DimensionMismatchError(
                f"requested {req.image.height}x{req.image.width}, "
                f"got {image.height}x{image.width}"
            )
        return GenResult(image, self.backend, req)

    def generate_batch(self, reqs: list[GenRequest]) -> list[GenResult]:
        """Issue requests with bounded concurrency; results in request order."""
        if not reqs:
            return []
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.generate, reqs))

    def encode_latent(self, image: GrayImage) -> tuple[np.ndarray, list[int]]:
        payload = {
            "image_png_base64": base64.b64encode(png_bytes(image)).decode("ascii")
        }
        body = self._post("/encode-latent", payload)
        try:
            latent = np.asarray(body["latent"], dtype=np.float64)
            shape = [int(s) for s in body["shape"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError("encode-latent response missing fields") from exc
        if latent.ndim != 1 or latent.size != int(np.prod(shape)):
            raise MalformedResponseError("latent length does not match shape")
        return latent, shape
