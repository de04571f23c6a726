"""Inference backends: a real diffusion pipeline and a hermetic stub.

Both expose the same three calls the HTTP layer needs: readiness, image
generation, and latent encoding.  The server never touches model libraries
itself, so a machine without them still serves /health (reporting
not-ready) and the stub serves everything.
"""

from __future__ import annotations

import numpy as np

from diffusion_service.config import ServiceConfig
from diffusion_service.imaging import nearest_resize
from diffusion_service.surrogate import surrogate_generate

#: native operating size of the diffusion pipeline
NATIVE_SIZE = 512

#: stub latent grid; flattens to the 32-wide feature rows the toolkit's
#: built-in extractor produces by default
STUB_LATENT_GRID = (4, 8)


class BackendNotReady(RuntimeError):
    """Raised on inference calls against a backend that failed to load."""


class StubBackend:
    """Protocol-complete backend with no model dependencies.

    /generate runs the deterministic surrogate formula; /encode-latent
    returns a nearest-neighbor downsample as a stand-in latent.
    """

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.model_label = "stub-surrogate"
        self.ready = True
        self.detail = ""

    def generate(self, pixels: np.ndarray, *, prompt: str, strength: float,
                 guidance_scale: float, seed: int, steps: int) -> np.ndarray:
        del prompt, guidance_scale, steps  # accepted, not interpreted
        return surrogate_generate(pixels, strength, seed)

    def encode_latent(self, pixels: np.ndarray) -> tuple[np.ndarray, list[int]]:
        h, w = STUB_LATENT_GRID
        return nearest_resize(pixels, h, w).ravel(), [1, h, w]


class DiffusionBackend:
    """img2img pipeline plus VAE latent encoder, loaded lazily.

    Any load failure (missing libraries, missing weights, no accelerator)
    is captured rather than raised so the HTTP layer can keep answering
    /health with a not-ready status.
    """

    def __init__(self, config: ServiceConfig, load_now: bool = True) -> None:
        self.config = config
        self.model_label = config.model_id
        self.ready = False
        self.detail = "not loaded"
        self._pipeline = None
        self._torch = None
        if load_now:
            self.load()

    def load(self) -> None:
        try:
            import torch
            from diffusers import AutoPipelineForImage2Image

            pipeline = AutoPipelineForImage2Image.from_pretrained(self.config.model_id)
            self._pipeline = pipeline.to(self.config.device)
            self._torch = torch
            self.ready = True
            self.detail = ""
        except Exception as exc:  # noqa: BLE001 - any failure means not-ready
            self.ready = False
            self.detail = f"{type(exc).__name__}: {exc}"

    def _require_ready(self) -> None:
        if not self.ready:
            raise BackendNotReady(self.detail)

    def generate(self, pixels: np.ndarray, *, prompt: str, strength: float,
                 guidance_scale: float, seed: int, steps: int) -> np.ndarray:
        self._require_ready()
        from PIL import Image

        h, w = pixels.shape
        native = nearest_resize(pixels, NATIVE_SIZE, NATIVE_SIZE)
        rgb = np.repeat((native * 255.0).round().astype(np.uint8)[:, :, None], 3, axis=2)
        generator = self._torch.Generator(self.config.device).manual_seed(seed)
        out = self._pipeline(
            prompt=prompt,
            image=Image.fromarray(rgb),
            strength=strength,
            guidance_scale=guidance_scale,
            num_inference_steps=steps,
            generator=generator,
        ).images[0]
        gray = np.asarray(out.convert("L"), dtype=np.float64) / 255.0
        return nearest_resize(gray, h, w)

    def encode_latent(self, pixels: np.ndarray) -> tuple[np.ndarray, list[int]]:
        self._require_ready()
        torch = self._torch
        native = nearest_resize(pixels, NATIVE_SIZE, NATIVE_SIZE)
        rgb = np.repeat(native[None, None, :, :], 3, axis=1) * 2.0 - 1.0
        tensor = torch.as_tensor(rgb, dtype=torch.float32, device=self.config.device)
        with torch.no_grad():
            # posterior mean keeps downstream filtering deterministic
            latent = self._pipeline.vae.encode(tensor).latent_dist.mean[0]
        arr = latent.cpu().numpy().astype(np.float64)
        return arr.ravel(), list(arr.shape)
