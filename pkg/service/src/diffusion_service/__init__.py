"""HTTP wrapper exposing image-to-image generation and latent encoding.

Two interchangeable backends sit behind one wire protocol: a diffusion
pipeline for real inference and a deterministic stub that lets every
protocol consumer run hermetically on CPU-only machines.
"""

from diffusion_service.backends import BackendNotReady, DiffusionBackend, StubBackend
from diffusion_service.config import ServiceConfig
from diffusion_service.server import ServiceServer, serve, stub_mode

__all__ = [
    "BackendNotReady",
    "DiffusionBackend",
    "ServiceConfig",
    "ServiceServer",
    "StubBackend",
    "serve",
    "stub_mode",
]
