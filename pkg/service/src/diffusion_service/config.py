"""Service configuration with environment-variable overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_MODEL_ID = "stabilityai/stable-diffusion-xl-refiner-1.0"
DEFAULT_STEPS = 50


@dataclass(frozen=True)
class ServiceConfig:
    model_id: str = DEFAULT_MODEL_ID
    device: str = "cpu"
    port: int = 8750
    max_batch: int = 4

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside [1, 65535]")
        if self.max_batch < 1:
            raise ValueError("max_batch must be at least 1")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        """Build from MODEL_ID / DEVICE / PORT, explicit overrides winning."""
        fields = {
            "model_id": os.environ.get("MODEL_ID", DEFAULT_MODEL_ID),
            "device": os.environ.get("DEVICE", "cpu"),
            "port": int(os.environ.get("PORT", "8750")),
        }
        fields.update(overrides)
        return cls(**fields)
