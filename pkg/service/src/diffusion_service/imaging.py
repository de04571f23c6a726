"""PNG (de)serialization and plain-array image utilities.

The wire protocol carries 8-bit PNGs; quantization is round-to-nearest on
the 0..255 grid and decoding divides by 255.  Both directions must stay
bit-compatible with the toolkit clients, so no resampling or color
management is allowed to sneak in here.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def to_u8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_u8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def png_encode(pixels: np.ndarray) -> bytes:
    """Unit-interval grayscale array to 8-bit PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(to_u8(pixels), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_decode(data: bytes) -> np.ndarray:
    """8-bit PNG bytes to a unit-interval grayscale array."""
    with Image.open(io.BytesIO(data)) as img:
        raw = np.asarray(img.convert("L"), dtype=np.uint8)
    return from_u8(raw)


def b64_encode_png(pixels: np.ndarray) -> str:
    return base64.b64encode(png_encode(pixels)).decode("ascii")


def b64_decode_png(payload: str) -> np.ndarray:
    return png_decode(base64.b64decode(payload))


def nearest_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize, used both up (to the model's native size)
    and down (back to the request size, and for stub latents)."""
    h, w = pixels.shape
    rows = np.minimum((np.arange(out_h) * h) // out_h, h - 1)
    cols = np.minimum((np.arange(out_w) * w) // out_w, w - 1)
    return pixels[np.ix_(rows, cols)]
