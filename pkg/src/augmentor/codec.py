"""Reversible codec between numeric tables and grayscale pixel grids.

Each column is mapped independently (exponential or identity), min-max
normalized to [0, 1], and optionally quantized to 8 bits for PNG storage.
A manifest records everything needed to invert the transformation exactly,
so decoded tables match the originals up to quantization error.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# exp() overflows float64 near exp(709); reject with margin
EXP_ARG_LIMIT = 700.0

_ALLOWED_BITS = (0, 8)


@dataclass
class DataMatrix:
    """Numeric table of shape (n, c) whose response lives in one column."""

    values: np.ndarray
    response_col: int | None = None
    column_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        n, c = self.values.shape
        if n < 1 or c < 2:
            raise ValueError(f"need at least 1 row and 2 columns, got {n}x{c}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if self.response_col is None:
            self.response_col = c - 1
        if not 0 <= self.response_col < c:
            raise ValueError(f"response_col {self.response_col} out of range for {c} columns")
        if self.column_names is not None:
            self.column_names = tuple(self.column_names)
            if len(self.column_names) != c:
                raise ValueError("column_names length must match column count")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def predictors(self) -> np.ndarray:
        """All columns except the response, in original order."""
        keep = [j for j in range(self.n_cols) if j != self.response_col]
        return self.values[:, keep]

    @property
    def response(self) -> np.ndarray:
        return self.values[:, self.response_col]

    def replace_values(self, values: np.ndarray) -> "DataMatrix":
        return DataMatrix(values, response_col=self.response_col, column_names=self.column_names)


@dataclass
class GrayImage:
    """Pixel grid with every entry in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixels must be finite")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("pixels must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_unit(cls, values: np.ndarray, clip: bool = False) -> "GrayImage":
        """Build from an array, optionally clamping strays into [0, 1]."""
        arr = np.asarray(values, dtype=np.float64)
        if clip:
            arr = np.clip(arr, 0.0, 1.0)
        return cls(arr)


@dataclass
class CodecManifest:
    """Inversion parameters captured at encode time."""

    mapping_kind: str
    exp_coefficient: float
    per_column: list[tuple[float, float]]
    quantization_bits: int
    rows: int
    cols: int
    response_col: int

    def __post_init__(self) -> None:
        if self.mapping_kind not in ("exponential", "minmax"):
            raise ValueError(f"unknown mapping_kind {self.mapping_kind!r}")
        if self.exp_coefficient <= 0:
            raise ValueError("exp_coefficient must be positive")
        if self.quantization_bits not in _ALLOWED_BITS:
            raise ValueError(f"quantization_bits must be one of {_ALLOWED_BITS}")
        if len(self.per_column) != self.cols:
            raise ValueError("per_column length must equal cols")
        for lo, hi in self.per_column:
            if hi < lo:
                raise ValueError("col_max must be >= col_min")

    def to_json(self) -> str:
        payload = {
            "mapping_kind": self.mapping_kind,
            "exp_coefficient": self.exp_coefficient,
            "per_column": [{"col_min": lo, "col_max": hi} for lo, hi in self.per_column],
            "quantization_bits": self.quantization_bits,
            "layout": {"rows": self.rows, "cols": self.cols, "response_col": self.response_col},
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CodecManifest":
        payload = json.loads(text)
        layout = payload["layout"]
        return cls(
            mapping_kind=payload["mapping_kind"],
            exp_coefficient=float(payload["exp_coefficient"]),
            per_column=[(float(d["col_min"]), float(d["col_max"])) for d in payload["per_column"]],
            quantization_bits=int(payload["quantization_bits"]),
            rows=int(layout["rows"]),
            cols=int(layout["cols"]),
            response_col=int(layout["response_col"]),
        )


def partition(
    data: DataMatrix, fraction: float, seed: int = 0, shuffle: bool = False
) -> tuple[DataMatrix, DataMatrix]:
    """Split rows into two parts, |V1| = floor(fraction * n).

    With shuffle=False the split is the literal top/bottom bisection; with
    shuffle=True rows are permuted by the seed first.  Rejects fractions
    that leave either part empty.
    """
    n = data.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows to partition")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    m = int(math.floor(fraction * n))
    if m <= 0 or m >= n:
        raise ValueError(f"fraction {fraction} leaves an empty part for n={n}")
    rows = data.values
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
        rows = rows[order]
    v1 = DataMatrix(rows[:m].copy(), data.response_col, data.column_names)
    v2 = DataMatrix(rows[m:].copy(), data.response_col, data.column_names)
    return v1, v2


def _forward_map(values: np.ndarray, mapping_kind: str, exp_coefficient: float) -> np.ndarray:
    if mapping_kind == "exponential":
        scaled = exp_coefficient * values
        if np.any(np.abs(scaled) > EXP_ARG_LIMIT):
            raise ValueError("exponential map would overflow; rescale the data")
        return np.exp(scaled)
    if mapping_kind == "minmax":
        return values.copy()
    raise ValueError(f"unknown mapping_kind {mapping_kind!r}")


def encode(
    data: DataMatrix,
    mapping_kind: str = "exponential",
    exp_coefficient: float = 0.05,
    quantization_bits: int = 8,
) -> tuple[GrayImage, CodecManifest]:
    """Map a table to pixels in [0, 1] plus the manifest inverting the map.

    Exponential: w = exp(a * v) per entry, then column-wise min-max.
    Minmax: column-wise (v - min) / (max - min).  Constant columns become
    pixel 0.5 and decode back to the stored constant.
    """
    if quantization_bits not in _ALLOWED_BITS:
        raise ValueError(f"quantization_bits must be one of {_ALLOWED_BITS}")
    w = _forward_map(data.values, mapping_kind, exp_coefficient)
    col_min = w.min(axis=0)
    col_max = w.max(axis=0)
    span = col_max - col_min
    constant = span == 0.0
    safe_span = np.where(constant, 1.0, span)
    pixels = (w - col_min) / safe_span
    pixels[:, constant] = 0.5
    if quantization_bits == 8:
        pixels = np.round(pixels * 255.0) / 255.0
    manifest = CodecManifest(
        mapping_kind=mapping_kind,
        exp_coefficient=exp_coefficient,
        per_column=[(float(lo), float(hi)) for lo, hi in zip(col_min, col_max)],
        quantization_bits=quantization_bits,
        rows=data.n_rows,
        cols=data.n_cols,
        response_col=data.response_col,
    )
    return GrayImage(pixels), manifest


def decode_with_stats(image: GrayImage, manifest: CodecManifest) -> tuple[DataMatrix, int]:
    """Invert encode; returns the table and a count of clamped log cells.

    For the exponential map a pixel can imply a non-positive logarithm
    argument only when the manifest ranges were not produced by encode
    (hand-built or foreign manifests); such cells clamp to the smallest
    positive pre-image instead of erroring, and the count reports them.
    """
    if image.height != manifest.rows or image.width != manifest.cols:
        raise ValueError(
            f"image {image.height}x{image.width} does not match manifest "
            f"{manifest.rows}x{manifest.cols}"
        )
    pixels = np.clip(image.pixels, 0.0, 1.0)
    col_min = np.array([lo for lo, _ in manifest.per_column])
    col_max = np.array([hi for _, hi in manifest.per_column])
    span = col_max - col_min
    constant = span == 0.0
    w = pixels * span + col_min
    warning_count = 0
    if manifest.mapping_kind == "exponential":
        bad = (w <= 0.0) & ~constant[None, :]
        warning_count = int(bad.sum())
        w = np.where(bad, np.finfo(np.float64).tiny, w)
        # constant columns skip the log entirely; exp(a*v)=const stores v via min
        values = np.log(np.where(constant[None, :], 1.0, w)) / manifest.exp_coefficient
        const_values = np.log(np.where(constant, np.maximum(col_min, np.finfo(np.float64).tiny), 1.0))
        values = np.where(constant[None, :], const_values / manifest.exp_coefficient, values)
    else:
        values = np.where(constant[None, :], col_min[None, :], w)
    data = DataMatrix(values, response_col=manifest.response_col)
    return data, warning_count


def decode(image: GrayImage, manifest: CodecManifest) -> DataMatrix:
    """Invert encode, discarding the underflow warning count."""
    return decode_with_stats(image, manifest)[0]


def binarize_response(data: DataMatrix, threshold: float = 0.5) -> DataMatrix:
    """Threshold the response column: strictly greater maps to 1, else 0."""
    y = data.response
    if y.min() < 0.0 or y.max() > 1.0:
        raise ValueError("response values must lie in [0, 1] before thresholding")
    values = data.values.copy()
    values[:, data.response_col] = np.where(y > threshold, 1.0, 0.0)
    return data.replace_values(values)


def to_u8(pixels: np.ndarray) -> np.ndarray:
    """Quantize unit-interval pixels to bytes the way the PNG writer does."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_u8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def manifest_path_for(image_path: str | Path) -> Path:
    return Path(f"{image_path}.manifest.json")


def png_bytes(image: GrayImage) -> bytes:
    """Serialize to in-memory 8-bit grayscale PNG."""
    buf = io.BytesIO()
    Image.fromarray(to_u8(image.pixels), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> GrayImage:
    with Image.open(io.BytesIO(data)) as img:
        raw = np.asarray(img.convert("L"), dtype=np.uint8)
    return GrayImage(from_u8(raw))


def write_png(image: GrayImage, manifest: CodecManifest, path: str | Path) -> Path:
    """Write an 8-bit grayscale PNG plus its JSON manifest sidecar."""
    path = Path(path)
    Image.fromarray(to_u8(image.pixels), mode="L").save(path, format="PNG")
    sidecar = manifest_path_for(path)
    sidecar.write_text(manifest.to_json())
    return sidecar


def read_png(path: str | Path) -> tuple[GrayImage, CodecManifest]:
    """Read a PNG written by write_png together with its manifest."""
    path = Path(path)
    with Image.open(path) as img:
        raw = np.asarray(img.convert("L"), dtype=np.uint8)
    manifest = CodecManifest.from_json(manifest_path_for(path).read_text())
    return GrayImage(from_u8(raw)), manifest
