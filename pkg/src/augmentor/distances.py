"""Two-sample distances for candidate filtering and bound verification.

Provides exact 1-D Wasserstein-1, a sliced multivariate estimate, Gaussian
kernel MMD, histogram total variation, and a downsample+PCA feature map
whose basis and scaling are fit on the original sample only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import gammaln

from augmentor.codec import GrayImage


@dataclass
class SampleSet:
    """Empirical sample of m points in q dimensions, optionally weighted."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty 2-D array")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (self.points.shape[0],):
                raise ValueError("weights must have one entry per point")
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")
            if abs(self.weights.sum() - 1.0) > 1e-9:
                raise ValueError("weights must sum to 1")

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]


def _as_points(sample) -> np.ndarray:
    if isinstance(sample, SampleSet):
        return sample.points
    arr = np.asarray(sample, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def w1_1d(a, b, a_weights=None, b_weights=None) -> float:
    """Exact Wasserstein-1 between two 1-D empirical measures.

    Equal unweighted sizes use the sorted-pairing mean; otherwise the
    quantile functions are integrated over merged breakpoints.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    if a_weights is None and b_weights is None and a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))

    def prepare(values, weights):
        order = np.argsort(values, kind="stable")
        values = values[order]
        if weights is None:
            cum = np.arange(1, values.size + 1) / values.size
        else:
            weights = np.asarray(weights, dtype=np.float64)[order]
            total = weights.sum()
            if total <= 0:
                raise ValueError("weights must have positive total mass")
            cum = np.cumsum(weights) / total
        return values, cum

    av, acum = prepare(a, a_weights)
    bv, bcum = prepare(b, b_weights)
    # interior breakpoints of both quantile functions, merged
    probs = np.union1d(acum[:-1], bcum[:-1])
    edges = np.concatenate([[0.0], probs, [1.0]])
    widths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    ia = np.minimum(np.searchsorted(acum, mids, side="left"), av.size - 1)
    ib = np.minimum(np.searchsorted(bcum, mids, side="left"), bv.size - 1)
    return float(np.sum(widths * np.abs(av[ia] - bv[ib])))


def mean_projection_factor(q: int) -> float:
    """E|u . e| for a uniform unit direction u in R^q and any unit vector e."""
    return math.exp(gammaln(q / 2.0) - gammaln((q + 1) / 2.0)) / math.sqrt(math.pi)


def _unit_directions(n_projections: int, q: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, q))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return dirs / norms


def sliced_w1(A, B, n_projections: int = 64, seed: int = 0) -> float:
    """Projection-averaged W1, rescaled to estimate the full-space W1.

    Each 1-D projection contracts distances by the mean projection factor
    of a unit direction, so the raw average is divided by that factor.
    With q=1 the projection step is skipped and the result is exact w1_1d.
    """
    pa, pb = _as_points(A), _as_points(B)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    q = pa.shape[1]
    if q == 1:
        return w1_1d(pa[:, 0], pb[:, 0])
    dirs = _unit_directions(n_projections, q, seed)
    proj_a = pa @ dirs.T
    proj_b = pb @ dirs.T
    total = 0.0
    for j in range(n_projections):
        total += w1_1d(proj_a[:, j], proj_b[:, j])
    return (total / n_projections) / mean_projection_factor(q)


def _pairwise_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return cdist(x, y, metric="sqeuclidean")


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median pairwise distance over a pooled sample; 1.0 when degenerate."""
    if pooled.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0.0 else 1.0


def mmd(A, B, bandwidth="auto", estimator: str = "biased") -> float:
    """Squared maximum mean discrepancy under a Gaussian kernel.

    biased: V-statistic including diagonal terms, clamped at 0.
    unbiased: U-statistic excluding diagonals; may be negative.
    """
    x, y = _as_points(A), _as_points(B)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if estimator not in ("biased", "unbiased"):
        raise ValueError(f"unknown estimator {estimator!r}")
    m, n = x.shape[0], y.shape[0]
    if estimator == "unbiased" and (m < 2 or n < 2):
        raise ValueError("unbiased estimator needs at least 2 points per sample")
    if bandwidth == "auto":
        sigma = median_bandwidth(np.vstack([x, y]))
    else:
        sigma = float(bandwidth)
        if sigma <= 0:
            raise ValueError("bandwidth must be positive")
    gamma = 1.0 / (2.0 * sigma * sigma)
    kxx = np.exp(-gamma * _pairwise_sq(x, x))
    kyy = np.exp(-gamma * _pairwise_sq(y, y))
    kxy = np.exp(-gamma * _pairwise_sq(x, y))
    if estimator == "biased":
        value = kxx.mean() + kyy.mean() - 2.0 * kxy.mean()
        return max(float(value), 0.0)
    xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(xx + yy - 2.0 * kxy.mean())


def tv_hist(A, B, bins: int = 32, n_projections: int = 64, seed: int = 0) -> float:
    """Total variation on shared equal-width histograms, projection-averaged."""
    pa, pb = _as_points(A), _as_points(B)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    if bins < 1:
        raise ValueError("need at least one bin")
    q = pa.shape[1]
    if q == 1:
        columns = [(pa[:, 0], pb[:, 0])]
    else:
        dirs = _unit_directions(n_projections, q, seed)
        proj_a = pa @ dirs.T
        proj_b = pb @ dirs.T
        columns = [(proj_a[:, j], proj_b[:, j]) for j in range(n_projections)]
    total = 0.0
    for ca, cb in columns:
        lo = min(ca.min(), cb.min())
        hi = max(ca.max(), cb.max())
        if hi <= lo:
            hi = lo + 0.5
            lo = lo - 0.5
        pa_hist, _ = np.histogram(ca, bins=bins, range=(lo, hi))
        pb_hist, _ = np.histogram(cb, bins=bins, range=(lo, hi))
        p = pa_hist / ca.size
        r = pb_hist / cb.size
        total += 0.5 * float(np.abs(p - r).sum())
    return total / len(columns)


# alias used by filter configs
tv_distance = tv_hist


@dataclass
class FeatureSpec:
    """How images become feature vectors before distance computation."""

    kind: str = "downsample_pca"
    downsample_to: tuple[int, int] = (16, 16)
    pca_dims: int = 32
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("remote_latent", "downsample_pca"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        h, w = self.downsample_to
        if h < 1 or w < 1:
            raise ValueError("downsample dimensions must be positive")
        if self.pca_dims < 1 or self.pca_dims > h * w:
            raise ValueError("pca_dims must lie in [1, h*w]")


def nearest_downsample(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = pixels.shape
    rows = np.minimum((np.arange(out_h) * h) // out_h, h - 1)
    cols = np.minimum((np.arange(out_w) * w) // out_w, w - 1)
    return pixels[np.ix_(rows, cols)]


class FeatureExtractor:
    """Downsample+PCA feature map fit once on the original image set.

    The projection basis, centering, and per-dimension scale all come from
    the fit set, so the candidate pool can never shift the feature space.
    """

    def __init__(self, spec: FeatureSpec) -> None:
        if spec.kind != "downsample_pca":
            raise ValueError("FeatureExtractor handles downsample_pca only")
        self.spec = spec
        self.mean_: np.ndarray | None = None
        self.components_: np.ndarray | None = None
        self.scale_: np.ndarray | None = None

    def _flatten(self, images: list[GrayImage]) -> np.ndarray:
        h, w = self.spec.downsample_to
        return np.stack([nearest_downsample(img.pixels, h, w).ravel() for img in images])

    def fit(self, originals: list[GrayImage]) -> "FeatureExtractor":
        if not originals:
            raise ValueError("need at least one original image")
        x = self._flatten(originals)
        self.mean_ = x.mean(axis=0)
        centered = x - self.mean_
        # full_matrices keeps an orthonormal completion when rank < pca_dims
        _, _, vt = np.linalg.svd(centered, full_matrices=True)
        self.components_ = vt[: self.spec.pca_dims]
        feats = centered @ self.components_.T
        scale = feats.std(axis=0)
        scale[scale == 0.0] = 1.0
        self.scale_ = scale if self.spec.standardize else np.ones_like(scale)
        return self

    def transform(self, images: list[GrayImage]) -> np.ndarray:
        if self.components_ is None:
            raise RuntimeError("extractor is not fitted")
        x = self._flatten(images)
        return ((x - self.mean_) @ self.components_.T) / self.scale_


def extract_features(
    images: list[GrayImage],
    spec: FeatureSpec,
    endpoint: str | None = None,
    fit_images: list[GrayImage] | None = None,
) -> SampleSet:
    """Feature rows for a list of images.

    downsample_pca fits on fit_images when given (the original set),
    otherwise on the input list itself.  remote_latent defers to the
    generation service's latent encoder.
    """
    if not images:
        raise ValueError("need at least one image")
    if spec.kind == "remote_latent":
        if endpoint is None:
            raise ValueError("remote_latent requires a service endpoint")
        from augmentor.generators import RemoteGenerator

        client = RemoteGenerator(endpoint)
        rows = [client.encode_latent(img)[0] for img in images]
        return SampleSet(np.stack(rows))
    extractor = FeatureExtractor(spec).fit(fit_images if fit_images is not None else images)
    return SampleSet(extractor.transform(images))
