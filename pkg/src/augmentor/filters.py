"""Candidate selection: transfer-based dual-source selection and distance filters.

Two mechanisms gate synthetic rows before augmentation.  The transfer path
splits the pool in two, adapts each half onto the opposite original half
with a two-step penalized fit, and picks the sampling ratio whose combined
predictions score best.  The distance path ranks candidates by two-sample
statistics in feature space and keeps the closest fraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from augmentor.codec import DataMatrix, GrayImage
from augmentor.distances import SampleSet, median_bandwidth, mmd, tv_hist, w1_1d
from augmentor.models import (
    FitResult,
    evaluate,
    fit_lasso,
    fit_lasso_cv,
    fit_logistic,
    predict,
)


#: Step-2 penalty large enough to pin the correction at zero for any data
#: on a float64 scale; stands in for the infinite-penalty limit.
CORRECTION_OFF = 1e50


class SelectionFailure(RuntimeError):
    """Every sampling ratio was excluded; no valid iteration anywhere."""


@dataclass
class TransferConfig:
    ratio_set: list[float]
    batch_size: int
    iterations: int = 100
    detection_c0: float = 2.0
    detection_delta0: float = 2.0
    validation_factor: float = 1.25
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.ratio_set:
            raise ValueError("ratio_set must be non-empty")
        for rho in self.ratio_set:
            if not 0.0 < rho <= 1.0:
                raise ValueError(f"ratio {rho} outside (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.detection_c0 <= 0:
            raise ValueError("detection_c0 must be positive")


@dataclass
class PerRho:
    rho: float
    mean_error: float
    mean_adaptability: float
    n_valid_iterations: int
    errors: list[float] = field(default_factory=list)
    adaptabilities: list[float] = field(default_factory=list)


@dataclass
class SelectReport:
    rho_star: float
    per_rho: list[PerRho]
    baseline_error: float

    def to_dict(self) -> dict:
        return {
            "rho_star": self.rho_star,
            "per_rho": [
                {
                    "rho": e.rho,
                    "mean_error": e.mean_error,
                    "mean_adaptability": e.mean_adaptability,
                    "n_valid_iterations": e.n_valid_iterations,
                    "errors": e.errors,
                    "adaptabilities": e.adaptabilities,
                }
                for e in self.per_rho
            ],
            "baseline_error": self.baseline_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class FilterPolicy:
    kind: str
    value: float

    def __post_init__(self) -> None:
        if self.kind == "quantile":
            if not 0.0 < self.value <= 1.0:
                raise ValueError("quantile must lie in (0, 1]")
        elif self.kind == "absolute":
            if self.value < 0.0:
                raise ValueError("absolute threshold must be nonnegative")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass
class FilterReport:
    retained_indices: list[int]
    distances: list[float]
    policy: FilterPolicy
    metric: str

    def to_dict(self) -> dict:
        return {
            "retained_indices": self.retained_indices,
            "distances": self.distances,
            "policy": {"kind": self.policy.kind, "value": self.policy.value},
            "metric": self.metric,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _xy(data: DataMatrix) -> tuple[np.ndarray, np.ndarray]:
    return data.predictors, data.response


def _fit_family(X, y, family: str, lam: float, offset=None) -> FitResult:
    if family == "linear":
        if offset is not None:
            y = y - offset
        return fit_lasso(X, y, lam)
    if family == "logistic":
        return fit_logistic(X, y, lam=lam, offset=offset)
    raise ValueError(f"unknown family {family!r}")


def _cv_lambda(X, y) -> float:
    return fit_lasso_cv(X, y).lam


def two_step_transfer_fit(
    target: DataMatrix,
    transferable_sources: list[DataMatrix],
    family: str = "linear",
    lam: float | tuple[float, float] | None = None,
) -> FitResult:
    """Pooled penalized fit, then a target-only correction on top of it.

    Step 1 fits the pooled target+source rows; step 2 refits the target
    with the pooled prediction as an offset, and the two coefficient
    vectors add.  The correction is a contrast estimate on few rows, so
    unless given explicitly its penalty sits at the universal-threshold
    rate sigma_hat*sqrt(2*log(p)/n_target): a compatible source leaves the
    correction at zero, while a bad source inflates the residual scale and
    gets shrunk away instead of silently re-fit.  With no sources this is
    literally the target-only fit.

    lam=None picks the step-1 penalty by CV on the pool; a float fixes the
    step-1 penalty only; a (lam1, lam2) tuple fixes both.
    """
    Xt, yt = _xy(target)
    if lam is None:
        lam1 = lam2 = None
    elif isinstance(lam, tuple):
        lam1, lam2 = lam
    else:
        lam1, lam2 = float(lam), None
    if not transferable_sources:
        if lam2 is None:
            lam2 = _cv_lambda(Xt, yt) if lam1 is None else lam1
        return _fit_family(Xt, yt, family, lam2)
    for src in transferable_sources:
        if src.predictors.shape[1] != Xt.shape[1]:
            raise ValueError("source predictor dimension differs from target")
    X_pool = np.vstack([Xt] + [s.predictors for s in transferable_sources])
    y_pool = np.concatenate([yt] + [s.response for s in transferable_sources])
    lam1 = _cv_lambda(X_pool, y_pool) if lam1 is None else lam1
    pooled = _fit_family(X_pool, y_pool, family, lam1)
    offset = Xt @ pooled.coefficients + pooled.intercept
    if lam2 is None:
        resid = yt - (expit(offset) if family == "logistic" else offset)
        sd = float(np.std(resid, ddof=1)) if resid.size > 1 else float(np.abs(resid).max())
        lam2 = sd * math.sqrt(2.0 * math.log(max(Xt.shape[1], 2)) / Xt.shape[0])
    correction = _fit_family(Xt, yt, family, lam2, offset=offset)
    return FitResult(
        family="logistic" if family == "logistic" else "linear",
        coefficients=pooled.coefficients + correction.coefficients,
        intercept=pooled.intercept + correction.intercept,
        lam=lam2,
        iterations=pooled.iterations + correction.iterations,
        converged=pooled.converged and correction.converged,
    )


def _fold_losses(
    target: DataMatrix,
    sources: list[DataMatrix],
    family: str,
    lam: float | tuple[float | None, float | None] | None,
    n_folds: int,
) -> np.ndarray:
    Xt, yt = _xy(target)
    n = Xt.shape[0]
    losses = []
    for fold in np.array_split(np.arange(n), n_folds):
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        train = DataMatrix(target.values[mask], target.response_col, target.column_names)
        fit = two_step_transfer_fit(train, sources, family=family, lam=lam)
        losses.append(evaluate(fit, Xt[fold], yt[fold]).mse)
    return np.asarray(losses)


def detect_transferable(
    target: DataMatrix,
    sources: list[DataMatrix],
    family: str = "linear",
    c0: float = 2.0,
    n_folds: int = 5,
) -> np.ndarray:
    """Mask of sources whose inclusion does not degrade target CV loss.

    The target-only cross-validated loss gives a baseline mean and fold
    spread; a source passes when the two-step fit using it alone stays
    within c0 fold standard deviations of that baseline.  The source fits
    run in the correction-suppressed limit (infinite step-2 penalty): the
    correction exists to repair exactly the damage a bad source causes, so
    probing the repaired fit would accept everything.  Pooled-step
    penalties are re-selected per fold; the baseline keeps the penalty
    CV-selected once on the full target.
    """
    if target.n_rows < 2 * n_folds:
        raise ValueError(f"target needs at least {2 * n_folds} rows for detection")
    if not sources:
        return np.zeros(0, dtype=bool)
    Xt, yt = _xy(target)
    lam = _cv_lambda(Xt, yt)
    base = _fold_losses(target, [], family, lam, n_folds)
    l0 = float(base.mean())
    sd0 = float(base.std(ddof=1))
    mask = np.zeros(len(sources), dtype=bool)
    for k, src in enumerate(sources):
        lk = float(_fold_losses(target, [src], family, (None, CORRECTION_OFF), n_folds).mean())
        mask[k] = lk <= l0 + c0 * sd0
    return mask


def _coefficient_gap(f1: FitResult, f2: FitResult) -> float:
    n1 = float(np.linalg.norm(f1.coefficients))
    n2 = float(np.linalg.norm(f2.coefficients))
    return float(np.linalg.norm(f1.coefficients - f2.coefficients)) / (1.0 + min(n1, n2))


def _subset(data: DataMatrix, idx: np.ndarray) -> DataMatrix:
    return DataMatrix(data.values[idx], data.response_col, data.column_names)


def dual_source_select(
    S1: DataMatrix,
    S2: DataMatrix,
    T1: DataMatrix,
    T2: DataMatrix,
    D_test: DataMatrix,
    config: TransferConfig,
    family: str = "linear",
) -> SelectReport:
    """Pick the sampling ratio whose adapted dual models predict best.

    Baseline error comes from a CV-tuned lasso on the pooled originals.
    Per ratio and iteration: subsample each synthetic half, take the lead
    batch, adapt it onto the opposite original half (fit on four fifths,
    validate on the held-out fifth), and score the averaged prediction of
    the two adapted models on the test split when both pass validation.
    """
    for m in (S1, S2, T1, T2, D_test):
        if m.predictors.shape[1] != T1.predictors.shape[1]:
            raise ValueError("all matrices must share the predictor dimension")
    X_pool = np.vstack([T1.predictors, T2.predictors])
    y_pool = np.concatenate([T1.response, T2.response])
    baseline_fit = fit_lasso_cv(X_pool, y_pool)
    X_test, y_test = _xy(D_test)
    baseline_error = evaluate(baseline_fit, X_test, y_test).mse
    # one penalty per original half, chosen once and reused every iteration
    lam_t1 = _cv_lambda(*_xy(T1))
    lam_t2 = _cv_lambda(*_xy(T2))

    per_rho: list[PerRho] = []
    for rho_idx, rho in enumerate(config.ratio_set):
        errors: list[float] = []
        gaps: list[float] = []
        for k in range(config.iterations):
            # one stream per (seed, ratio, iteration); draw order is fixed:
            # S1 subset, S2 subset, T2 validation split, T1 validation split
            rng = np.random.default_rng((config.seed, rho_idx, k))
            take1 = max(1, int(math.floor(rho * S1.n_rows)))
            take2 = max(1, int(math.floor(rho * S2.n_rows)))
            sub1 = _subset(S1, rng.choice(S1.n_rows, size=take1, replace=False))
            sub2 = _subset(S2, rng.choice(S2.n_rows, size=take2, replace=False))
            batch1 = _subset(sub1, np.arange(min(config.batch_size, sub1.n_rows)))
            batch2 = _subset(sub2, np.arange(min(config.batch_size, sub2.n_rows)))

            def adapt(target: DataMatrix, batch: DataMatrix, lam: float):
                n = target.n_rows
                n_val = max(1, n // 5)
                perm = rng.permutation(n)
                holdout = _subset(target, perm[:n_val])
                fit = two_step_transfer_fit(_subset(target, perm[n_val:]), [batch], family, lam=lam)
                val = evaluate(fit, holdout.predictors, holdout.response)
                return fit, val.mse

            f_1_2, val_1_2 = adapt(T2, batch1, lam_t2)
            f_2_1, val_2_1 = adapt(T1, batch2, lam_t1)
            threshold = config.validation_factor * baseline_error
            if val_1_2 > threshold or val_2_1 > threshold:
                continue
            combined = 0.5 * (predict(f_1_2, X_test) + predict(f_2_1, X_test))
            errors.append(float(np.mean((combined - y_test) ** 2)))
            gaps.append(_coefficient_gap(f_1_2, f_2_1))
        per_rho.append(
            PerRho(
                rho=rho,
                mean_error=float(np.mean(errors)) if errors else float("nan"),
                mean_adaptability=float(np.mean(gaps)) if gaps else float("nan"),
                n_valid_iterations=len(errors),
                errors=errors,
                adaptabilities=gaps,
            )
        )
    valid = [e for e in per_rho if e.n_valid_iterations >= 1]
    if not valid:
        raise SelectionFailure("no ratio produced a valid iteration")
    rho_star = min(valid, key=lambda e: e.mean_error).rho
    return SelectReport(rho_star=rho_star, per_rho=per_rho, baseline_error=baseline_error)


def filter_candidates(
    originals: SampleSet,
    candidates: SampleSet,
    metric: str = "wasserstein",
    policy: FilterPolicy | None = None,
    pairing: np.ndarray | None = None,
    bins: int = 32,
    n_projections: int = 64,
    seed: int = 0,
    knn_k: int = 10,
) -> FilterReport:
    """Score each candidate against the original sample and keep the closest.

    wasserstein with a pairing compares each candidate's coordinates to its
    paired original's coordinates; without a pairing the score is the mean
    Euclidean distance to the nearest originals.  mmd and tv score the
    increase caused by adding the candidate to the original set.  The
    quantile policy keeps ceil(q*N) smallest; ties break toward the lower
    index via stable ordering.
    """
    if policy is None:
        policy = FilterPolicy("quantile", 1.0)
    if originals.q != candidates.q:
        raise ValueError("originals and candidates must share feature dimension")
    if metric not in ("wasserstein", "mmd", "tv"):
        raise ValueError(f"unknown metric {metric!r}")
    n_cand = candidates.m
    distances = np.zeros(n_cand)
    if metric == "wasserstein":
        if pairing is not None:
            pairing = np.asarray(pairing, dtype=np.intp)
            if pairing.shape != (n_cand,):
                raise ValueError("pairing must give one original index per candidate")
            for i in range(n_cand):
                distances[i] = w1_1d(candidates.points[i], originals.points[pairing[i]])
        else:
            k = min(knn_k, originals.m)
            all_d = cdist(candidates.points, originals.points)
            part = np.partition(all_d, k - 1, axis=1)[:, :k]
            distances = part.mean(axis=1)
    elif metric == "mmd":
        bw = median_bandwidth(originals.points)
        base = mmd(originals.points, originals.points, bandwidth=bw, estimator="biased")
        for i in range(n_cand):
            grown = np.vstack([originals.points, candidates.points[i : i + 1]])
            distances[i] = mmd(originals.points, grown, bandwidth=bw, estimator="biased") - base
    else:
        base = tv_hist(originals.points, originals.points, bins, n_projections, seed)
        for i in range(n_cand):
            grown = np.vstack([originals.points, candidates.points[i : i + 1]])
            distances[i] = tv_hist(originals.points, grown, bins, n_projections, seed) - base
    if policy.kind == "quantile":
        n_keep = math.ceil(policy.value * n_cand)
        order = np.argsort(distances, kind="stable")
        retained = sorted(int(i) for i in order[:n_keep])
    else:
        retained = [int(i) for i in range(n_cand) if distances[i] <= policy.value]
    return FilterReport(
        retained_indices=retained,
        distances=[float(d) for d in distances],
        policy=policy,
        metric=metric,
    )


def augment(original, retained):
    """Concatenate originals first, then retained candidates, with provenance.

    Returns (combined, provenance) where provenance is a boolean array with
    True marking rows/images that came from the original set.
    """
    if isinstance(original, DataMatrix):
        if not isinstance(retained, DataMatrix):
            if retained is None or (hasattr(retained, "__len__") and len(retained) == 0):
                flags = np.ones(original.n_rows, dtype=bool)
                return original, flags
            raise ValueError("schema mismatch: expected a table of retained rows")
        if retained.n_cols != original.n_cols or retained.response_col != original.response_col:
            raise ValueError("schema mismatch between original and retained tables")
        combined = DataMatrix(
            np.vstack([original.values, retained.values]),
            original.response_col,
            original.column_names,
        )
        flags = np.concatenate(
            [np.ones(original.n_rows, dtype=bool), np.zeros(retained.n_rows, dtype=bool)]
        )
        return combined, flags
    originals = list(original)
    extras = list(retained) if retained is not None else []
    if not originals:
        raise ValueError("original image list must be non-empty")
    dims = (originals[0].height, originals[0].width)
    for img in originals + extras:
        if not isinstance(img, GrayImage) or (img.height, img.width) != dims:
            raise ValueError("schema mismatch: image dimensions differ")
    flags = np.concatenate([np.ones(len(originals), dtype=bool), np.zeros(len(extras), dtype=bool)])
    return originals + extras, flags
