"""Synthetic tabular data augmentation toolkit.

Encodes numeric tables as grayscale images, sweeps an image-to-image
generator over a strength grid, decodes the outputs back into candidate
rows, filters the candidates with two-sample statistics or transfer-based
selection, and measures the effect on downstream GLM error.
"""

from augmentor.bound import (
    BoundReport,
    LossSpec,
    duality_gap_check,
    rademacher_estimate,
    theorem_bound_check,
)
from augmentor.codec import (
    CodecManifest,
    DataMatrix,
    GrayImage,
    binarize_response,
    decode,
    decode_with_stats,
    encode,
    partition,
    read_png,
    write_png,
)
from augmentor.distances import (
    FeatureExtractor,
    FeatureSpec,
    SampleSet,
    extract_features,
    mean_projection_factor,
    median_bandwidth,
    mmd,
    nearest_downsample,
    sliced_w1,
    tv_hist,
    w1_1d,
)
from augmentor.filters import (
    FilterPolicy,
    FilterReport,
    SelectionFailure,
    SelectReport,
    TransferConfig,
    augment,
    detect_transferable,
    dual_source_select,
    filter_candidates,
    two_step_transfer_fit,
)
from augmentor.generators import (
    DimensionMismatchError,
    GeneratorUnreachableError,
    GenRequest,
    GenResult,
    MalformedResponseError,
    RemoteGenerator,
    SurrogateGenerator,
    strength_grid,
)
from augmentor.harness import (
    ConfigError,
    RunConfig,
    RunManifest,
    emit_curve,
    load_csv,
    run_pipeline,
    simulate_linear,
    simulate_logistic,
)
from augmentor.models import (
    FitResult,
    Metrics,
    evaluate,
    fit_lasso,
    fit_lasso_cv,
    fit_logistic,
    fit_ols,
    lambda_max,
    lasso_kkt_violation,
    logistic_kkt_violation,
    predict,
)

__all__ = [
    "BoundReport",
    "CodecManifest",
    "ConfigError",
    "DataMatrix",
    "DimensionMismatchError",
    "FeatureExtractor",
    "FeatureSpec",
    "FilterPolicy",
    "FilterReport",
    "FitResult",
    "GenRequest",
    "GenResult",
    "GeneratorUnreachableError",
    "GrayImage",
    "MalformedResponseError",
    "Metrics",
    "RemoteGenerator",
    "RunConfig",
    "RunManifest",
    "SampleSet",
    "SelectReport",
    "SelectionFailure",
    "SurrogateGenerator",
    "TransferConfig",
    "augment",
    "binarize_response",
    "decode",
    "decode_with_stats",
    "detect_transferable",
    "duality_gap_check",
    "dual_source_select",
    "emit_curve",
    "encode",
    "evaluate",
    "extract_features",
    "filter_candidates",
    "fit_lasso",
    "fit_lasso_cv",
    "fit_logistic",
    "fit_ols",
    "lambda_max",
    "lasso_kkt_violation",
    "load_csv",
    "logistic_kkt_violation",
    "mean_projection_factor",
    "median_bandwidth",
    "mmd",
    "nearest_downsample",
    "partition",
    "predict",
    "rademacher_estimate",
    "read_png",
    "run_pipeline",
    "simulate_linear",
    "simulate_logistic",
    "sliced_w1",
    "strength_grid",
    "theorem_bound_check",
    "tv_hist",
    "two_step_transfer_fit",
    "w1_1d",
    "write_png",
]
