"""Command-line entry point.

Subcommands cover the individual pipeline stages plus the full run.  Every
command takes a JSON config file mirroring the run-config field names;
flags override the seed, output directory, and generator selection.  Exit
codes: 0 success, 2 config error, 3 generator unreachable, 4 empty
filtered pool across all requested sizes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from augmentor.bound import LossSpec, theorem_bound_check
from augmentor.codec import decode, encode, read_png, write_png
from augmentor.distances import SampleSet
from augmentor.filters import SelectionFailure
from augmentor.generators import GeneratorUnreachableError
from augmentor.harness import (
    STREAM_TEST_SPLIT,
    ConfigError,
    RunConfig,
    _distance_filter,
    _fit_model,
    _generate_pool,
    _load_data,
    _make_generator,
    _transfer_filter,
    emit_curve,
    partition,
    run_pipeline,
)
from augmentor.models import evaluate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3
EXIT_EMPTY_POOL = 4


def _write_table_csv(data, path: Path) -> None:
    names = data.column_names or tuple(f"col{j}" for j in range(data.n_cols))
    header = ",".join(names)
    rows = [",".join(format(v, ".9g") for v in row) for row in data.values]
    path.write_bytes(("\n".join([header] + rows) + "\n").encode())


def _load_config(args) -> RunConfig:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    config = RunConfig.from_dict(raw)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = str(args.out)
    if args.generator is not None:
        config.generator = dict(config.generator)
        config.generator["kind"] = args.generator
    if args.endpoint is not None:
        config.generator = dict(config.generator)
        config.generator["endpoint"] = args.endpoint
    return config


def _out_dir(config: RunConfig) -> Path:
    if not config.output_dir:
        raise ConfigError("this command needs an output directory (--out)")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(config: RunConfig) -> int:
    out = _out_dir(config)
    _write_table_csv(_load_data(config), out / "data.csv")
    return EXIT_OK


def _cmd_encode(config: RunConfig) -> int:
    out = _out_dir(config)
    data = _load_data(config)
    image, manifest = encode(
        data,
        mapping_kind=config.mapping.get("mapping_kind", "exponential"),
        exp_coefficient=config.mapping.get("exp_coefficient", 0.05),
        quantization_bits=config.mapping.get("quantization_bits", 8),
    )
    write_png(image, manifest, out / "encoded.png")
    return EXIT_OK


def _cmd_decode(config: RunConfig) -> int:
    out = _out_dir(config)
    image_path = out / "encoded.png"
    if not image_path.exists():
        raise ConfigError(f"no encoded image at {image_path}; run encode first")
    image, manifest = read_png(image_path)
    _write_table_csv(decode(image, manifest), out / "decoded.csv")
    return EXIT_OK


def _pool_from_config(config: RunConfig, keep_artifacts: bool):
    data = _load_data(config)
    work, _ = partition(data, 0.8, (config.seed, STREAM_TEST_SPLIT), shuffle=True)
    encode_half, _ = partition(work, 0.5)
    generator = _make_generator(config)
    keep_dir = None
    if keep_artifacts:
        keep_dir = _out_dir(config) / "artifacts"
        keep_dir.mkdir(parents=True, exist_ok=True)
    pool, image, manifest = _generate_pool(config, encode_half, generator, keep_dir)
    return work, encode_half, pool, image, manifest


def _cmd_generate(config: RunConfig, keep_artifacts: bool) -> int:
    out = _out_dir(config)
    _, _, pool, image, manifest = _pool_from_config(config, keep_artifacts)
    write_png(image, manifest, out / "encoded.png")
    _write_table_csv(pool, out / "pool.csv")
    return EXIT_OK


def _cmd_filter(config: RunConfig) -> int:
    out = _out_dir(config)
    work, encode_half, pool, _, _ = _pool_from_config(config, keep_artifacts=False)
    if config.filter.get("kind", "transfer") == "transfer":
        retained, reports = _transfer_filter(config, work, pool)
    else:
        retained, reports = _distance_filter(config, work, pool, encode_half.n_rows)
    (out / "filter_report.json").write_text(
        json.dumps(reports, indent=2, sort_keys=True) + "\n"
    )
    if retained is None or retained.n_rows == 0:
        return EXIT_EMPTY_POOL
    _write_table_csv(retained, out / "retained.csv")
    return EXIT_OK


def _cmd_evaluate(config: RunConfig) -> int:
    out = _out_dir(config)
    data = _load_data(config)
    work, test = partition(data, 0.8, (config.seed, STREAM_TEST_SPLIT), shuffle=True)
    fit = _fit_model(config.model, work.predictors, work.response)
    result = evaluate(fit, test.predictors, test.response)
    payload = {"model": config.model, "mse": result.mse, "n_eval": result.n_eval}
    if result.misclassification_rate is not None:
        payload["misclassification"] = result.misclassification_rate
    (out / "evaluation.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_pipeline(config: RunConfig, keep_artifacts: bool) -> int:
    manifest = run_pipeline(config, keep_artifacts=keep_artifacts)
    if config.output_dir:
        emit_curve(manifest, Path(config.output_dir) / "curve.csv")
    sized = [entry for entry in manifest.per_size_curve if entry[0] > 0]
    if sized and all(entry[1] is None for entry in sized):
        return EXIT_EMPTY_POOL
    return EXIT_OK


def _cmd_bound_check(config: RunConfig) -> int:
    # compare the held-back originals' response distribution against the
    # synthetic pool's, under a clipped absolute loss on the response scale
    out = _out_dir(config)
    work, _, pool, _, _ = _pool_from_config(config, keep_artifacts=False)
    real = SampleSet(work.response)
    synth = SampleSet(pool.response)
    scale = max(1.0, float(np.abs(work.response).max()))
    loss = LossSpec("absolute_linear", 2.0 * scale, (1.0, 0.0))
    grid = [loss, LossSpec("absolute_linear", 2.0 * scale, (0.5, 0.0))]
    report = theorem_bound_check(real, synth, loss, grid, delta=0.05, seed=config.seed)
    (out / "bound_report.json").write_text(report.to_json() + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="augmentor",
        description="tabular-to-image augmentation pipeline",
    )
    parser.add_argument(
        "command",
        choices=[
            "simulate", "encode", "decode", "generate",
            "filter", "evaluate", "pipeline", "bound-check",
        ],
    )
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--keep-artifacts", action="store_true")
    parser.add_argument("--generator", choices=["surrogate", "remote"], default=None)
    parser.add_argument("--endpoint", default=None)
    args = parser.parse_args(argv)

    try:
        config = _load_config(args)
        if args.command == "simulate":
            return _cmd_simulate(config)
        if args.command == "encode":
            return _cmd_encode(config)
        if args.command == "decode":
            return _cmd_decode(config)
        if args.command == "generate":
            return _cmd_generate(config, args.keep_artifacts)
        if args.command == "filter":
            return _cmd_filter(config)
        if args.command == "evaluate":
            return _cmd_evaluate(config)
        if args.command == "pipeline":
            return _cmd_pipeline(config, args.keep_artifacts)
        return _cmd_bound_check(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeneratorUnreachableError as exc:
        print(f"generator unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except SelectionFailure as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return EXIT_EMPTY_POOL


if __name__ == "__main__":
    sys.exit(main())
