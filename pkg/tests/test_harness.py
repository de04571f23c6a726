"""Simulation sources, pipeline wiring, artifact formats, and CLI exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from augmentor.cli import main as cli_main
from augmentor.codec import partition
from augmentor.harness import (
    STREAM_TEST_SPLIT,
    ConfigError,
    RunConfig,
    RunManifest,
    emit_curve,
    load_csv,
    run_pipeline,
    simulate_linear,
    simulate_logistic,
)
from augmentor.models import fit_ols, predict

BETA = [2.0, -1.0, 0.5]


def small_config(tmp=None, **overrides):
    base = dict(
        data_source={"kind": "simulate_linear", "n": 100, "p": 3, "beta": BETA},
        strength_grid=(0.01, 0.05, 0.01),
        filter={"kind": "transfer", "ratio_set": [0.5, 1.0], "batch_size": 60,
                "iterations": 8},
        repetitions=3,
        augmentation_sizes=[0, 30],
        seed=17,
        output_dir=str(tmp) if tmp is not None else None,
    )
    base.update(overrides)
    return RunConfig(**base)


# --------------------------------------------------------------- simulation


def test_simulate_linear_shape_and_determinism():
    a = simulate_linear(100, 3, BETA, seed=4)
    b = simulate_linear(100, 3, BETA, seed=4)
    c = simulate_linear(100, 3, BETA, seed=5)
    assert a.values.shape == (100, 4)
    assert a.column_names == ("x1", "x2", "x3", "y")
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_simulate_linear_noiseless_interpolates():
    data = simulate_linear(50, 3, BETA, noise_sd=0.0, seed=1)
    fit = fit_ols(data.predictors, data.response)
    resid = data.response - predict(fit, data.predictors)
    assert np.abs(resid).max() <= 1e-10


def test_simulate_linear_rejects_wrong_beta_length():
    with pytest.raises(ValueError):
        simulate_linear(10, 3, [1.0, 2.0], seed=0)


def test_simulate_logistic_balanced_at_zero_beta():
    n = 4000
    data = simulate_logistic(n, 3, np.zeros(3), seed=8)
    assert set(np.unique(data.response)) <= {0.0, 1.0}
    assert abs(data.response.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_simulate_logistic_saturates_at_large_norm():
    # mismatch against the hard threshold scales like 1/||beta||; the 1e-3
    # rate pinned for the saturation check is reached at norm 1e3
    n = 200000
    beta = np.array([1000.0, 0.0, 0.0])
    data = simulate_logistic(n, 3, beta, seed=0)
    hard = (data.predictors @ beta > 0).astype(float)
    assert np.mean(hard != data.response) <= 1e-3
    beta_small = np.array([100.0, 0.0, 0.0])
    data_small = simulate_logistic(n, 3, beta_small, seed=0)
    hard_small = (data_small.predictors @ beta_small > 0).astype(float)
    assert 0.004 <= np.mean(hard_small != data_small.response) <= 0.008


# ------------------------------------------------------------ configuration


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(repetitions=0)
    with pytest.raises(ConfigError):
        small_config(augmentation_sizes=[])
    with pytest.raises(ConfigError):
        small_config(augmentation_sizes=[40, 20])
    with pytest.raises(ConfigError):
        small_config(augmentation_sizes=[-1, 5])
    with pytest.raises(ConfigError):
        small_config(model="tree")
    with pytest.raises(ConfigError):
        small_config(generator={"kind": "local"})
    with pytest.raises(ConfigError):
        small_config(filter={"kind": "prune"})


def test_config_from_dict_rejects_unknown_and_missing_fields():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": "lasso"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict(
            {"data_source": {"kind": "simulate_linear", "n": 10, "p": 3, "beta": BETA},
             "typo_field": 1}
        )


def test_load_csv_round_trip(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("a,b,y\n1,2,3\n4,5,6\n")
    data = load_csv(path)
    assert data.column_names == ("a", "b", "y")
    assert data.response_col == 2
    assert data.values.tolist() == [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,x\n")
    with pytest.raises(ConfigError):
        load_csv(bad)


# ------------------------------------------------------------- pipeline runs


def test_size_zero_curve_point_equals_baseline():
    manifest = run_pipeline(small_config(augmentation_sizes=[0]))
    assert len(manifest.per_size_curve) == 1
    size, mean, std = manifest.per_size_curve[0]
    assert size == 0
    assert abs(mean - manifest.baseline_error) <= 1e-12
    assert std <= 1e-12


def test_pipeline_reruns_identically_except_wall_clock():
    dicts = []
    for _ in range(2):
        manifest = run_pipeline(small_config())
        d = manifest.to_dict()
        assert d.pop("wall_clock_seconds") >= 0.0
        dicts.append(json.dumps(d, sort_keys=True))
    assert dicts[0] == dicts[1]


def test_curve_length_matches_sizes():
    manifest = run_pipeline(small_config(augmentation_sizes=[0, 10, 20, 30]))
    assert [entry[0] for entry in manifest.per_size_curve] == [0, 10, 20, 30]


def test_test_rows_never_reach_pipeline_inputs():
    # the held-out rows must be disjoint from everything the pipeline fits,
    # encodes, or filters; the work split is the only upstream input
    config = small_config()
    data = simulate_linear(100, 3, BETA, seed=config.seed)
    work, test = partition(data, 0.8, (config.seed, STREAM_TEST_SPLIT), shuffle=True)
    work_rows = {tuple(row) for row in work.values}
    test_rows = {tuple(row) for row in test.values}
    assert not work_rows & test_rows
    encode_half, _ = partition(work, 0.5)
    assert {tuple(row) for row in encode_half.values} <= work_rows


def test_empty_filtered_pool_flags_null_and_continues():
    config = small_config(
        filter={"kind": "distance", "metric": "wasserstein",
                "policy": {"kind": "absolute", "value": 0.0}},
        augmentation_sizes=[0, 25],
    )
    manifest = run_pipeline(config)
    assert manifest.reports["retained_rows"] == 0
    by_size = {entry[0]: entry for entry in manifest.per_size_curve}
    assert by_size[0][1] == pytest.approx(manifest.baseline_error, abs=1e-12)
    assert by_size[25][1] is None and by_size[25][2] is None


def test_oversized_draw_caps_at_pool_with_warning():
    config = small_config(
        filter={"kind": "distance", "metric": "wasserstein",
                "policy": {"kind": "quantile", "value": 0.1}},
        augmentation_sizes=[0, 100000],
        repetitions=2,
    )
    with pytest.warns(UserWarning, match="capped"):
        manifest = run_pipeline(config)
    assert manifest.per_size_curve[1][1] is not None


def test_transfer_report_embedded_in_manifest():
    manifest = run_pipeline(small_config())
    select = manifest.reports["select"]
    assert select["rho_star"] in (0.5, 1.0)
    assert manifest.reports["retained_rows"] >= 1


# ----------------------------------------------------------------- artifacts


def test_emit_curve_format_and_reemission(tmp_path):
    manifest = RunManifest(
        config_echo={},
        per_size_curve=[(0, 1.0, 0.0), (10, 0.987654321987, 0.01), (20, None, None)],
        baseline_error=1.0,
        reports={},
        wall_clock_seconds=0.5,
    )
    path = tmp_path / "curve.csv"
    emit_curve(manifest, path)
    first = path.read_bytes()
    emit_curve(manifest, path)
    assert path.read_bytes() == first
    assert b"\r" not in first
    lines = first.decode().splitlines()
    assert lines[0] == "size,mean_error,std_error,baseline"
    assert len(lines) == 4
    assert lines[1] == "0,1,0,1"
    assert lines[2] == "10,0.987654322,0.01,1"
    assert lines[3] == "20,nan,nan,1"


def test_pipeline_writes_manifest_and_curve(tmp_path):
    run_pipeline(small_config(tmp_path))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["version"] == "0.1.0"
    assert (tmp_path / "curve.csv").exists()


def test_keep_artifacts_writes_pngs(tmp_path):
    run_pipeline(small_config(tmp_path), keep_artifacts=True)
    art = tmp_path / "artifacts"
    generated = sorted(art.glob("generated_*.png"))
    assert len(generated) == 5  # grid (0.01, 0.05, 0.01)
    assert (art / "encoded.png").exists()
    assert (art / "encoded.png.manifest.json").exists()


# ----------------------------------------------------------------------- CLI


def write_config(tmp_path, **overrides):
    raw = {
        "data_source": {"kind": "simulate_linear", "n": 100, "p": 3, "beta": BETA},
        "strength_grid": [0.01, 0.05, 0.01],
        "filter": {"kind": "transfer", "ratio_set": [0.5, 1.0], "batch_size": 60,
                   "iterations": 8},
        "repetitions": 2,
        "augmentation_sizes": [0, 20],
        "seed": 3,
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_pipeline_success(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert cli_main(["pipeline", "--config", config, "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    assert (out / "curve.csv").exists()


def test_cli_stage_commands(tmp_path):
    config = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert cli_main(["simulate", "--config", config, "--out", out]) == 0
    assert cli_main(["encode", "--config", config, "--out", out]) == 0
    assert cli_main(["decode", "--config", config, "--out", out]) == 0
    assert cli_main(["generate", "--config", config, "--out", out]) == 0
    assert cli_main(["filter", "--config", config, "--out", out]) == 0
    assert cli_main(["evaluate", "--config", config, "--out", out]) == 0
    assert cli_main(["bound-check", "--config", config, "--out", out]) == 0
    for name in ("data.csv", "encoded.png", "decoded.csv", "pool.csv",
                 "retained.csv", "evaluation.json", "bound_report.json"):
        assert (Path(out) / name).exists(), name


def test_cli_config_errors_exit_2(tmp_path):
    missing = str(tmp_path / "nope.json")
    assert cli_main(["pipeline", "--config", missing]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli_main(["pipeline", "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"data_source": {"kind": "nope"}}))
    assert cli_main(["pipeline", "--config", str(unknown)]) == 2


def test_cli_unreachable_generator_exits_3(tmp_path):
    config = write_config(tmp_path)
    code = cli_main([
        "pipeline", "--config", config, "--out", str(tmp_path / "r"),
        "--generator", "remote", "--endpoint", "http://127.0.0.1:9",
    ])
    assert code == 3


def test_cli_empty_pool_exits_4(tmp_path):
    config = write_config(
        tmp_path,
        filter={"kind": "distance", "metric": "wasserstein",
                "policy": {"kind": "absolute", "value": 0.0}},
    )
    code = cli_main(["pipeline", "--config", config, "--out", str(tmp_path / "r")])
    assert code == 4


def test_cli_seed_override_changes_output(tmp_path):
    config = write_config(tmp_path)
    outs = []
    for seed in ("5", "5", "6"):
        out = tmp_path / f"run_{len(outs)}"
        assert cli_main(["pipeline", "--config", config, "--out", str(out),
                         "--seed", seed]) == 0
        data = json.loads((out / "manifest.json").read_text())
        data.pop("wall_clock_seconds")
        data["config_echo"].pop("output_dir")
        outs.append(json.dumps(data, sort_keys=True))
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]
