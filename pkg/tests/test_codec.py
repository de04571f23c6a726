"""Round-trip, quantization-bound, and edge-case tests for the codec."""

import math

import numpy as np
import pytest

from augmentor.codec import (
    CodecManifest,
    DataMatrix,
    GrayImage,
    binarize_response,
    decode,
    decode_with_stats,
    encode,
    from_u8,
    manifest_path_for,
    partition,
    read_png,
    to_u8,
    write_png,
)


def random_matrix(rng, low=-50.0, high=50.0):
    n = int(rng.integers(1, 31))
    c = int(rng.integers(2, 9))
    return DataMatrix(rng.uniform(low, high, size=(n, c)))


def test_round_trip_unquantized_both_mappings():
    rng = np.random.default_rng(7)
    worst = 0.0
    for case in range(1000):
        mapping = "exponential" if case % 2 == 0 else "minmax"
        data = random_matrix(rng)
        image, manifest = encode(data, mapping, quantization_bits=0)
        back = decode(image, manifest)
        worst = max(worst, float(np.abs(back.values - data.values).max()))
    assert worst <= 1e-9


def test_quantized_round_trip_per_entry_bound():
    rng = np.random.default_rng(11)
    for case in range(200):
        mapping = "exponential" if case % 2 == 0 else "minmax"
        data = random_matrix(rng)
        image, manifest = encode(data, mapping, quantization_bits=8)
        back = decode(image, manifest)
        err = np.abs(back.values - data.values)
        col_min = np.array([lo for lo, _ in manifest.per_column])
        col_max = np.array([hi for _, hi in manifest.per_column])
        span = (col_max - col_min)[None, :]
        if mapping == "minmax":
            bound = span / 255.0
        else:
            a = manifest.exp_coefficient
            w_true = np.exp(a * data.values)
            w_dec = np.exp(a * back.values)
            # mean value theorem on ln: |dv| <= |dw| / (a * min(w))
            bound = (span / 255.0) / (a * np.minimum(w_true, w_dec))
        assert np.all(err <= bound * (1 + 1e-9) + 1e-12)


def test_encode_monotone_within_columns():
    rng = np.random.default_rng(3)
    for _ in range(50):
        data = random_matrix(rng)
        for mapping in ("exponential", "minmax"):
            image, _ = encode(data, mapping, quantization_bits=0)
            order_in = np.argsort(data.values, axis=0, kind="stable")
            order_out = np.argsort(image.pixels, axis=0, kind="stable")
            assert np.array_equal(order_in, order_out)


def test_exponential_column_0_20_maps_to_endpoints():
    data = DataMatrix(np.array([[0.0, 1.0], [20.0, 2.0]]))
    image, manifest = encode(data, "exponential", 0.05, quantization_bits=0)
    np.testing.assert_allclose(image.pixels[:, 0], [0.0, 1.0], atol=1e-15)
    lo, hi = manifest.per_column[0]
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(math.e)


def test_constant_column_encodes_to_half_and_decodes_exactly():
    data = DataMatrix(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]]))
    for mapping in ("exponential", "minmax"):
        image, manifest = encode(data, mapping, quantization_bits=0)
        np.testing.assert_array_equal(image.pixels[:, 0], [0.5, 0.5, 0.5])
        lo, hi = manifest.per_column[0]
        assert lo == hi
        back = decode(image, manifest)
        np.testing.assert_allclose(back.values[:, 0], 3.0, atol=1e-12)


def test_minmax_column_1_2_4():
    data = DataMatrix(np.array([[1.0, 0.0], [2.0, 0.5], [4.0, 1.0]]))
    image, _ = encode(data, "minmax", quantization_bits=0)
    np.testing.assert_allclose(image.pixels[:, 0], [0.0, 1.0 / 3.0, 1.0], atol=1e-15)


def test_decode_pixel_one_exponential_analytic():
    manifest = CodecManifest(
        mapping_kind="exponential",
        exp_coefficient=0.05,
        per_column=[(1.0, math.e), (0.0, 1.0)],
        quantization_bits=0,
        rows=1,
        cols=2,
        response_col=1,
    )
    image = GrayImage(np.array([[1.0, 0.0]]))
    back = decode(image, manifest)
    assert back.values[0, 0] == pytest.approx(20.0, abs=1e-12)


def test_decode_log_underflow_clamps_and_counts():
    manifest = CodecManifest(
        mapping_kind="exponential",
        exp_coefficient=0.05,
        per_column=[(-1.0, 1.0), (0.5, 1.5)],
        quantization_bits=0,
        rows=1,
        cols=2,
        response_col=1,
    )
    image = GrayImage(np.array([[0.2, 0.2]]))
    back, warnings = decode_with_stats(image, manifest)
    assert warnings == 1
    assert np.all(np.isfinite(back.values))
    # clamped cell decodes from the tiniest positive pre-image
    expected = math.log(np.finfo(np.float64).tiny) / 0.05
    assert back.values[0, 0] == pytest.approx(expected)


def test_exponential_overflow_rejected():
    data = DataMatrix(np.array([[20000.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        encode(data, "exponential", 0.05)


def test_partition_literal_bisection_and_sizes():
    data = DataMatrix(np.arange(200.0).reshape(100, 2))
    v1, v2 = partition(data, 0.5, shuffle=False)
    assert v1.n_rows == 50 and v2.n_rows == 50
    np.testing.assert_array_equal(v1.values, data.values[:50])
    np.testing.assert_array_equal(v2.values, data.values[50:])


def test_partition_floor_sizes_small_n():
    data = DataMatrix(np.arange(6.0).reshape(3, 2))
    v1, v2 = partition(data, 0.5)
    assert v1.n_rows == 1 and v2.n_rows == 2


def test_partition_shuffle_deterministic_and_conserves_rows():
    rng = np.random.default_rng(5)
    data = DataMatrix(rng.normal(size=(37, 4)))
    a1, b1 = partition(data, 0.4, seed=99, shuffle=True)
    a2, b2 = partition(data, 0.4, seed=99, shuffle=True)
    np.testing.assert_array_equal(a1.values, a2.values)
    np.testing.assert_array_equal(b1.values, b2.values)
    combined = np.vstack([a1.values, b1.values])
    key = np.lexsort(combined.T)
    key0 = np.lexsort(data.values.T)
    np.testing.assert_array_equal(combined[key], data.values[key0])


def test_partition_rejects_empty_part():
    data = DataMatrix(np.arange(4.0).reshape(2, 2))
    with pytest.raises(ValueError):
        partition(data, 0.01)
    with pytest.raises(ValueError):
        partition(data, 1.0)


def test_binarize_strict_threshold():
    data = DataMatrix(np.array([[1.0, 0.7], [2.0, 0.5], [3.0, 0.0]]))
    out = binarize_response(data, 0.5)
    np.testing.assert_array_equal(out.response, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(out.predictors, data.predictors)


def test_binarize_rejects_out_of_range_response():
    data = DataMatrix(np.array([[1.0, 1.4], [2.0, 0.2]]))
    with pytest.raises(ValueError):
        binarize_response(data, 0.5)


def test_png_round_trip_preserves_bytes_and_manifest(tmp_path):
    rng = np.random.default_rng(21)
    data = DataMatrix(rng.uniform(-10, 10, size=(16, 5)))
    image, manifest = encode(data, "exponential", quantization_bits=8)
    path = tmp_path / "grid.png"
    sidecar = write_png(image, manifest, path)
    assert sidecar == manifest_path_for(path)
    image2, manifest2 = read_png(path)
    np.testing.assert_array_equal(to_u8(image.pixels), to_u8(image2.pixels))
    assert manifest2.to_json() == manifest.to_json()
    back = decode(image2, manifest2)
    a = manifest.exp_coefficient
    col_min = np.array([lo for lo, _ in manifest.per_column])
    col_max = np.array([hi for _, hi in manifest.per_column])
    span = (col_max - col_min)[None, :]
    w_true = np.exp(a * data.values)
    w_dec = np.exp(a * back.values)
    bound = (span / 255.0) / (a * np.minimum(w_true, w_dec))
    assert np.all(np.abs(back.values - data.values) <= bound * (1 + 1e-9) + 1e-12)


def test_u8_helpers_round_half_up_to_even_grid():
    pixels = np.array([[0.0, 0.5, 1.0], [0.002, 0.998, 0.25]])
    raw = to_u8(pixels)
    assert raw.dtype == np.uint8
    np.testing.assert_array_equal(raw[0], [0, 128, 255])
    recovered = from_u8(raw)
    assert np.abs(recovered - np.clip(pixels, 0, 1)).max() <= 0.5 / 255 + 1e-12


def test_decode_rejects_layout_mismatch():
    data = DataMatrix(np.arange(8.0).reshape(4, 2))
    image, manifest = encode(data, "minmax", quantization_bits=0)
    wrong = GrayImage(image.pixels[:2])
    with pytest.raises(ValueError):
        decode(wrong, manifest)
