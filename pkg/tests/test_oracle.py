import numpy as np
import pytest

from rainopt import (
    NoiseModel,
    Point,
    StochasticOracle,
    anchor_push,
    gen_scsc_quadratic,
    op_eval,
    oracle_eval,
    sfo_count,
    split_stream,
)


@pytest.fixture(scope="module")
def problem():
    return gen_scsc_quadratic(2, 2, 1.0, 4.0, 100)


def test_noise_model_validation():
    assert NoiseModel(0.0).sigma == 0.0
    with pytest.raises(ValueError):
        NoiseModel(-0.5)
    with pytest.raises(ValueError):
        NoiseModel(1.0, kind="uniform-box")


def test_sigma_zero_is_exact_and_counted(problem):
    oracle = StochasticOracle(NoiseModel(0.0), split_stream(1, 0))
    z = Point(np.array([0.5, -1.0, 2.0, 0.0]), 2)
    exact = op_eval(problem, z)
    assert sfo_count(oracle) == 0
    for k in range(5):
        np.testing.assert_array_equal(oracle_eval(oracle, problem, z), exact)
        assert sfo_count(oracle) == k + 1


def test_one_call_path_equals_block_path_bitwise(problem):
    z = Point(np.zeros(4), 2)
    exact = op_eval(problem, z)
    a = StochasticOracle(NoiseModel(1.3), split_stream(2, 5))
    b = StochasticOracle(NoiseModel(1.3), split_stream(2, 5))
    singles = np.array([oracle_eval(a, problem, z) for _ in range(200)])
    block = exact + b.noise_block(200, 4)
    np.testing.assert_array_equal(singles, block)
    assert sfo_count(a) == sfo_count(b) == 200


def test_unbiasedness_one_million(problem):
    # per-coordinate sd is 0.5 at sigma = 1, d = 4; tolerance 4e-3 is 8
    # standard errors of the mean at n = 1e6
    z = Point(np.zeros(4), 2)
    oracle = StochasticOracle(NoiseModel(1.0), split_stream(3, 0))
    noise = oracle.noise_block(1_000_000, 4)
    assert float(np.abs(noise.mean(axis=0)).max()) <= 4e-3
    assert sfo_count(oracle) == 1_000_000


def test_variance_one_million():
    oracle = StochasticOracle(NoiseModel(1.0), split_stream(4, 0))
    noise = oracle.noise_block(1_000_000, 4)
    energy = float((noise**2).sum(axis=1).mean())
    assert abs(energy - 1.0) <= 1e-2
    assert energy <= 1.0 * 1.01


def test_noise_energy_scales_with_sigma():
    oracle = StochasticOracle(NoiseModel(2.0), split_stream(5, 0))
    noise = oracle.noise_block(200_000, 8)
    energy = float((noise**2).sum(axis=1).mean())
    assert energy == pytest.approx(4.0, rel=0.02)


def test_noise_is_independent_of_anchoring(problem):
    # anchored evaluations add their regularization terms exactly: the
    # deviation from the exact operator is the same noise the base problem
    # sees from the same stream state
    anchored = anchor_push(problem, 2.0, Point(np.ones(4), 2))
    z = Point(np.array([1.0, -2.0, 0.5, 3.0]), 2)
    a = StochasticOracle(NoiseModel(0.8), split_stream(6, 1))
    b = StochasticOracle(NoiseModel(0.8), split_stream(6, 1))
    noise_base = oracle_eval(a, problem, z) - op_eval(problem, z)
    noise_anch = oracle_eval(b, anchored, z) - op_eval(anchored, z)
    np.testing.assert_allclose(noise_anch, noise_base, atol=1e-12)


def test_split_stream_deterministic_and_distinct():
    first = split_stream(1, 0).standard_normal(10_000)
    again = split_stream(1, 0).standard_normal(10_000)
    other = split_stream(1, 1).standard_normal(10_000)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


def test_split_stream_replications_uncorrelated():
    a = split_stream(1, 0).standard_normal(100_000)
    b = split_stream(1, 1).standard_normal(100_000)
    r = float(np.corrcoef(a, b)[0, 1])
    assert abs(r) < 1e-2


def test_split_stream_accepts_large_and_negative_ids():
    g = split_stream(-3, 1 << 50)
    h = split_stream(-3, 1 << 50)
    np.testing.assert_array_equal(g.standard_normal(100), h.standard_normal(100))


def test_oracle_eval_dimension_mismatch(problem):
    oracle = StochasticOracle(NoiseModel(0.0), split_stream(1, 0))
    with pytest.raises(ValueError):
        oracle_eval(oracle, problem, Point(np.ones(6), 3))
    assert sfo_count(oracle) == 0
