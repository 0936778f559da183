import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from rebirthlab import parallel
from rebirthlab.errors import ConfigError
from rebirthlab.rng import derive_rng
from rebirthlab.stats import (MeanAccumulator, WeightedMeanAccumulator, effective_sample_size,
                              permutation_threshold, weighted_ecdf_distance, z_score)

arrays = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50)


@given(arrays, arrays)
def test_mean_merge_matches_pooled(a, b):
    acc = MeanAccumulator().add(a).merge(MeanAccumulator().add(b))
    pooled = np.array(a + b)
    assert acc.count == pooled.size
    assert acc.mean == pytest.approx(pooled.mean(), rel=1e-9, abs=1e-9)
    assert acc.variance == pytest.approx(pooled.var(ddof=1), rel=1e-7, abs=1e-6)


def test_weighted_mean_unit_weights_reduces_to_plain():
    x = np.random.default_rng(0).normal(size=500)
    w = WeightedMeanAccumulator().add(x, np.ones_like(x))
    m = MeanAccumulator().add(x)
    assert w.mean == pytest.approx(m.mean)
    assert w.se == pytest.approx(m.se, rel=1e-9)
    assert w.ess == pytest.approx(500)


def test_weighted_se_calibrated():
    # self-normalized mean of F under weights 1 + ξ with F = ξ²: E[wF]/E[w] = 1
    rng = np.random.default_rng(1)
    zs = []
    for _ in range(200):
        xi = rng.standard_normal(400)
        acc = WeightedMeanAccumulator().add(xi ** 2, 1 + xi)
        zs.append(z_score(acc.mean, acc.se, 1.0))
    assert abs(np.mean(zs)) < 0.3 and 0.8 < np.std(zs) < 1.25


def test_z_score_edge_cases():
    assert z_score(1.0, 0.0, 1.0) == 0.0
    assert z_score(1.0, 0.0, 2.0) == float("-inf") or z_score(1.0, 0.0, 2.0) == float("inf")
    assert z_score(1.0, 0.3, 0.0, 0.4) == pytest.approx(2.0)


def test_ecdf_distance_is_ks_for_unit_weights():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=300), rng.normal(0.2, size=250)
    assert weighted_ecdf_distance(x, 1.0, y, 1.0) == pytest.approx(sps.ks_2samp(x, y).statistic)


def test_permutation_threshold_level():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=200), rng.normal(size=200)
    thr, perm = permutation_threshold(x, 1.0, y, 1.0, rng, n_perm=300, level=0.01)
    assert perm.size == 300
    assert np.mean(perm > thr) <= 0.01 + 1e-12
    # asymptotic KS 1% critical value for n = m = 200
    assert thr == pytest.approx(1.628 * np.sqrt(2 / 200), rel=0.2)


def test_effective_sample_size():
    assert effective_sample_size(np.ones(10)) == pytest.approx(10)
    assert effective_sample_size([1.0, 0.0, 0.0]) == pytest.approx(1)


def test_derive_rng_streams():
    a = derive_rng(1, "check", 3).random(4)
    b = derive_rng(1, "check", 3).random(4)
    c = derive_rng(1, "check", 4).random(4)
    d = derive_rng(2, "check", 3).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def _square_sum(lo, size):
    return sum(i * i for i in range(lo, lo + size))


def test_parallel_shards(monkeypatch):
    assert parallel.shard_sizes(10, 4) == [(0, 4), (4, 4), (8, 2)]
    assert parallel.shard_sizes(0, 4) == []
    tasks = parallel.shard_sizes(50, 7)
    serial = parallel.run_shards(_square_sum, tasks, 1)
    assert parallel.run_shards(_square_sum, tasks, 2) == serial
    assert sum(serial) == sum(i * i for i in range(50))
    monkeypatch.setenv(parallel.WORKERS_ENV, "3")
    assert parallel.resolve_workers() == 3
    assert parallel.resolve_workers(2) == 2
    monkeypatch.setenv(parallel.WORKERS_ENV, "many")
    with pytest.raises(ConfigError):
        parallel.resolve_workers()
    with pytest.raises(ConfigError):
        parallel.resolve_workers(0)
