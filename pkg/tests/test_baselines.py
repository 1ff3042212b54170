import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levygmm.baselines import (ThresholdSpec, aj_alpha, aj_count, default_volatility_threshold,
                               realized_variance, truncated_rv)
from levygmm.errors import InsufficientExceedancesError, ParameterError
from levygmm.levy_sim import IncrementBatch, SimModelSpec, simulate_increments

N = 23400


def test_count_examples():
    assert aj_count(IncrementBatch(0.1, np.zeros(50)), 0.3) == 0
    assert aj_count(IncrementBatch(0.1, np.array([0.5, -2.0, 1.0])), 0.9) == 2
    with pytest.raises(ParameterError):
        aj_count(IncrementBatch(0.1, np.ones(3)), 0.0)


def test_count_scaling_relation(bench_model):
    # U(tau) tau^a / (n h) approaches r+ + r- as the step shrinks
    theta = bench_model.theta()
    total = theta.components[0][1] + theta.components[0][2]
    vals = []
    for h in (1e-2, 1e-3, 1e-4):
        batch = simulate_increments(bench_model, 10 ** 6, h, 3)
        tau = 4.0 * h ** 0.49
        vals.append(aj_count(batch, tau) * tau ** 1.3 / (batch.n * h))
    gaps = [abs(v / total - 1) for v in vals]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.2


def _forced_batch(h, spec1, spec2, above1, above2, n=5000):
    t1, t2 = spec1.threshold(h), spec2.threshold(h)
    x = np.zeros(n)
    x[:above2] = 2 * t2
    x[above2:above1] = -0.5 * (t1 + t2)
    return IncrementBatch(h, x)


def test_alpha_forced_counts():
    h = 1e-4
    s1, s2 = ThresholdSpec(1.0), ThresholdSpec(10.0)
    assert aj_alpha(_forced_batch(h, s1, s2, 1000, 100), s1, s2) == pytest.approx(1.0, abs=1e-12)
    assert aj_alpha(_forced_batch(h, s1, s2, 300, 300), s1, s2) == 0.0


def test_alpha_errors():
    h = 1e-4
    s1, s2 = ThresholdSpec(1.0), ThresholdSpec(10.0)
    with pytest.raises(InsufficientExceedancesError):
        aj_alpha(_forced_batch(h, s1, s2, 50, 0), s1, s2)
    with pytest.raises(ParameterError):
        aj_alpha(_forced_batch(h, s1, s2, 50, 10), s1, s1)
    with pytest.warns(UserWarning):
        aj_alpha(_forced_batch(h, s1, s2, 50, 5), s1, s2)


def test_threshold_spec_validation():
    for c, w in ((0.0, 0.4), (-1.0, 0.4), (1.0, 0.5), (1.0, 0.0)):
        with pytest.raises(ParameterError):
            ThresholdSpec(c, w)
    assert ThresholdSpec(3.0, 0.49).threshold(1e-4) == pytest.approx(3.0 * 1e-4 ** 0.49)


def test_alpha_median_on_benchmark(bench_model):
    est = []
    for rep in range(200):
        batch = simulate_increments(bench_model, N, 1.0 / N, 1000 + rep)
        s = math.sqrt(truncated_rv(batch, default_volatility_threshold(batch)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                est.append(aj_alpha(batch, ThresholdSpec(4 * s), ThresholdSpec(8 * s)))
            except InsufficientExceedancesError:
                est.append(np.nan)
    assert abs(np.nanmedian(est) - 1.3) < 0.4


def test_truncated_rv_brownian():
    batch = simulate_increments(SimModelSpec(0.0, 1.0), 10 ** 6, 1e-6, 8)
    assert abs(truncated_rv(batch, default_volatility_threshold(batch)) - 1.0) < 0.01


def test_truncated_rv_all_truncated():
    batch = IncrementBatch(1e-4, np.full(100, 5.0))
    assert truncated_rv(batch, ThresholdSpec(1.0)) == 0.0


def test_truncated_rv_benchmark_error_band(bench_model):
    err = []
    for rep in range(200):
        batch = simulate_increments(bench_model, N, 1.0 / N, 5000 + rep)
        err.append(abs(truncated_rv(batch, default_volatility_threshold(batch)) - 1.0))
    assert 0.01 <= np.median(err) <= 0.09


increments = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=200)


@settings(max_examples=100, deadline=None)
@given(x=increments, t1=st.floats(1e-3, 20), t2=st.floats(1e-3, 20))
def test_count_is_monotone(x, t1, t2):
    batch = IncrementBatch(0.01, np.array(x))
    lo, hi = sorted((t1, t2))
    assert aj_count(batch, lo) >= aj_count(batch, hi)


@settings(max_examples=100, deadline=None)
@given(x=increments, c=st.floats(0.01, 100))
def test_truncation_never_exceeds_rv(x, c):
    batch = IncrementBatch(0.01, np.array(x))
    spec = ThresholdSpec(c)
    trv, rv = truncated_rv(batch, spec), realized_variance(batch)
    assert trv <= rv * (1 + 1e-12)
    if np.all(np.abs(batch.values) <= spec.threshold(batch.h)):
        assert trv == pytest.approx(rv, rel=1e-12, abs=0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10 ** 6), k=st.floats(0.01, 100))
def test_alpha_scale_invariance(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.standard_t(1.5, 2000) * 0.01
    h = 1e-3
    s1, s2 = ThresholdSpec(0.1), ThresholdSpec(0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            base = aj_alpha(IncrementBatch(h, x), s1, s2)
        except InsufficientExceedancesError:
            return
        scaled = aj_alpha(IncrementBatch(h, k * x), ThresholdSpec(k * 0.1), ThresholdSpec(k * 0.4))
    assert scaled == pytest.approx(base, rel=1e-12, abs=1e-12)
