import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from levygmm.charfn import ThetaParams, char_fn
from levygmm.errors import AlphaOneError, ParameterError
from levygmm.gmm import scaling_factor, solve_gmm
from levygmm.levy_sim import (IncrementBatch, SimModelSpec, StableSpec, derive_seed,
                              sample_standard_stable, simulate_increments)


def test_alpha_two_is_gaussian_with_variance_two():
    x = sample_standard_stable(2.0, 0.7, 10 ** 6, 3)
    assert abs(x.var() - 2.0) < 0.01


def test_empirical_characteristic_function_at_one():
    x = sample_standard_stable(1.3, 0.0, 10 ** 6, 11)
    c = np.cos(x)
    se = c.std() / math.sqrt(x.size)
    assert abs(c.mean() - math.exp(-1.0)) < 3 * se
    assert abs(np.sin(x).mean()) < 3 * np.sin(x).std() / math.sqrt(x.size)


def test_skewed_draws_match_the_exponent():
    # exponent -|l|^a (1 - i beta tan(pi a / 2) sgn l)
    a, b = 1.3, -1.0 / 3.0
    x = sample_standard_stable(a, b, 10 ** 6, 5)
    for lam in (0.5, 1.0, 2.0):
        target = np.exp(-abs(lam) ** a * (1 - 1j * b * math.tan(math.pi * a / 2)))
        z = np.exp(1j * lam * x)
        assert abs(z.real.mean() - target.real) < 4 * z.real.std() / 1e3
        assert abs(z.imag.mean() - target.imag) < 4 * z.imag.std() / 1e3


def test_sampler_is_deterministic():
    a = sample_standard_stable(0.5, 0.0, 1000, 42)
    b = sample_standard_stable(0.5, 0.0, 1000, 42)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_standard_stable(0.5, 0.0, 1000, 43))


@pytest.mark.parametrize("alpha", [1.0, 0.0, -0.5, 2.5])
def test_invalid_alpha_rejected(alpha):
    with pytest.raises(ParameterError):
        sample_standard_stable(alpha, 0.0, 10, 0)


def test_alpha_one_has_its_own_error():
    with pytest.raises(AlphaOneError):
        sample_standard_stable(1.0, 0.0, 10, 0)
    with pytest.raises(AlphaOneError):
        StableSpec(1.0, 0.0, 1.0)


def test_stable_spec_validation():
    with pytest.raises(ParameterError):
        StableSpec(1.5, 1.2, 1.0)
    with pytest.raises(ParameterError):
        StableSpec(1.5, 0.0, -1.0)


def test_pure_brownian_variance():
    batch = simulate_increments(SimModelSpec(0.0, 1.0), 10 ** 6, 1e-4, 9)
    assert abs(batch.values.var() / 1e-4 - 1.0) < 0.01


def test_degenerate_model_gives_zeros():
    model = SimModelSpec(0.0, 0.0, (StableSpec(1.3, 0.2, 0.0),), StableSpec(0.5, 0.0, 0.0))
    batch = simulate_increments(model, 100, 0.01, 1)
    assert np.all(batch.values == 0.0)


def test_benchmark_batch_runs_through_the_solver(bench_model, fset):
    n = 23400
    batch = simulate_increments(bench_model, n, 1.0 / n, 2024)
    res = solve_gmm(batch, fset, scaling_factor(n, "practical"))
    assert res.status in ("converged", "boundary", "failed")
    assert np.isfinite(res.residual_norm)
    if res.converged:
        assert res.theta_hat is not None


def test_batch_invariants():
    with pytest.raises(ParameterError):
        IncrementBatch(0.0, np.zeros(3))
    with pytest.raises(ParameterError):
        IncrementBatch(0.1, np.zeros(0))
    b = IncrementBatch(1 / 23400, np.zeros(23400))
    assert abs(b.horizon - 1.0) < 1e-9


def test_nuisance_violation_is_flagged_not_rejected():
    with pytest.warns(UserWarning):
        m = SimModelSpec(0.0, 1.0, (StableSpec(1.3, 0.0, 1.0),), StableSpec(0.9, 0.0, 0.1))
    assert not m.theory_conditions_hold()
    assert SimModelSpec.benchmark(1.3).theory_conditions_hold()


def test_self_similarity_ks():
    # h^(1/a) S_1 against the sum of four independent steps of length h/4
    model = SimModelSpec(0.0, 0.0, (StableSpec(1.3, -1 / 3, 1.0),))
    h, n = 1e-3, 10 ** 5
    direct = h ** (1 / 1.3) * sample_standard_stable(1.3, -1 / 3, n, 77)
    fine = simulate_increments(model, 4 * n, h / 4, 78).values.reshape(n, 4).sum(axis=1)
    res = stats.ks_2samp(direct, fine)
    crit = 1.628 * math.sqrt(2.0 / n)
    assert res.statistic < crit


def test_empirical_cf_matches_charfn():
    theta = ThetaParams(0.5, ((1.4, 0.4, 0.1),))
    model = SimModelSpec.from_theta(theta)
    h, n = 0.3, 2 * 10 ** 5
    x = simulate_increments(model, n, h, 31).values
    lams = np.concatenate([np.linspace(-4, -0.2, 10), np.linspace(0.2, 4, 10)])
    for lam in lams:
        z = np.exp(1j * lam * x)
        target = char_fn(theta, h, 1.0, lam)
        assert abs(z.real.mean() - target.real) < 4 * z.real.std() / math.sqrt(n)
        assert abs(z.imag.mean() - target.imag) < 4 * z.imag.std() / math.sqrt(n)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 63), n=st.integers(1, 300), alpha=st.floats(0.2, 1.9),
       beta=st.floats(-1, 1), h=st.floats(1e-6, 1.0))
def test_seed_determinism(seed, n, alpha, beta, h):
    if abs(alpha - 1) < 1e-3:
        alpha = 1.2
    model = SimModelSpec(0.1, 0.8, (StableSpec(alpha, beta, 1.0),), StableSpec(0.05, 0.0, 0.1))
    a = simulate_increments(model, n, h, seed)
    b = simulate_increments(model, n, h, seed)
    assert np.array_equal(a.values, b.values)


@settings(max_examples=50, deadline=None)
@given(base=st.integers(0, 2 ** 64 - 1), i=st.integers(0, 10 ** 6), j=st.integers(0, 10 ** 6))
def test_derived_seeds_are_distinct_streams(base, i, j):
    s1, s2 = derive_seed(base, i), derive_seed(base, i, j)
    assert 0 <= s1 < 2 ** 64
    assert s1 != s2
    if i != j:
        assert derive_seed(base, i) != derive_seed(base, j)
