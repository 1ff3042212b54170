import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levygmm.charfn import ThetaParams
from levygmm.errors import IdentificationError, ParameterError, SingularMatrixError
from levygmm.gmm import (ConditionUWarning, GmmOptions, a_matrix, asymptotic_covariance,
                         estimating_function, rate_matrices, sample_moments, scaling_factor,
                         sigma_matrix, single_param_estimator, solve_gmm)
from levygmm.levy_sim import IncrementBatch, SimModelSpec, derive_seed, simulate_increments
from levygmm.moments import (MomentEngine, MomentFunctionSet, bump_function, expected_moments, gaussian_dip,
                             jump_functional, product, splice)

N = 23400
H = 1.0 / N
U = scaling_factor(N, "practical")


def test_scaling_factor_examples():
    assert scaling_factor(23400, "practical") == pytest.approx(math.sqrt(23400 / math.log(23400)), rel=1e-14)
    assert abs(scaling_factor(23400, "practical") - 48.24) < 0.02
    assert abs(scaling_factor(10 ** 4, "theory", tau=0.04) - 1.318) < 1e-3
    assert 0 < scaling_factor(2, "practical") < np.inf
    assert 0 < scaling_factor(2, "theory", tau=1.0) < np.inf


def test_scaling_factor_errors_and_warning():
    with pytest.raises(ParameterError):
        scaling_factor(100, "theory")
    with pytest.raises(ParameterError):
        scaling_factor(1)
    with pytest.warns(ConditionUWarning):
        scaling_factor(100, "theory", tau=1.0, sigma_bound=1.0, eta=0.125)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scaling_factor(100, "theory", tau=0.04, sigma_bound=1.0, eta=0.125)


def test_sample_moments_examples(fset):
    zeros = IncrementBatch(0.01, np.zeros(50))
    assert np.array_equal(sample_moments(zeros, 10.0, fset), np.zeros(4))
    x = 0.9
    one = IncrementBatch(0.01, np.array([x]))
    expect = np.array([float(f(x)) for f in fset])
    assert np.allclose(sample_moments(one, 1.0, fset), expect, rtol=1e-13, atol=1e-300)


def test_sample_moments_gaussian_oracle(fset):
    n, h, u = 10 ** 6, 1e-4, 10.0
    batch = simulate_increments(SimModelSpec(0.0, 1.0), n, h, 4)
    v = fset[0](u * batch.values)
    target = 1 - (1 + 20 * u * u * h) ** -0.5
    assert abs(sample_moments(batch, u, fset)[0] - target) < 3 * v.std() / math.sqrt(n)


def test_fused_kernel_matches_plain_evaluation(fset):
    batch = simulate_increments(SimModelSpec.benchmark(1.3), 5000, H, 8)
    plain = fset.evaluate(U * batch.values).mean(axis=1)
    assert np.allclose(sample_moments(batch, U, fset), plain, rtol=1e-12, atol=1e-300)


def test_estimating_function_properties(bench_theta, fset):
    model = expected_moments(bench_theta, H, U, fset).values
    assert np.max(np.abs(estimating_function(bench_theta, model, H, U, fset))) < 1e-9
    up = ThetaParams(1.05, bench_theta.components)
    assert estimating_function(up, model, H, U, fset)[0] < 0
    v = bench_theta.to_vector()
    near = ThetaParams.from_vector(v + 1e-6)
    diff = estimating_function(near, model, H, U, fset) - estimating_function(bench_theta, model, H, U, fset)
    assert np.max(np.abs(diff)) < 1e-3


def _model_sample(theta, fset):
    # same grid ladder as the solver, so theta is an exact root
    opts = GmmOptions()
    engine = MomentEngine(fset, H, U, opts.grid, opts.max_points, opts.refine_tol)
    means = engine.resolve(theta.to_vector()).values
    squares = expected_moments(theta, H, U, [product(f, f) for f in fset]).values
    return means, np.sqrt((squares - means ** 2) / N)


@pytest.mark.parametrize("jac", ["finite_difference", "analytic"])
def test_self_consistency_fixed_point(bench_theta, fset, jac):
    sample = _model_sample(bench_theta, fset)
    batch = IncrementBatch(H, np.zeros(N))
    res = solve_gmm(batch, fset, U, GmmOptions(init=bench_theta, jacobian=jac), sample=sample)
    assert res.status == "converged"
    assert res.iterations <= 2
    assert np.allclose(res.theta_hat.to_vector(), bench_theta.to_vector(), rtol=1e-9)


def test_self_consistency_from_a_perturbed_start(bench_theta, fset):
    sample = _model_sample(bench_theta, fset)
    batch = IncrementBatch(H, np.zeros(N))
    start = ThetaParams(1.1, ((1.4, 0.25, 0.25),))
    res = solve_gmm(batch, fset, U, GmmOptions(init=start), sample=sample)
    assert res.status == "converged"
    assert np.allclose(res.theta_hat.to_vector(), bench_theta.to_vector(), rtol=1e-4)


def test_pure_brownian_fit_reports_boundary(fset):
    batch = simulate_increments(SimModelSpec(0.0, 1.0), N, H, 0)
    res = solve_gmm(batch, fset, U)
    assert res.boundary and res.status == "boundary"
    assert abs(res.theta_hat.sigma_sq - 1.0) < 0.05
    _, rp, rm = res.theta_hat.components[0]
    assert rp < 1e-3 and rm < 1e-3


def test_estimation_result_contract(bench_model, fset):
    batch = simulate_increments(bench_model, N, H, 3)
    res = solve_gmm(batch, fset, U)
    assert res.converged
    cov = res.asym_cov
    assert np.allclose(cov, cov.T, atol=1e-8 * np.max(np.abs(cov)))
    assert np.linalg.eigvalsh(cov).min() >= -1e-8 * np.max(np.abs(cov))
    assert set(res.ci) == {"sigma_sq", "alpha_1", "r_plus_1", "r_minus_1"}
    for (lo, hi), v in zip(res.ci.values(), res.theta_hat.to_vector()):
        assert lo <= v <= hi
    doc = res.to_dict()
    assert doc["theta_hat"]["alpha_1"] == res.theta_hat.components[0][0]
    assert res.u_used == U and res.n == N and res.h == H


def test_condition_i_detector(fset):
    f1, f2 = fset[0], fset[1]
    degenerate = MomentFunctionSet((f1, f2, f2, f2))
    theta = ThetaParams(1.0, ((1.3, 0.2, 0.4),))
    assert abs(np.linalg.det(a_matrix(theta, degenerate))) < 1e-12
    with pytest.raises(SingularMatrixError):
        asymptotic_covariance(theta, degenerate, N, U)
    batch = simulate_increments(SimModelSpec.from_theta(theta), N, H, 1)
    res = solve_gmm(batch, degenerate, U, GmmOptions(init=theta, trust_region=False, fallback_alphas=()))
    assert res.singular and res.status == "singular"
    assert res.asym_cov is None


def test_symmetric_theta_and_symmetric_set_is_singular(fset):
    f1, f2, f3 = fset[0], fset[1], fset[2]
    sym = MomentFunctionSet((f1, f2, f3, bump_function(0.8)))
    a = a_matrix(ThetaParams(1.0, ((1.3, 0.3, 0.3),)), sym)
    assert np.allclose(a[:, 2], a[:, 3], rtol=1e-12)
    assert abs(np.linalg.det(a)) < 1e-10 * np.prod(np.abs(np.diag(a)) + 1)


def test_rate_matrix_examples():
    th = ThetaParams(1.0, ((1.3, 2.0, 3.0),))
    rm = rate_matrices(th, 1000, math.e)
    assert np.allclose(rm.gamma_n[1:, 1:], [[1, 0, 0], [-2, 1, 0], [-3, 0, 1]], rtol=0, atol=1e-15)
    assert rm.lambda_bar_n[0, 0] == pytest.approx(1.0, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(100, 10 ** 7), u=st.floats(1.01, 1e4), a1=st.floats(1.05, 1.95),
       a2=st.floats(0.55, 0.95), r=st.floats(0.01, 5.0))
def test_rate_matrix_invariants(n, u, a1, a2, r):
    if not a2 > a1 / 2:
        a2 = a1 / 2 + 0.02
    if a2 >= 0.999:
        a2 = 0.99
    th = ThetaParams(1.0, ((a1, r, 2 * r), (a2, r, r)))
    rm = rate_matrices(th, n, u)
    lhs = np.linalg.solve(rm.lambda_tilde_n, rm.lambda_n)
    assert np.allclose(lhs, rm.lambda_bar_n, rtol=1e-14, atol=0)
    assert np.array_equal(np.diag(rm.gamma_n), np.ones(7))
    assert rm.gamma_n[0, 1:].tolist() == [0.0] * 6
    assert not rm.gamma_n[1:4, 4:].any() and not rm.gamma_n[4:, 1:4].any()


def test_a_and_sigma_matrix_examples(bench_theta, fset):
    a = a_matrix(bench_theta, fset)
    s = sigma_matrix(bench_theta, fset)
    assert a[0, 0] == 10.0
    assert s[0, 0] == 200.0
    assert not a[0, 1:].any() and not a[1:, 0].any()
    assert not s[0, 1:].any() and not s[1:, 0].any()
    assert np.allclose(s, s.T)
    d = np.diag(s)
    assert np.all(s ** 2 <= np.outer(d, d) * (1 + 1e-12))
    assert np.linalg.eigvalsh(s).min() >= -1e-8 * d.max()


@pytest.mark.parametrize("alpha,rp,rm", [(1.3, 1.0, 1.0), (1.7, 2.0, 1.0), (0.7, 1.0, 3.0)])
def test_dilated_bump_set_determinant(alpha, rp, rm):
    # g vanishes on [-1, 1]; f3 = g(2x); f4 is g on the right and g(2x) on the left
    g, f1 = bump_function(0.2), gaussian_dip(10.0)
    g2 = g.scaled(2.0)
    fs = MomentFunctionSet((f1, g, g2, splice(g, g2)))
    a = jump_functional(alpha, "+", g)
    det = np.linalg.det(a_matrix(ThetaParams(1.0, ((alpha, rp, rm),)), fs))
    closed = -(f1.d2(0.0) / 2) * (rp + rm) * a ** 3 * 2 ** alpha * (2 ** alpha - 1) * math.log(2)
    assert det == pytest.approx(closed, rel=1e-6)


def test_asymptotic_covariance_structure(bench_theta, fset):
    cov = asymptotic_covariance(bench_theta, fset, N, U)
    assert cov[0, 0] == pytest.approx(2.0 / N, rel=1e-12)
    scale = math.sqrt(cov[0, 0] * np.max(np.diag(cov)))
    assert np.max(np.abs(cov[0, 1:])) <= 1e-8 * scale
    assert np.allclose(cov, cov.T, rtol=0, atol=1e-15 * np.max(np.abs(cov)))
    assert np.linalg.eigvalsh(cov).min() >= -1e-8 * np.max(np.diag(cov))
    again = asymptotic_covariance(bench_theta, fset, N, U)
    assert np.array_equal(cov, again)


def test_alpha_standard_deviation_rate(bench_theta, fset):
    alpha = bench_theta.alphas[0]
    ns = [10 ** 4, 10 ** 5, 10 ** 6]
    sd = np.array([math.sqrt(asymptotic_covariance(bench_theta, fset, n, scaling_factor(n))[1, 1]) for n in ns])
    u = np.array([scaling_factor(n) for n in ns])
    ratio = sd / u ** (-alpha / 2)
    assert np.max(np.abs(ratio / ratio[0] - 1)) < 0.05


def test_solver_option_validation():
    with pytest.raises(ParameterError):
        GmmOptions(tolerance=0.0)
    with pytest.raises(ParameterError):
        GmmOptions(alpha_bounds=(0.5, 2.5))
    with pytest.raises(ParameterError):
        GmmOptions(jacobian="secant")


def test_single_moment_map_is_increasing_in_alpha(bench_theta, fset):
    f3 = fset[2]
    alpha, rp, rm = bench_theta.components[0]
    grid = np.linspace(alpha - 0.2, alpha + 0.2, 21)
    vals = [expected_moments(ThetaParams(1.0, ((a, rp, rm),)), H, U, [f3]).values[0] for a in grid]
    assert np.all(np.diff(vals) > 0)


def test_single_target_not_identified(bench_theta, fset):
    f_neg = splice(bump_function(50.0), fset[1], name="negative only")
    batch = simulate_increments(SimModelSpec.from_theta(bench_theta), N, H, 2)
    with pytest.raises(IdentificationError):
        single_param_estimator(batch, f_neg, U, bench_theta, target="r_plus_1")


def test_single_estimator_recovers_each_target(bench_theta, fset):
    batch = simulate_increments(SimModelSpec.from_theta(bench_theta), 10 ** 6, 1e-6, 5)
    u = scaling_factor(10 ** 6)
    truth = dict(zip(["alpha_1", "r_plus_1", "r_minus_1"], bench_theta.components[0]))
    for target, value in truth.items():
        res = single_param_estimator(batch, fset[2], u, bench_theta, target=target)
        assert abs(res.estimate - value) < 4 * res.asym_sd


def test_single_estimator_coverage(bench_theta, fset):
    n = 10 ** 6
    u = scaling_factor(n)
    model = SimModelSpec.from_theta(bench_theta)
    alpha = bench_theta.alphas[0]
    hits = 0
    for rep in range(100):
        batch = simulate_increments(model, n, 1.0 / n, derive_seed(606, rep))
        res = single_param_estimator(batch, fset[2], u, bench_theta, target="alpha_1")
        hits += abs(res.estimate - alpha) <= 3 * res.asym_sd
    assert hits >= 95


@pytest.mark.xfail(strict=True, reason="at finite n the alpha-hat error leaks into sigma^2-hat through the f1 row")
def test_joint_estimator_coverage(bench_theta, fset):
    n = 10 ** 6
    u = scaling_factor(n)
    model = SimModelSpec.from_theta(bench_theta)
    sd = np.sqrt(np.diag(asymptotic_covariance(bench_theta, fset, n, u)))
    truth = bench_theta.to_vector()
    hits = 0
    for rep in range(100):
        batch = simulate_increments(model, n, 1.0 / n, derive_seed(707, rep))
        res = solve_gmm(batch, fset, u, GmmOptions(compute_covariance=False))
        if res.converged:
            hits += bool(np.all(np.abs(res.theta_hat.to_vector() - truth) <= 2.576 * sd))
    print(f"joint 99% interval coverage: {hits}/100")
    assert hits >= 95
