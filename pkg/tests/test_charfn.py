import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from levygmm.charfn import (GridSpec, ThetaParams, char_fn, density_grid, gamma_cos, levy_symbol,
                            levy_symbol_quadrature, stable_density)
from levygmm.errors import AlphaOneError, InversionCutoffError, ParameterError
from levygmm.gmm import scaling_factor
from levygmm.levy_sim import SimModelSpec, simulate_increments
from levygmm.moments import expected_moments

H = 1.0 / 23400
U = scaling_factor(23400, "practical")


@st.composite
def thetas(draw, max_components=2):
    m = draw(st.integers(1, max_components))
    a1 = draw(st.floats(0.3, 1.95))
    alphas = [a1]
    for _ in range(m - 1):
        lo = a1 / 2 + 0.05
        if alphas[-1] - 0.05 <= lo:
            break
        alphas.append(draw(st.floats(lo, alphas[-1] - 0.05)))
    alphas = [a if abs(a - 1) > 0.02 else a + 0.05 for a in alphas]
    alphas = sorted(set(alphas), reverse=True)
    if len(alphas) > 1 and not alphas[-1] > alphas[0] / 2:
        alphas = alphas[:1]
    comps = [(a, draw(st.floats(0.05, 2.0)), draw(st.floats(0.0, 2.0))) for a in alphas]
    return ThetaParams(draw(st.floats(0.1, 2.0)), tuple(comps))


def test_gaussian_symbol():
    assert levy_symbol(ThetaParams(1.0), 2.0) == 2.0


def test_standardized_symmetric_symbol_is_one():
    total = 1.0 / gamma_cos(1.3)
    psi = levy_symbol(ThetaParams(0.0, ((1.3, total / 2, total / 2),)), 1.0)
    assert abs(psi - 1.0) < 1e-14


def test_symbol_is_hermitian():
    th = ThetaParams(0.0, ((1.3, 0.2, 0.7),))
    assert levy_symbol(th, -1.0) == pytest.approx(np.conj(levy_symbol(th, 1.0)), rel=1e-15)
    assert levy_symbol(th, 1.0).real >= 0


def test_char_fn_examples(bench_theta):
    assert char_fn(bench_theta, 0.3, 2.0, 0.0) == 1.0
    assert char_fn(ThetaParams(1.0), 0.01, 10.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-14)
    # independent components multiply: Gaussian factor times the quadrature jump factor
    lam, h, u = 3.0, 0.01, 1.5
    gauss = math.exp(-h * (u * lam) ** 2 / 2)
    jumps = ThetaParams(0.0, bench_theta.components)
    jump = np.exp(-h * levy_symbol_quadrature(jumps, u * lam))
    assert abs(char_fn(bench_theta, h, u, lam) - gauss * jump) < 1e-12


@settings(max_examples=10, deadline=None)
@given(th=thetas())
def test_symbol_matches_levy_khintchine_quadrature(th):
    for lam in np.linspace(-50, 50, 11):
        closed, quad = levy_symbol(th, lam), levy_symbol_quadrature(th, lam)
        assert abs(closed - quad) <= 1e-8 * max(abs(quad), 1e-300) + 1e-300


@settings(max_examples=40, deadline=None)
@given(th=thetas(), h=st.floats(1e-5, 1.0), u=st.floats(0.1, 50.0), lam=st.floats(-20, 20))
def test_char_fn_hermitian_and_bounded(th, h, u, lam):
    a, b = char_fn(th, h, u, lam), char_fn(th, h, u, -lam)
    assert abs(a - np.conj(b)) <= 1e-15 * max(1.0, abs(a))
    assert abs(a) <= 1.0 + 1e-15


@settings(max_examples=40, deadline=None)
@given(th=thetas(), h1=st.floats(1e-5, 0.5), h2=st.floats(1e-5, 0.5), lam=st.floats(-20, 20))
def test_char_fn_semigroup(th, h1, h2, lam):
    whole = char_fn(th, h1 + h2, 1.0, lam)
    parts = char_fn(th, h1, 1.0, lam) * char_fn(th, h2, 1.0, lam)
    assert abs(whole - parts) <= 1e-13


def test_gaussian_density_grid():
    g = density_grid(ThetaParams(1.0), 1.0, 1.0)
    assert np.max(np.abs(g.values - stats.norm.pdf(g.x))) < 1e-8


@settings(max_examples=25, deadline=None)
@given(th=thetas(), logh=st.floats(-5.0, -1.0))
def test_density_grid_invariants(th, logh):
    h = 10 ** logh
    g = density_grid(th, h, scaling_factor(int(1 / h) + 2, "practical", h=h), GridSpec(2 ** 16))
    assert abs(g.mass() - 1.0) < 1e-6
    assert g.values.min() >= 0.0
    assert np.isfinite(np.sum(np.abs(g.x) * g.values) * g.dx)


def test_grid_cdf_matches_simulation(bench_theta):
    g = density_grid(bench_theta, H, U)
    n = 10 ** 6
    x = np.sort(U * simulate_increments(SimModelSpec.from_theta(bench_theta), n, H, 5).values)
    emp = np.arange(1, n + 1) / n
    cdf = g.cdf(x)
    dist = max(np.max(np.abs(cdf - emp)), np.max(np.abs(cdf - emp + 1.0 / n)))
    assert dist < 4 * 0.5 / math.sqrt(n)


def test_grid_refinement_is_converged(bench_theta, fset):
    a = expected_moments(bench_theta, H, U, fset, GridSpec(2 ** 15, cutoff=64.0)).values
    b = expected_moments(bench_theta, H, U, fset, GridSpec(2 ** 16, cutoff=64.0)).values
    assert np.max(np.abs(a - b)) < 1e-8


def test_unreachable_cutoff_is_an_error():
    with pytest.raises(InversionCutoffError):
        density_grid(ThetaParams(0.0, ((0.2, 1.0, 1.0),)), 1e-12, 1.0)


def test_grid_spec_validation():
    with pytest.raises(ParameterError):
        GridSpec(1000)
    with pytest.raises(ParameterError):
        GridSpec(128)
    with pytest.raises(ParameterError):
        GridSpec(1024, cutoff=-1.0)


def test_theta_invariants():
    with pytest.raises(ParameterError):
        ThetaParams(1.0, ((1.2, 1.0, 1.0), (1.5, 1.0, 1.0)))
    with pytest.raises(ParameterError):
        ThetaParams(1.0, ((1.6, 1.0, 1.0), (0.7, 1.0, 1.0)))
    with pytest.raises(ParameterError):
        ThetaParams(1.0, ((1.6, 0.0, 0.0),))
    with pytest.raises(ParameterError):
        ThetaParams(-1.0)
    with pytest.raises(AlphaOneError):
        ThetaParams(1.0, ((1.0, 1.0, 1.0),))
    th = ThetaParams(1.0, ((1.6, 1.0, 0.5), (0.9, 0.2, 0.3)))
    assert ThetaParams.from_vector(th.to_vector()) == th


def test_stable_density_near_gaussian_limit():
    assert abs(stable_density(1.9999, 0.0, 0.0) - 1 / (2 * math.sqrt(math.pi))) < 1e-3


def test_stable_density_symmetry():
    x = np.array([0.1, 0.7, 3.0, 12.0])
    for a in (0.6, 1.3, 1.8):
        assert np.allclose(stable_density(a, 0.0, x), stable_density(a, 0.0, -x), rtol=0, atol=1e-10)


def test_half_stable_density_against_mpmath():
    mpmath.mp.dps = 30
    for x in (0.5, 1.0, 2.0):
        ref = mpmath.quadosc(lambda t: mpmath.cos(t * x) * mpmath.exp(-mpmath.sqrt(t)),
                             [0, mpmath.inf], omega=x) / mpmath.pi
        assert abs(stable_density(0.5, 0.0, x) / float(ref) - 1) < 1e-6


def test_skewed_stable_density_against_scipy():
    x = np.array([-4.0, -1.0, 0.0, 0.4, 2.5])
    for a, b in ((1.3, -1 / 3), (0.7, 0.8), (1.7, 1.0)):
        ours = stable_density(a, b, x)
        assert np.allclose(ours, stats.levy_stable.pdf(x, a, b), rtol=1e-6, atol=1e-10)
        assert ours.min() >= -1e-8


def test_stable_density_mass():
    a = 1.5
    x = np.linspace(0.0, 400.0, 4001)
    body = 2 * integrate.simpson(stable_density(a, 0.0, x), x=x)
    # P(|S| > L) ~ 2 Gamma(a) sin(pi a / 2) / pi * L^-a
    tail = 2 * math.gamma(a) * math.sin(math.pi * a / 2) / math.pi * 400.0 ** -a
    assert abs(body + tail - 1.0) < 1e-5


def test_stable_density_rejects_alpha_one():
    with pytest.raises(AlphaOneError):
        stable_density(1.0, 0.0, 0.5)
