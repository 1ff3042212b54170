"""Lévy symbol, characteristic function and Fourier-inversion density grids.

The approximating process has Lévy triplet ``(0, sigma, nu)`` under the
truncation ``tau(z) = z 1{|z| <= 1}``, with

    nu(dz) = sum_m alpha_m |z|^(-1-alpha_m) (r_m^+ 1{z>0} + r_m^- 1{z<0}) dz.

Writing ``E exp(i lam Z_h) = exp(-h psi(lam))`` the symbol is, per component,

    (r+ + r-) G(a) |lam|^a - i (r+ - r-) (H(a) |lam|^a sgn(lam) + lam a / (a - 1))

with ``G(a) = Gamma(1-a) cos(pi a/2)`` and ``H(a) = Gamma(1-a) sin(pi a/2)``.
The last term is the drift created by compensating with ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate, interpolate, special

from . import kernels
from .errors import AlphaOneError, GridResolutionError, InversionCutoffError, ParameterError

ALPHA_ONE_TOL = 1e-12


def check_alpha(alpha: float, allow_two: bool = False) -> None:
    if not np.isfinite(alpha):
        raise ParameterError(f"alpha must be finite, got {alpha}")
    if abs(alpha - 1.0) < ALPHA_ONE_TOL:
        raise AlphaOneError("alpha = 1 is excluded: the stable parametrization has a pole there")
    upper_ok = alpha <= 2.0 if allow_two else alpha < 2.0
    if not (alpha > 0.0 and upper_ok):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")


@dataclass(frozen=True)
class ThetaParams:
    """Parameter vector (sigma^2, alpha_1, r_1^+, r_1^-, ..., alpha_M, r_M^+, r_M^-)."""

    sigma_sq: float
    components: tuple = ()

    def __post_init__(self):
        comps = tuple((float(a), float(rp), float(rm)) for a, rp, rm in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "sigma_sq", float(self.sigma_sq))
        if not (np.isfinite(self.sigma_sq) and self.sigma_sq >= 0.0):
            raise ParameterError(f"sigma_sq must be >= 0, got {self.sigma_sq}")
        for a, rp, rm in comps:
            check_alpha(a)
            if rp < 0 or rm < 0 or not (rp + rm > 0) or not np.isfinite(rp + rm):
                raise ParameterError(f"need r+ >= 0, r- >= 0 and r+ + r- > 0, got ({rp}, {rm})")
        alphas = [c[0] for c in comps]
        for a_prev, a_next in zip(alphas, alphas[1:]):
            if not a_prev > a_next:
                raise ParameterError("jump activity indices must be strictly decreasing")
        if alphas and not alphas[-1] > alphas[0] / 2:
            raise ParameterError("every index must exceed alpha_1 / 2")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return 1 + 3 * len(self.components)

    @property
    def alphas(self) -> tuple:
        return tuple(c[0] for c in self.components)

    def to_vector(self) -> np.ndarray:
        return np.array([self.sigma_sq] + [x for c in self.components for x in c], dtype=float)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "ThetaParams":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or (vec.size - 1) % 3:
            raise ParameterError("parameter vector must have length 3M + 1")
        comps = tuple(tuple(vec[1 + 3 * m: 4 + 3 * m]) for m in range((vec.size - 1) // 3))
        return cls(vec[0], comps)

    def is_symmetric(self) -> bool:
        return all(rp == rm for _, rp, rm in self.components)

    def coordinate_names(self) -> list:
        names = ["sigma_sq"]
        for m in range(1, self.n_components + 1):
            names += [f"alpha_{m}", f"r_plus_{m}", f"r_minus_{m}"]
        return names


def gamma_cos(alpha):
    return special.gamma(1.0 - alpha) * np.cos(np.pi * alpha / 2.0)


def gamma_sin(alpha):
    return special.gamma(1.0 - alpha) * np.sin(np.pi * alpha / 2.0)


def _gamma_trig_derivatives(alpha):
    g = special.gamma(1.0 - alpha)
    dg = -g * special.digamma(1.0 - alpha)
    c, s = np.cos(np.pi * alpha / 2.0), np.sin(np.pi * alpha / 2.0)
    d_cos = dg * c - g * (np.pi / 2.0) * s
    d_sin = dg * s + g * (np.pi / 2.0) * c
    return d_cos, d_sin


def stable_sum_for_unit_exponent(alpha: float) -> float:
    """``r+ + r-`` giving the unit stable exponent ``|lam|^alpha`` (no skew part)."""
    check_alpha(alpha)
    return 1.0 / gamma_cos(alpha)


def psi_vector(vec: np.ndarray, lam) -> np.ndarray:
    """Lévy symbol for a raw parameter vector (no validation)."""
    lam = np.asarray(lam, dtype=float)
    out = 0.5 * vec[0] * lam * lam + 0j
    a_lam = np.abs(lam)
    sgn = np.sign(lam)
    for m in range((len(vec) - 1) // 3):
        alpha, rp, rm = vec[1 + 3 * m: 4 + 3 * m]
        pw = a_lam ** alpha
        out = out + (rp + rm) * gamma_cos(alpha) * pw - 1j * (rp - rm) * (
            gamma_sin(alpha) * pw * sgn + lam * alpha / (alpha - 1.0))
    return out


def psi_gradient_vector(vec: np.ndarray, lam) -> np.ndarray:
    """Gradient of the Lévy symbol in the parameter vector, shape ``(dim,) + lam.shape``."""
    lam = np.asarray(lam, dtype=float)
    grad = np.empty((len(vec),) + lam.shape, dtype=complex)
    grad[0] = 0.5 * lam * lam
    a_lam = np.abs(lam)
    sgn = np.sign(lam)
    nz = a_lam > 0
    log_abs = np.where(nz, np.log(np.where(nz, a_lam, 1.0)), 0.0)
    for m in range((len(vec) - 1) // 3):
        alpha, rp, rm = vec[1 + 3 * m: 4 + 3 * m]
        pw = a_lam ** alpha
        gc, gs = gamma_cos(alpha), gamma_sin(alpha)
        dgc, dgs = _gamma_trig_derivatives(alpha)
        odd = gs * pw * sgn + lam * alpha / (alpha - 1.0)
        d_odd = (dgs + gs * log_abs) * pw * sgn - lam / (alpha - 1.0) ** 2
        grad[1 + 3 * m] = (rp + rm) * (dgc + gc * log_abs) * pw - 1j * (rp - rm) * d_odd
        grad[2 + 3 * m] = gc * pw - 1j * odd
        grad[3 + 3 * m] = gc * pw + 1j * odd
    return grad


def levy_symbol(theta: ThetaParams, lam):
    """Lévy symbol ``psi`` with ``E exp(i lam Z_h) = exp(-h psi(lam))``."""
    out = psi_vector(theta.to_vector(), lam)
    return out if np.ndim(out) else complex(out)


def levy_symbol_gradient(theta: ThetaParams, lam) -> np.ndarray:
    return psi_gradient_vector(theta.to_vector(), lam)


def levy_symbol_quadrature(theta: ThetaParams, lam: float) -> complex:
    """Direct Lévy-Khintchine quadrature of the symbol; slow, used as a reference."""
    lam = float(lam)
    if lam == 0.0:
        return 0j
    total = 0.5 * theta.sigma_sq * lam * lam + 0j
    for alpha, rp, rm in theta.components:
        for sign, weight in ((1.0, rp), (-1.0, rm)):
            if weight == 0.0:
                continue

            def inner_re(z):
                return 2.0 * np.sin(0.5 * lam * z) ** 2 * alpha * z ** (-1.0 - alpha)

            def inner_im(z, s=sign):
                t = lam * z
                odd = t ** 3 / 6.0 - t ** 5 / 120.0 if abs(t) < 1e-3 else t - np.sin(t)
                return s * odd * alpha * z ** (-1.0 - alpha)

            def tail(z):
                return alpha * (1.0 + alpha) * z ** (-2.0 - alpha)

            # tail over [1, inf) after one integration by parts, so QAWF sees z^(-2-alpha) decay
            opts = dict(epsabs=0.0, epsrel=1e-12, limit=500)
            fourier = dict(epsabs=1e-13, limlst=200)
            a_lam = abs(lam)
            cos_tail = (-alpha * np.sin(a_lam) + integrate.quad(tail, 1.0, np.inf, weight="sin", wvar=a_lam,
                                                                **fourier)[0]) / a_lam
            sin_tail = (alpha * np.cos(a_lam) - integrate.quad(tail, 1.0, np.inf, weight="cos", wvar=a_lam,
                                                               **fourier)[0]) / a_lam
            re = integrate.quad(inner_re, 0.0, 1.0, **opts)[0] + 1.0 - cos_tail
            im = integrate.quad(inner_im, 0.0, 1.0, **opts)[0] - sign * np.sign(lam) * sin_tail
            total += weight * (re + 1j * im)
    return total


def char_fn(theta: ThetaParams, h: float, u: float, lam):
    """Characteristic function of ``u Z_h`` at ``lam``."""
    if not (h > 0 and u > 0):
        raise ParameterError("h and u must be positive")
    out = np.exp(-h * psi_vector(theta.to_vector(), u * np.asarray(lam, dtype=float)))
    return out if np.ndim(out) else complex(out)


@dataclass(frozen=True)
class GridSpec:
    """Inversion grid: ``n_points`` nodes and an explicit or automatic frequency cutoff."""

    n_points: int = 2 ** 14
    cutoff: float | None = None
    tol: float = 1e-12

    def __post_init__(self):
        n = int(self.n_points)
        if n < 256 or n & (n - 1):
            raise ParameterError("n_points must be a power of two and at least 256")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ParameterError("cutoff must be positive")


@dataclass(frozen=True)
class DensityGrid:
    x0: float
    dx: float
    values: np.ndarray = field(repr=False)
    cutoff: float = float("nan")
    tail_bound: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    @property
    def n_points(self) -> int:
        return self.values.size

    def mass(self) -> float:
        return float(self.values.sum() * self.dx)

    def cdf(self, points) -> np.ndarray:
        """CDF at ``points`` from the antiderivative of a cubic spline through the grid."""
        x = self.x
        anti = interpolate.CubicSpline(x, self.values).antiderivative()
        pts = np.asarray(points, dtype=float)
        out = anti(np.clip(pts, x[0], x[-1])) - anti(x[0])
        out = np.where(pts < x[0], 0.0, np.where(pts > x[-1], 1.0, out))
        return np.clip(out, 0.0, 1.0)


MAX_CUTOFF = 2.0 ** 30


def auto_cutoff_vector(vec: np.ndarray, h: float, u: float, tol: float = 1e-12) -> float:
    cut = 1.0 / 64.0
    while cut <= MAX_CUTOFF:
        if abs(np.exp(-h * psi_vector(vec, u * cut))) < tol:
            return cut
        cut *= 2.0
    raise InversionCutoffError(
        f"inversion cutoff not found: characteristic function above {tol} up to frequency {MAX_CUTOFF:g}")


def tail_probability_bound(vec: np.ndarray, h: float, u: float, radius: float) -> float:
    """Rough bound on P(|u Z_h| > radius) from the Lévy tail of the jump measure."""
    total = 0.0
    for m in range((len(vec) - 1) // 3):
        alpha, rp, rm = vec[1 + 3 * m: 4 + 3 * m]
        total += h * (rp + rm) * (radius / u) ** (-alpha)
    return min(1.0, 2.0 * total)


@lru_cache(maxsize=32)
def _half_grid(n_points: int, cutoff: float):
    lam = np.arange(n_points // 2 + 1) * (2.0 * cutoff / n_points)
    with np.errstate(divide="ignore"):
        log_lam = np.log(lam)
    alt = np.where(np.arange(lam.size) % 2 == 0, 1.0, -1.0)
    for arr in (lam, log_lam, alt):
        arr.setflags(write=False)
    return lam, log_lam, alt


def half_spectrum(n_points: int, cutoff: float) -> np.ndarray:
    """Nonnegative frequencies ``k * 2 cutoff / N`` for ``k = 0..N/2``."""
    return _half_grid(int(n_points), float(cutoff))[0]


def _irfft_scaled(prepared, n_points, cutoff):
    dlam = 2.0 * cutoff / n_points
    vals = sp_fft.irfft(prepared, n=n_points, axis=-1) * (n_points * dlam / (2.0 * np.pi))
    dx = np.pi / cutoff
    return -(n_points // 2) * dx, dx, vals


def invert_half_spectrum(spectrum: np.ndarray, n_points: int, cutoff: float):
    """Inverse transform of a Hermitian spectrum given on :func:`half_spectrum`.

    Returns ``(x0, dx, values)`` on ``x_j = (j - N/2) pi / cutoff``. With
    ``dl dx = 2 pi / N`` the centring shift becomes the factor ``(-1)^k``.
    """
    alt = _half_grid(int(n_points), float(cutoff))[2]
    return _irfft_scaled(np.conj(spectrum) * alt, n_points, cutoff)


def _packed(vec: np.ndarray) -> np.ndarray:
    n_comp = (len(vec) - 1) // 3
    alphas = vec[1::3]
    consts = np.empty(2 * n_comp)
    consts[0::2] = gamma_cos(alphas)
    consts[1::2] = gamma_sin(alphas)
    return np.ascontiguousarray(np.concatenate([vec, consts]), dtype=float)


def density_values(vec: np.ndarray, h: float, u: float, n_points: int, cutoff: float):
    """Density of ``u Z_h`` on ``x_k = (k - N/2) pi / cutoff``; returns (x0, dx, values)."""
    lam, log_lam, _ = _half_grid(int(n_points), float(cutoff))
    prepared = kernels.inversion_spectrum(lam, log_lam, float(h), float(u), _packed(np.asarray(vec, float)))
    return _irfft_scaled(prepared, n_points, cutoff)


def clip_ringing(values: np.ndarray, floor: float = -1e-8) -> np.ndarray:
    low = values.min()
    if low < floor:
        raise GridResolutionError(
            f"density grid ringing {low:.3g} below {floor:g}; increase n_points or cutoff")
    return np.maximum(values, 0.0)


def density_grid(theta: ThetaParams, h: float, u: float, spec: GridSpec | None = None) -> DensityGrid:
    """Fourier inversion of ``char_fn`` on a symmetric grid."""
    spec = spec or GridSpec()
    if not (h > 0 and u > 0):
        raise ParameterError("h and u must be positive")
    vec = theta.to_vector()
    cutoff = spec.cutoff if spec.cutoff is not None else auto_cutoff_vector(vec, h, u, spec.tol)
    x0, dx, dens = density_values(vec, h, u, spec.n_points, cutoff)
    dens = clip_ringing(dens)
    dens.setflags(write=False)
    return DensityGrid(x0, dx, dens, cutoff, tail_probability_bound(vec, h, u, -x0))


def stable_density(alpha: float, beta: float, x_grid) -> np.ndarray:
    """Density of the stable law with exponent ``-|lam|^alpha (1 - i beta tan(pi alpha/2) sgn lam)``.

    Evaluated pointwise by Fourier inversion on the half line with QUADPACK's
    oscillatory routine.
    """
    check_alpha(alpha)
    if abs(beta) > 1:
        raise ParameterError("|beta| must be at most 1")
    skew = beta * np.tan(np.pi * alpha / 2.0)
    x_arr = np.atleast_1d(np.asarray(x_grid, dtype=float))
    out = np.empty_like(x_arr)

    def decay(lam):
        return np.exp(-lam ** alpha)

    # integrate up to where exp(-lam^alpha) < 1e-17; the infinite-range routine assumes a
    # monotone envelope, which the skew phase breaks and which is fragile at large |x|
    top = 40.0 ** (1.0 / alpha)
    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=2000)

    def even_part(lam):
        return decay(lam) * np.cos(skew * lam ** alpha)

    def odd_part(lam):
        return decay(lam) * np.sin(skew * lam ** alpha)

    for i, x in enumerate(x_arr):
        if x == 0.0:
            val = integrate.quad(even_part, 0.0, top, **opts)[0]
        else:
            val = integrate.quad(even_part, 0.0, top, weight="cos", wvar=abs(x), **opts)[0]
            if skew != 0.0:
                val += np.sign(x) * integrate.quad(odd_part, 0.0, top, weight="sin", wvar=abs(x), **opts)[0]
        out[i] = val / np.pi
    return out if np.ndim(x_grid) else float(out[0])
