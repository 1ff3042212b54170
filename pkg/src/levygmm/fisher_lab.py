"""Fisher information of (r, alpha) for Brownian motion plus a symmetric stable motion.

Work in the standardized coordinate ``x = z / sqrt(sigma^2 h)``. With
``w = (r h)^(1/alpha) / sqrt(sigma^2 h)`` the law of the standardized
increment is ``S(x) = int phi(x - w y) phi_alpha(y) dy``, where ``phi_alpha``
is the symmetric stable density with Levy measure ``alpha |y|^(-1-alpha) dy``.
The score functions are expressed through

    R0(x) = w^-alpha int phi(x - w y) (phi_alpha + y phi_alpha')(y) dy
    R1(x) = (w^alpha log(1/w))^-1 int phi(x - w y) d_alpha phi_alpha(y) dy

and ``J^{lm} = int R^l R^m / S``. All three functions are even with
real characteristic functions, so each is a cosine transform of a Gaussian
damped integrand and is evaluated pointwise with QUADPACK's Fourier routine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .charfn import _gamma_trig_derivatives, check_alpha, gamma_cos
from .errors import GridResolutionError, ParameterError, QuadratureError

DENSITY_FLOOR = 1e-30
_LAMBDA_MAX = 40.0  # exp(-lam^2/2) is below 1e-300 beyond this


def _symbol(alpha, lam):
    """``2 G(alpha) |lam|^alpha``: exponent of the unit symmetric stable law."""
    return 2.0 * gamma_cos(alpha) * np.abs(lam) ** alpha


class _Transforms:
    """Characteristic functions of ``S``, ``R0`` and ``R1`` for fixed ``(alpha, w)``."""

    def __init__(self, alpha, w, dalpha="finite_difference", step=1e-4):
        self.alpha, self.w = alpha, w
        self.log_inv_w = math.log(1.0 / w)
        self.dalpha = dalpha
        self.step = step
        self.g = gamma_cos(alpha)
        self.dg = _gamma_trig_derivatives(alpha)[0]

    def s_hat(self, lam):
        return np.exp(-0.5 * lam * lam - _symbol(self.alpha, self.w * lam))

    def r0_hat(self, lam):
        # (phi_a + y phi_a')^ (l) = 2 G alpha |l|^alpha phi_a^(l); the w^-alpha prefactor cancels
        wl = np.abs(self.w * lam)
        return 2.0 * self.g * self.alpha * np.abs(lam) ** self.alpha * np.exp(
            -0.5 * lam * lam - 2.0 * self.g * wl ** self.alpha)

    def _dphi_dalpha(self, t):
        a = self.alpha
        if self.dalpha == "finite_difference":
            d = self.step
            return (np.exp(-_symbol(a + d, t)) - np.exp(-_symbol(a - d, t))) / (2.0 * d)
        at = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            logt = np.where(at > 0, np.log(np.where(at > 0, at, 1.0)), 0.0)
        return -2.0 * (self.dg + self.g * logt) * at ** a * np.exp(-_symbol(a, t))

    def r1_hat(self, lam):
        pre = 1.0 / (self.w ** self.alpha * self.log_inv_w)
        return pre * np.exp(-0.5 * lam * lam) * self._dphi_dalpha(self.w * lam)


def _cosine_transform(fun, x, epsabs=1e-20, epsrel=1e-11):
    """``(1/pi) int_0^inf cos(lam x) fun(lam) dlam`` for an even real spectrum."""
    if x == 0.0:
        val, err = integrate.quad(fun, 0.0, _LAMBDA_MAX, epsabs=epsabs, epsrel=epsrel, limit=400,
                                  points=[1e-6, 1e-3, 1.0])
    else:
        val, err, *_ = integrate.quad(fun, 0.0, _LAMBDA_MAX, weight="cos", wvar=abs(x),
                                      epsabs=epsabs, epsrel=epsrel, limit=2000, full_output=1)
    if not np.isfinite(val):
        raise QuadratureError("cosine transform diverged", val)
    return val / math.pi


@dataclass(frozen=True)
class FisherQuantities:
    """Standardized density, score kernels and their weighted inner products."""

    alpha: float
    r: float
    sigma_sq: float
    h: float
    w_h: float
    v_h: float
    psi_h: float
    x: np.ndarray
    S_h: np.ndarray
    R0_h: np.ndarray
    R1_h: np.ndarray
    J00: float
    J10: float
    J11: float
    tail_bound: float
    refinement_change: float

    def cauchy_schwarz_gap(self) -> float:
        return math.sqrt(self.J00 * self.J11) - abs(self.J10)


def fisher_scalings(sigma_sq: float, r: float, alpha: float, h: float):
    """``(w_h, v_h, psi_h)``: relative jump scale, score mixing weight and the growth rate of J00."""
    check_alpha(alpha)
    if not (r > 0 and sigma_sq > 0 and h > 0):
        raise ParameterError("r, sigma^2 and h must be positive")
    w = (r * h) ** (1.0 / alpha) / math.sqrt(sigma_sq * h)
    if not 0 < w < 1:
        raise ParameterError(f"w_h = {w:.3g} must lie in (0, 1); decrease h")
    v = (2.0 + math.log(r / sigma_sq) / math.log(1.0 / w)) / (alpha * (2.0 - alpha))
    psi = 2.0 * sigma_sq ** (alpha / 2.0) / (r * alpha ** 2 * (2.0 - alpha) ** (alpha / 2.0)) / (
        h ** (1.0 - alpha / 2.0) * math.log(1.0 / h) ** (alpha / 2.0))
    return w, v, psi


def _x_grid(points_core: int, x_core: float, x_max: float, points_tail: int):
    core = np.linspace(0.0, x_core, points_core)
    tail = np.geomspace(x_core, x_max, points_tail)[1:]
    return core, tail


def _simpson(y, x):
    return integrate.simpson(y, x=x)


def fisher_quantities(sigma_sq: float, r: float, alpha: float, h: float, grid=None,
                      dalpha: str = "finite_difference") -> FisherQuantities:
    """Evaluate ``S_h``, ``R0_h``, ``R1_h`` on a half grid and the integrals ``J^{lm}``.

    ``grid`` is ``(points_core, x_core, x_max, points_tail)``: uniform nodes on
    ``[0, x_core]`` followed by log-spaced nodes up to ``x_max``. The integrals
    are recomputed on every other node and the relative change is reported;
    above 1e-3 a :class:`GridResolutionError` is raised.
    """
    w, v, psi = fisher_scalings(sigma_sq, r, alpha, h)
    points_core, x_core, x_max, points_tail = grid or (1201, 24.0, 1e7, 401)
    tr = _Transforms(alpha, w, dalpha)
    core, tail = _x_grid(points_core, x_core, x_max, points_tail)
    x = np.concatenate([core, tail])
    S = np.array([_cosine_transform(tr.s_hat, xi) for xi in x])
    R0 = np.array([_cosine_transform(tr.r0_hat, xi) for xi in x])
    R1 = np.array([_cosine_transform(tr.r1_hat, xi) for xi in x])

    def integrals(stride):
        out = []
        xc, xt = core[::stride], tail[stride - 1::stride]
        sl_c, sl_t = slice(0, points_core, stride), slice(points_core + stride - 1, None, stride)
        xs = np.concatenate([xc, xt])
        dens = np.maximum(np.concatenate([S[sl_c], S[sl_t]]), DENSITY_FLOOR)
        r0 = np.concatenate([R0[sl_c], R0[sl_t]])
        r1 = np.concatenate([R1[sl_c], R1[sl_t]])
        split = xc.size
        for a, b in ((r0, r0), (r1, r0), (r1, r1)):
            g = a * b / dens
            core_part = _simpson(g[:split], xs[:split])
            tail_x = np.concatenate([[xs[split - 1]], xs[split:]])
            tail_g = np.concatenate([[g[split - 1]], g[split:]])
            tail_part = _simpson(tail_g * tail_x, np.log(tail_x))
            out.append(2.0 * (core_part + tail_part))
        return np.array(out)

    fine = integrals(1)
    coarse = integrals(2)
    change = float(np.max(np.abs(fine - coarse) / np.maximum(np.abs(fine), 1e-300)))
    if change > 1e-3:
        raise GridResolutionError(f"J integrals changed by {change:.2e} under grid refinement")
    # beyond x_max the kernels decay like x^(-1-alpha) and S like w^alpha x^(-1-alpha)
    tail_bound = float(2.0 * abs(R0[-1] ** 2 / max(S[-1], DENSITY_FLOOR)) * x_max / alpha)
    return FisherQuantities(alpha, r, sigma_sq, h, w, v, psi, x, S, R0, R1,
                            float(fine[0]), float(fine[1]), float(fine[2]), tail_bound, change)


def fisher_block(q: FisherQuantities) -> np.ndarray:
    """Unscaled information matrix for ``(r, alpha)``."""
    w_a = q.w_h ** q.alpha
    lw = math.log(1.0 / q.w_h)
    i_rr = w_a ** 2 / (q.r ** 2 * q.alpha ** 2) * q.J00
    i_aa = w_a ** 2 * lw ** 2 * (q.J11 - 2.0 * q.v_h * q.J10 + q.v_h ** 2 * q.J00)
    i_ra = w_a ** 2 * lw / (q.r * q.alpha) * (q.v_h * q.J00 - q.J10)
    return np.array([[i_rr, i_ra], [i_ra, i_aa]])


def rescale_block(info: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """``(h log(1/h))^(alpha/2) / h * D I D`` with ``D = diag(1, 1/log(1/h))``."""
    lh = math.log(1.0 / h)
    d = np.diag([1.0, 1.0 / lh])
    out = (h * lh) ** (alpha / 2.0) / h * d @ info @ d
    return 0.5 * (out + out.T)


def rescaled_fisher_block(sigma_sq: float, r: float, alpha: float, h: float, grid=None,
                          dalpha: str = "finite_difference") -> np.ndarray:
    q = fisher_quantities(sigma_sq, r, alpha, h, grid, dalpha)
    return rescale_block(fisher_block(q), alpha, h)


def fisher_limit(sigma_sq: float, r: float, alpha: float) -> np.ndarray:
    """Rank-one limit of the rescaled block.

    The formula itself is regular at ``alpha = 1``, so only ``0 < alpha < 2``
    is required here.
    """
    if not (0.0 < alpha < 2.0 and r > 0 and sigma_sq > 0):
        raise ParameterError("need 0 < alpha < 2 and positive r, sigma^2")
    c = 2.0 * r / (sigma_sq ** (alpha / 2.0) * (2.0 - alpha) ** (alpha / 2.0))
    return c * np.array([[1.0 / r ** 2, 1.0 / (2.0 * r)], [1.0 / (2.0 * r), 0.25]])


def normalized_determinant(block: np.ndarray) -> float:
    """``det / (product of diagonal entries)``; zero for a rank-one matrix."""
    return float(np.linalg.det(block) / (block[0, 0] * block[1, 1]))


def fisher_trajectory(sigma_sq: float, r: float, alpha: float, h_values, grid=None):
    """Rows ``(h, I_rr, I_ra, I_aa, normalized det, max relative distance to the limit)``."""
    limit = fisher_limit(sigma_sq, r, alpha)
    rows = []
    for h in h_values:
        b = rescaled_fisher_block(sigma_sq, r, alpha, h, grid)
        dist = float(np.max(np.abs(b - limit) / np.abs(limit)))
        rows.append((float(h), b[0, 0], b[0, 1], b[1, 1], normalized_determinant(b), dist))
    return rows
