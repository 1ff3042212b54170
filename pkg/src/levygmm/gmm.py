"""Method-of-moments estimation of (sigma^2, alpha_m, r_m^+, r_m^-).

The estimating equation matches sample means of ``f_j(u * increment)`` with
model-implied moments of the approximating process and is solved by a damped,
projected Newton iteration.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .baselines import ThresholdSpec, aj_alpha, default_volatility_threshold, truncated_rv
from .charfn import GridSpec, ThetaParams
from .errors import (GridResolutionError, IdentificationError, InsufficientExceedancesError, ParameterError,
                     SingularMatrixError)
from .moments import (MomentEngine, MomentFunction, MomentFunctionSet, jump_functional,
                      jump_functional_dalpha, product, sample_moment_sums, _sup_norm)

log = logging.getLogger(__name__)


class ConditionUWarning(UserWarning):
    """The scaling constant exceeds the bound under which the theory is stated."""


def scaling_factor(n: int, mode: str = "practical", tau: float | None = None,
                   h: float | None = None, sigma_bound: float | None = None,
                   eta: float | None = None) -> float:
    """Frequency scaling ``u``.

    ``practical``: ``1/sqrt(h |log h|)`` with ``h = 1/n`` unless given.
    ``theory``: ``tau sqrt(n / log n)``; warns if ``tau >= eta / (sigma sqrt 8)``.
    """
    if n < 2:
        raise ParameterError("n must be at least 2")
    if mode == "practical":
        h = 1.0 / n if h is None else h
        if not 0 < h < 1:
            raise ParameterError("practical scaling needs 0 < h < 1")
        return 1.0 / math.sqrt(h * abs(math.log(h)))
    if mode == "theory":
        if tau is None or not tau > 0:
            raise ParameterError("theory scaling needs tau > 0")
        if sigma_bound is not None and eta is not None and tau >= eta / (sigma_bound * math.sqrt(8.0)):
            warnings.warn(f"tau={tau:g} is not below eta/(sigma sqrt 8)={eta / (sigma_bound * math.sqrt(8)):g}",
                          ConditionUWarning, stacklevel=2)
        return tau * math.sqrt(n / math.log(n))
    raise ParameterError(f"unknown scaling mode {mode!r}")


def sample_moments(batch, u: float, fset: MomentFunctionSet) -> np.ndarray:
    """Means of ``f_j(u * increment)``."""
    sums, _ = sample_moment_sums(batch.values, u, fset)
    return sums / batch.n


def sample_moment_stats(batch, u: float, fset: MomentFunctionSet):
    """Means and standard errors of the sample moments."""
    sums, sq = sample_moment_sums(batch.values, u, fset)
    n = batch.n
    mean = sums / n
    var = np.maximum(sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def estimating_function(theta: ThetaParams, batch_moments, h: float, u: float, fset,
                        spec: GridSpec | None = None) -> np.ndarray:
    """``F_n(theta) = batch_moments - E_theta f(u Z_h)``."""
    engine = MomentEngine(fset, h, u, spec)
    return np.asarray(batch_moments, dtype=float) - engine.moments(theta.to_vector())


# ---------------------------------------------------------------------------
# asymptotic matrices


@dataclass(frozen=True)
class RateMatrices:
    gamma_n: np.ndarray
    lambda_n: np.ndarray
    lambda_tilde_n: np.ndarray
    lambda_bar_n: np.ndarray
    log_u: float


def rate_matrices(theta: ThetaParams, n: int, u: float) -> RateMatrices:
    if not u > 1:
        raise ParameterError("rate matrices need u > 1")
    h = 1.0 / n
    p = theta.dim
    lu = math.log(u)
    gamma = np.eye(p)
    lam = np.empty(p)
    lam_t = np.empty(p)
    lam[0] = lam_t[0] = h * u * u
    a1 = theta.components[0][0] if theta.components else 2.0
    for m, (alpha, rp, rm) in enumerate(theta.components):
        i = 1 + 3 * m
        gamma[i + 1, i] = -rp * lu
        gamma[i + 2, i] = -rm * lu
        lam[i:i + 3] = h * u ** alpha
        lam_t[i:i + 3] = math.sqrt(h * u ** a1)
    return RateMatrices(gamma, np.diag(lam), np.diag(lam_t), np.diag(lam / lam_t), lu)


def _jump_terms(theta: ThetaParams, f: MomentFunction, m: int):
    alpha, rp, rm = theta.components[m]
    jp, jm = jump_functional(alpha, "+", f), jump_functional(alpha, "-", f)
    dp, dm = jump_functional_dalpha(alpha, "+", f), jump_functional_dalpha(alpha, "-", f)
    return rp * dp + rm * dm, jp, jm


def a_matrix(theta: ThetaParams, fset) -> np.ndarray:
    funcs = list(fset)
    p = theta.dim
    if len(funcs) != p:
        raise ParameterError(f"need {p} moment functions for {theta.n_components} components")
    a = np.zeros((p, p))
    a[0, 0] = funcs[0].d2(0.0) / 2.0
    for j in range(1, p):
        for m in range(theta.n_components):
            a[j, 1 + 3 * m: 4 + 3 * m] = _jump_terms(theta, funcs[j], m)
    return a


def sigma_matrix(theta: ThetaParams, fset) -> np.ndarray:
    funcs = list(fset)
    p = len(funcs)
    s = np.zeros((p, p))
    s[0, 0] = theta.sigma_sq ** 2 * funcs[0].d2(0.0) ** 2 / 2.0
    if theta.components:
        alpha, rp, rm = theta.components[0]
        for j in range(1, p):
            for k in range(j, p):
                g = product(funcs[j], funcs[k])
                val = rp * jump_functional(alpha, "+", g) + rm * jump_functional(alpha, "-", g)
                s[j, k] = s[k, j] = val
    return s


def asymptotic_covariance(theta: ThetaParams, fset, n: int, u: float, a=None, sigma=None) -> np.ndarray:
    """``(1/n) Gamma Lbar^-1 A^-1 Sigma A^-T Lbar^-1 Gamma^T``."""
    a = a_matrix(theta, fset) if a is None else a
    sigma = sigma_matrix(theta, fset) if sigma is None else sigma
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(f"A(theta) is singular (condition number {cond:.3g})")
    rm = rate_matrices(theta, n, u)
    a_inv = np.linalg.inv(a)
    left = rm.gamma_n @ np.linalg.inv(rm.lambda_bar_n) @ a_inv
    cov = left @ sigma @ left.T / n
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class GmmOptions:
    """Solver settings.

    ``tolerance`` applies to the max-norm of the residual measured in sample
    standard errors of the moments. ``init`` is ``"baseline"`` or a
    :class:`ThetaParams` starting point.
    """

    max_iterations: int = 60
    tolerance: float = 1e-6
    max_halvings: int = 20
    margin: float = 1e-6
    alpha_bounds: tuple = (0.05, 1.995)
    alpha_one_gap: float = 1e-3
    init: object = "baseline"
    jacobian: str = "finite_difference"
    fd_step: float = 1e-4
    restarts: int = 0
    fallback_alphas: tuple = (1.5, 1.2, 1.8, 0.7)
    stall_window: int = 5
    trust_region: bool = True
    volatility_weight: float = 1.0
    restart_seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    max_points: int = 2 ** 18
    refine_tol: float = 1e-8
    singular_cond: float = 1e12
    boundary_patience: int = 3
    ci_level: float = 0.95
    compute_covariance: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        lo, hi = self.alpha_bounds
        if not 0 < lo < hi < 2:
            raise ParameterError("alpha bounds must satisfy 0 < lo < hi < 2")
        if self.max_iterations < 1 or self.max_halvings < 0:
            raise ParameterError("iteration limits must be positive")
        if self.jacobian not in ("finite_difference", "analytic"):
            raise ParameterError(f"unknown Jacobian method {self.jacobian!r}")
        if not 0 < self.ci_level < 1:
            raise ParameterError("ci_level must lie in (0, 1)")


@dataclass
class EstimationResult:
    theta_hat: ThetaParams | None
    status: str
    iterations: int
    residual_norm: float
    residual_raw: float
    jacobian_cond: float
    asym_cov: np.ndarray | None
    ci: dict | None
    u_used: float
    n: int
    h: float
    boundary: bool = False
    singular: bool = False
    theta_init: ThetaParams | None = None
    sandwich_cov: np.ndarray | None = None
    rates: RateMatrices | None = None
    multistart_disagreement: float | None = None
    grid_points: int = 0
    grid_cutoff: float = float("nan")
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "boundary")

    def standard_errors(self) -> np.ndarray | None:
        if self.asym_cov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.asym_cov), 0.0, None))

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()
        names = self.theta_hat.coordinate_names() if self.theta_hat is not None else []
        return {
            "status": self.status,
            "converged": self.converged,
            "boundary": self.boundary,
            "singular": self.singular,
            "theta_hat": None if self.theta_hat is None else dict(zip(names, self.theta_hat.to_vector().tolist())),
            "theta_init": None if self.theta_init is None else self.theta_init.to_vector().tolist(),
            "asym_cov": arr(self.asym_cov),
            "sandwich_cov": arr(self.sandwich_cov),
            "ci": None if self.ci is None else {k: list(v) for k, v in self.ci.items()},
            "u_used": self.u_used,
            "n": self.n,
            "h": self.h,
            "diagnostics": {
                "iterations": self.iterations,
                "residual_norm": self.residual_norm,
                "residual_raw": self.residual_raw,
                "jacobian_cond": self.jacobian_cond,
                "multistart_disagreement": self.multistart_disagreement,
                "grid_points": self.grid_points,
                "grid_cutoff": self.grid_cutoff,
                "message": self.message,
            },
        }


class _Problem:
    """Box-projected Newton problem on the raw parameter vector."""

    def __init__(self, batch, fset, u, opts: GmmOptions, sample=None):
        self.fset = fset
        self.opts = opts
        self.u = u
        self.n = batch.n
        self.h = batch.h
        if sample is None:
            self.m_hat, se = sample_moment_stats(batch, u, fset)
        else:
            self.m_hat, se = (np.asarray(x, dtype=float) for x in sample)
        sup = np.array([max(1e-300, _sup_norm(f)) for f in fset])
        # a zero sample variance still leaves one observation's worth of noise
        self.scale = np.maximum(se, sup / self.n)
        self.engine = MomentEngine(fset, batch.h, u, opts.grid, opts.max_points, opts.refine_tol)
        self.p = len(fset)
        n_comp = (self.p - 1) // 3
        lo = np.full(self.p, opts.margin)
        hi = np.full(self.p, np.inf)
        lo[1::3] = opts.alpha_bounds[0]
        hi[1::3] = opts.alpha_bounds[1]
        self.lower, self.upper = lo, hi
        self.n_comp = n_comp
        self.grid = None

    def project(self, vec, prev=None):
        v = np.clip(vec, self.lower, self.upper)
        gap = self.opts.alpha_one_gap
        for i in range(1, self.p, 3):
            if abs(v[i] - 1.0) < gap:
                side = np.sign(v[i] - 1.0) or np.sign((prev[i] if prev is not None else 1.5) - 1.0)
                v[i] = 1.0 + side * gap
        # keep indices strictly ordered with every index above alpha_1 / 2
        for m in range(1, self.n_comp):
            i = 1 + 3 * m
            top = v[i - 3] - 1e-3
            bottom = v[1] / 2.0 + 1e-3
            v[i] = min(max(v[i], bottom), top)
        return v

    def set_grid(self, vec):
        try:
            res = self.engine.resolve(vec)
        except GridResolutionError:
            if self.grid is None:
                raise
            # keep the previous geometry; it was good enough for this iterate's line search
            return self.engine.moments_on(vec, *self.grid)
        self.grid = (res.cutoff, res.n_points)
        return res.values

    def residual(self, vec):
        return self.m_hat - self.engine.moments_on(vec, *self.grid)

    def merit(self, res):
        return float(np.max(np.abs(res) / self.scale))

    def jacobian(self, vec, base_moments):
        if self.opts.jacobian == "analytic":
            return self.engine.jacobian_analytic(vec, *self.grid)
        return self.engine.jacobian_fd(vec, *self.grid, lower=self.lower, upper=self.upper,
                                       rel_step=self.opts.fd_step, base=base_moments)


def baseline_initial_guess(batch, fset, u: float, opts: GmmOptions | None = None) -> ThetaParams:
    """Starting point from threshold baselines.

    sigma^2 from truncated realized variance, alpha from the two-threshold
    exceedance ratio, and (r+, r-) by least squares on the jump moments using
    the near-linearity of small-time moments in r.
    """
    opts = opts or GmmOptions()
    if (len(fset) - 1) // 3 != 1:
        raise ParameterError("baseline initialization covers one jump component; pass init explicitly")
    vol_spec = default_volatility_threshold(batch)
    sigma_sq = max(truncated_rv(batch, vol_spec), 1e-4)
    sigma = math.sqrt(sigma_sq)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha = aj_alpha(batch, ThresholdSpec(4.0 * sigma, 0.49), ThresholdSpec(8.0 * sigma, 0.49))
    except InsufficientExceedancesError:
        alpha = 1.5
    lo, hi = opts.alpha_bounds
    alpha = float(np.clip(alpha, max(lo, 0.2), min(hi, 1.95)))
    if abs(alpha - 1.0) < 0.05:
        alpha = 1.05 if alpha >= 1.0 else 0.95
    engine = MomentEngine(fset, batch.h, u, opts.grid, max_points=opts.grid.n_points)
    m_hat, se = sample_moment_stats(batch, u, fset)
    scale = np.maximum(se, engine._sup / batch.n)
    rp, rm = _linear_weights(engine, m_hat, scale, sigma_sq, alpha)
    return ThetaParams(sigma_sq, ((alpha, rp, rm),))


def _linear_weights(engine, m_hat, scale, sigma_sq, alpha):
    """(r+, r-) by weighted least squares on the jump rows, treating moments as affine in r."""
    try:
        base = engine.moments(np.array([sigma_sq, alpha, 0.0, 0.0]))
        e_plus = engine.moments(np.array([sigma_sq, alpha, 1.0, 0.0])) - base
        e_minus = engine.moments(np.array([sigma_sq, alpha, 0.0, 1.0])) - base
    except GridResolutionError:
        return 0.5, 0.5
    w = 1.0 / scale[1:]
    design = np.column_stack([e_plus[1:], e_minus[1:]]) * w[:, None]
    target = (m_hat[1:] - base[1:]) * w
    coef = np.linalg.lstsq(design, target, rcond=None)[0]
    floor = max(0.05 * max(coef.max(), 0.0), 1e-3)
    return tuple(float(max(c, floor)) for c in coef)


def _solve_from(problem: _Problem, vec0: np.ndarray):
    """Projected Newton with an active set.

    Coordinates sitting on a bound whose Newton step points outward are frozen
    and the rest solved by least squares; the line search then uses the
    2-norm of the scaled residual, which the reduced step decreases.
    """
    opts = problem.opts
    vec = problem.project(np.asarray(vec0, dtype=float))
    try:
        model = problem.set_grid(vec)
    except GridResolutionError as exc:
        return vec, "failed", 0, float("inf"), float("inf"), float("nan"), False, str(exc)
    w = 1.0 / problem.scale
    res = problem.m_hat - model
    merit = problem.merit(res)
    pinned = np.zeros(problem.p, dtype=int)
    status, message, cond = "failed", "", float("nan")
    reduced = False
    history = [merit]
    it = 0
    for it in range(1, opts.max_iterations + 1):
        if merit < opts.tolerance:
            status, it = "converged", it - 1
            break
        jac = problem.jacobian(vec, model)
        col = np.linalg.norm(jac * w[:, None], axis=0)
        col[col == 0] = 1.0
        scaled = (jac * w[:, None]) / col
        cond = float(np.linalg.cond(scaled))
        if not np.isfinite(cond) or cond > opts.singular_cond:
            status, message = "singular", f"Jacobian condition number {cond:.3g}"
            break
        rhs = res * w
        step = np.linalg.solve(scaled, rhs) / col
        tight = 1e-9 * np.maximum(1.0, np.abs(vec))
        at_lo = vec <= problem.lower + tight
        at_hi = vec >= problem.upper - tight
        active = (at_lo & (step < 0)) | (at_hi & (step > 0))
        for _ in range(problem.p):
            if not active.any():
                break
            free = ~active
            step = np.zeros(problem.p)
            step[free] = np.linalg.lstsq(scaled[:, free], rhs, rcond=None)[0] / col[free]
            grown = active | (at_lo & (step < 0)) | (at_hi & (step > 0))
            if (grown == active).all():
                break
            active = grown
        reduced = bool(active.any())
        pinned = np.where(active, pinned + 1, 0)

        def size(r):
            return float(np.linalg.norm(r * w)) if reduced else problem.merit(r)

        current = size(res)
        accepted = False
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = problem.project(vec + t * step, prev=vec)
            try:
                trial_res = problem.residual(trial)
            except GridResolutionError:
                t *= 0.5
                continue
            if size(trial_res) < current:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if reduced:
                status, message = "boundary", "constrained least-squares point on the boundary"
            else:
                message = "line search could not decrease the residual"
            break
        moved = float(np.max(np.abs(trial - vec) / np.maximum(np.abs(vec), 1e-8)))
        vec = trial
        model = problem.set_grid(vec)
        res = problem.m_hat - model
        merit = problem.merit(res)
        history.append(merit)
        if len(history) > opts.stall_window and merit > 0.9 * history[-1 - opts.stall_window] \
                and merit > opts.tolerance:
            message = "Newton iteration stalled"
            break
        if reduced and pinned.max() >= opts.boundary_patience and (
                moved < 1e-8 or current - size(res) < 1e-8 * current):
            status, message = "boundary", "parameter pinned at a bound"
            break
    else:
        if merit < opts.tolerance:
            status = "converged"
        elif reduced and pinned.max() >= opts.boundary_patience:
            status, message = "boundary", "parameter pinned at a bound"
        else:
            message = "maximum number of iterations reached"
    return vec, status, it, merit, float(np.max(np.abs(res))), cond, status == "boundary", message


def _trust_region(problem: _Problem, vec0: np.ndarray, rounds: int = 3):
    """Bounded trust-region least squares on the scaled residual.

    Used when the Newton path stalls, typically because the root lies outside
    the parameter box. The grid is frozen within a round and re-resolved
    between rounds.
    """
    opts = problem.opts
    w = 1.0 / problem.scale
    # optional extra weight on the volatility row, which stays well posed when the jump rows have no root
    w = w.copy()
    w[0] *= opts.volatility_weight
    lo, hi = problem.lower.copy(), problem.upper.copy()
    gap = opts.alpha_one_gap
    for i in range(1, problem.p, 3):
        if vec0[i] > 1.0:
            lo[i] = max(lo[i], 1.0 + gap)
        else:
            hi[i] = min(hi[i], 1.0 - gap)
    vec = np.clip(vec0, lo, hi)
    total = 0

    def fun(x):
        try:
            return problem.residual(x) * w
        except GridResolutionError:
            return np.full(problem.p, 1e6)

    def jac(x):
        # the analytic Jacobian costs one inversion instead of 2p
        return -problem.engine.jacobian_analytic(x, *problem.grid) * w[:, None]

    for _ in range(rounds):
        try:
            problem.set_grid(vec)
        except GridResolutionError as exc:
            return vec, "failed", total, float("inf"), float("inf"), float("nan"), False, str(exc)
        grid = problem.grid
        sol = optimize.least_squares(fun, vec, jac=jac, bounds=(lo, hi), method="trf",
                                     x_scale="jac", xtol=1e-8, ftol=1e-8, gtol=1e-8,
                                     max_nfev=opts.max_iterations)
        total += sol.nfev
        moved = np.max(np.abs(sol.x - vec) / np.maximum(np.abs(vec), 1e-8))
        vec = sol.x
        problem.set_grid(vec)
        if problem.grid == grid and moved < 1e-10:
            break
    res = problem.residual(vec)
    merit = problem.merit(res)
    tight = 1e-6 * np.maximum(1.0, np.abs(vec))
    on_bound = bool(np.any((vec <= lo + tight) | (vec >= hi - tight)))
    col = np.linalg.norm(sol.jac, axis=0)
    col[col == 0] = 1.0
    cond = float(np.linalg.cond(sol.jac / col))
    if merit < opts.tolerance:
        status, message = "converged", "trust-region fallback"
    elif on_bound:
        status, message = "boundary", "no root inside the parameter box; least-squares point on the boundary"
    else:
        status, message = "failed", "trust-region fallback did not reach a root"
    return vec, status, total, merit, float(np.max(np.abs(res))), cond, on_bound, message


def solve_gmm(batch, fset: MomentFunctionSet, u: float, opts: GmmOptions | None = None,
              sample=None) -> EstimationResult:
    """Solve the estimating equation by damped, projected Newton iteration.

    ``sample = (means, standard_errors)`` replaces the moments computed from
    ``batch``, which then only supplies ``n`` and ``h``.
    """
    opts = opts or GmmOptions()
    problem = _Problem(batch, fset, u, opts, sample)
    if isinstance(opts.init, ThetaParams):
        theta0 = opts.init
    elif opts.init == "baseline":
        theta0 = baseline_initial_guess(batch, fset, u, opts)
    else:
        raise ParameterError(f"unknown initialization {opts.init!r}")
    if theta0.dim != problem.p:
        raise ParameterError("initial point dimension does not match the moment set")
    out = _solve_from(problem, theta0.to_vector())
    if out[1] == "failed" and opts.trust_region and np.isfinite(out[3]):
        cand = _trust_region(problem, out[0])
        cand = cand[:2] + (out[2] + cand[2],) + cand[3:]
        if cand[1] != "failed" or cand[3] < out[3]:
            out = cand
    if out[1] == "failed" and opts.fallback_alphas and problem.n_comp == 1:
        # the exceedance-ratio start can land in the wrong basin; retry on an alpha ladder
        for alpha in opts.fallback_alphas:
            rp, rm = _linear_weights(problem.engine, problem.m_hat, problem.scale, theta0.sigma_sq, alpha)
            cand = _solve_from(problem, np.array([theta0.sigma_sq, alpha, rp, rm]))
            if cand[1] != "failed" or cand[3] < out[3]:
                out = cand
            if out[1] != "failed":
                break
    vec, status, it, merit, raw, cond, boundary, message = out

    disagreement = None
    if opts.restarts > 0:
        rng = np.random.default_rng(opts.restart_seed)
        roots = []
        for _ in range(opts.restarts):
            start = theta0.to_vector().copy()
            start[0] *= math.exp(rng.uniform(-0.2, 0.2))
            start[1::3] += rng.uniform(-0.2, 0.2, size=problem.n_comp)
            start[2::3] *= np.exp(rng.uniform(-0.5, 0.5, size=problem.n_comp))
            start[3::3] *= np.exp(rng.uniform(-0.5, 0.5, size=problem.n_comp))
            out = _solve_from(problem, start)
            if out[1] in ("converged", "boundary"):
                roots.append(out[0])
        if roots and status in ("converged", "boundary"):
            disagreement = float(max(np.max(np.abs(r - vec)) for r in roots))

    singular = status == "singular"
    theta_hat = None
    try:
        theta_hat = ThetaParams.from_vector(vec)
    except ParameterError as exc:
        message = f"{message}; iterate outside the parameter space: {exc}"
        status = "failed"

    asym_cov = ci = sandwich = rates = None
    if theta_hat is not None and not singular:
        rates = rate_matrices(theta_hat, batch.n, u) if u > 1 else None
        jac = problem.jacobian(vec, problem.engine.moments_on(vec, *problem.grid))
        sandwich = _sandwich(batch, fset, u, jac)
        if opts.compute_covariance and rates is not None:
            try:
                asym_cov = asymptotic_covariance(theta_hat, fset, batch.n, u)
            except (SingularMatrixError, np.linalg.LinAlgError) as exc:
                message = f"{message}; {exc}".strip("; ")
        cov_for_ci = asym_cov if asym_cov is not None else sandwich
        if cov_for_ci is not None:
            z = stats.norm.ppf(0.5 + opts.ci_level / 2.0)
            sd = np.sqrt(np.clip(np.diag(cov_for_ci), 0.0, None))
            ci = {name: (float(v - z * s), float(v + z * s))
                  for name, v, s in zip(theta_hat.coordinate_names(), vec, sd)}

    return EstimationResult(
        theta_hat=theta_hat, status=status, iterations=it, residual_norm=merit, residual_raw=raw,
        jacobian_cond=cond, asym_cov=asym_cov, ci=ci, u_used=u, n=batch.n, h=batch.h,
        boundary=boundary, singular=singular, theta_init=theta0, sandwich_cov=sandwich, rates=rates,
        multistart_disagreement=disagreement, grid_points=problem.grid[1] if problem.grid else 0,
        grid_cutoff=problem.grid[0] if problem.grid else float("nan"), message=message)


def _sandwich(batch, fset, u, jac):
    """Finite-sample covariance ``J^-1 V J^-T / n`` from the sample covariance ``V`` of the moments."""
    vals = np.vstack([np.asarray(f.eval(u * batch.values), dtype=float) for f in fset])
    v = np.cov(vals) if batch.n > 1 else np.zeros((len(fset), len(fset)))
    try:
        j_inv = np.linalg.inv(jac)
    except np.linalg.LinAlgError:
        return None
    cov = j_inv @ v @ j_inv.T / batch.n
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# single-moment estimators


@dataclass(frozen=True)
class SingleParamResult:
    estimate: float
    asym_var: float
    asym_sd: float
    rate: float
    target: str
    component: int
    ci: tuple

    def covers(self, truth: float) -> bool:
        return self.ci[0] <= truth <= self.ci[1]


def _parse_target(target: str):
    t = target.replace("^", "_").replace("+", "plus").replace("-", "minus")
    for prefix, kind in (("alpha", "alpha"), ("r_plus", "r_plus"), ("r_minus", "r_minus"),
                         ("rplus", "r_plus"), ("rminus", "r_minus"), ("r_mplus", "r_plus"),
                         ("r_mminus", "r_minus")):
        if t.startswith(prefix):
            rest = t[len(prefix):].strip("_")
            comp = int(rest) - 1 if rest.isdigit() else 0
            return kind, comp
    raise ParameterError(f"unknown target {target!r}")


def single_param_estimator(batch, f: MomentFunction, u: float, theta_known: ThetaParams,
                           target: str = "alpha_1", level: float = 0.95,
                           spec: GridSpec | None = None) -> SingleParamResult:
    """Estimate one coordinate from one moment function with all others known.

    The root of ``mean f(u x_i) - E_theta f(u Z_h)`` in the target coordinate is
    bracketed and found by Brent's method. The asymptotic variance is the
    ratio of the jump functional of ``f^2`` to the squared derivative constant.
    """
    kind, m = _parse_target(target)
    if m >= theta_known.n_components:
        raise ParameterError("component index out of range")
    if not f.eta > 0:
        raise ParameterError("single-moment estimation needs a function vanishing near zero")
    alpha_m, rp_m, rm_m = theta_known.components[m]
    j_plus, j_minus = jump_functional(alpha_m, "+", f), jump_functional(alpha_m, "-", f)
    idx = 1 + 3 * m + {"alpha": 0, "r_plus": 1, "r_minus": 2}[kind]
    if kind == "r_plus" and j_plus <= 0 or kind == "r_minus" and j_minus <= 0:
        raise IdentificationError(f"target {target} not identified: the jump functional of f is zero")
    if kind == "alpha" and rp_m * j_plus + rm_m * j_minus <= 0:
        raise IdentificationError(f"target {target} not identified: the jump functional of f is zero")

    engine = MomentEngine([f], batch.h, u, spec)
    base = theta_known.to_vector()
    sums, _ = sample_moment_sums(batch.values, u, _SingleSet(f))
    m_hat = sums[0] / batch.n
    grid = engine.resolve(base)

    def resid(x):
        v = base.copy()
        v[idx] = x
        return m_hat - engine.moments_on(v, grid.cutoff, grid.n_points)[0]

    if kind == "alpha":
        alphas = theta_known.alphas
        lower = 0.02 if m == len(alphas) - 1 else alphas[m + 1] + 1e-4
        lower = max(lower, alphas[0] / 2 + 1e-4) if m > 0 else lower
        upper = 1.999 if m == 0 else alphas[m - 1] - 1e-4
        if alpha_m > 1:
            lower = max(lower, 1.0 + 1e-3)
        else:
            upper = min(upper, 1.0 - 1e-3)
        bracket = (lower, upper)
    else:
        hi = 10.0 * (base[idx] + 1.0)
        bracket = (0.0, hi)
        while resid(hi) > 0 and hi < 1e8:
            hi *= 10.0
        bracket = (0.0, hi)
    f_lo, f_hi = resid(bracket[0]), resid(bracket[1])
    if not np.isfinite(f_lo) or not np.isfinite(f_hi) or f_lo * f_hi > 0:
        raise IdentificationError(f"target {target} not identified: no sign change on {bracket}")
    est = optimize.brentq(resid, *bracket, xtol=1e-12, rtol=1e-12)

    alpha1, rp1, rm1 = theta_known.components[0]
    f_sq = product(f, f)
    numer = rp1 * jump_functional(alpha1, "+", f_sq) + rm1 * jump_functional(alpha1, "-", f_sq)
    # with h = 1/n the sampling sd of the estimating function is u^(alpha_1/2)/n
    lu = math.log(u)
    if kind == "alpha":
        denom = (rp_m * j_plus + rm_m * j_minus) ** 2
        rate = u ** (alpha_m - alpha1 / 2.0) * lu
    else:
        denom = (j_plus if kind == "r_plus" else j_minus) ** 2
        rate = u ** (alpha_m - alpha1 / 2.0)
    horizon = batch.n * batch.h
    var = numer / denom / horizon
    sd = math.sqrt(var) / rate
    z = stats.norm.ppf(0.5 + level / 2.0)
    return SingleParamResult(float(est), float(var), float(sd), float(rate), kind, m,
                             (float(est - z * sd), float(est + z * sd)))


class _SingleSet:
    fused = None

    def __init__(self, f):
        self.functions = (f,)

    def evaluate(self, x):
        return np.asarray(self.functions[0].eval(np.asarray(x, dtype=float)), dtype=float)[None, :]
