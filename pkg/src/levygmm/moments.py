"""Moment functions, model-implied moments and jump functionals.

Expected moments ``E f(u Z_h)`` are computed by trapezoidal quadrature against
a Fourier-inverted density grid; one grid serves the whole moment vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import kernels
from .charfn import (DensityGrid, GridSpec, ThetaParams, auto_cutoff_vector, check_alpha,
                     clip_ringing, density_values, half_spectrum, invert_half_spectrum,
                     psi_gradient_vector, psi_vector, tail_probability_bound)
from .errors import HypothesisMismatchError, ParameterError, QuadratureError

# ---------------------------------------------------------------------------
# moment functions


def _as_array(x):
    return np.asarray(x, dtype=float)


def _shape_like(out, x):
    return out if np.ndim(x) else float(out.reshape(-1)[0])


@dataclass(frozen=True)
class MomentFunction:
    """A C^3 function with its first three derivatives.

    ``eta > 0`` asserts that the function vanishes on ``[-eta, eta]``;
    ``support`` is an interval outside of which it vanishes (None if unbounded).
    """

    eval: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    eta: float = 0.0
    symmetric: bool = False
    integrable_d1: bool = True
    name: str = "f"
    support: tuple | None = None
    bandwidth: float | None = None

    def __call__(self, x):
        return self.eval(x)

    def derivative(self, k: int):
        return (self.eval, self.d1, self.d2, self.d3)[k]

    def d4_at_zero(self, step: float = 1e-2) -> float:
        """Second difference of ``f''`` at 0 with one Richardson step."""
        def dd(s):
            return (self.d2(s) - 2.0 * self.d2(0.0) + self.d2(-s)) / s ** 2
        return float((4.0 * dd(step / 2.0) - dd(step)) / 3.0)

    def scaled(self, c: float, name: str | None = None) -> "MomentFunction":
        """``x -> f(c x)`` for ``c > 0``."""
        if not c > 0:
            raise ParameterError("scale factor must be positive")
        f = self
        supp = None if f.support is None else (f.support[0] / c, f.support[1] / c)
        return MomentFunction(
            lambda x: f.eval(c * _as_array(x)),
            lambda x: c * f.d1(c * _as_array(x)),
            lambda x: c ** 2 * f.d2(c * _as_array(x)),
            lambda x: c ** 3 * f.d3(c * _as_array(x)),
            eta=f.eta / c, symmetric=f.symmetric, integrable_d1=f.integrable_d1,
            name=name or f"{f.name}({c:g}x)", support=supp,
            bandwidth=None if f.bandwidth is None else c * f.bandwidth)

    def reflected(self) -> "MomentFunction":
        f = self
        supp = None if f.support is None else (-f.support[1], -f.support[0])
        return MomentFunction(
            lambda x: f.eval(-_as_array(x)),
            lambda x: -f.d1(-_as_array(x)),
            lambda x: f.d2(-_as_array(x)),
            lambda x: -f.d3(-_as_array(x)),
            eta=f.eta, symmetric=f.symmetric, integrable_d1=f.integrable_d1,
            name=f"{f.name}(-x)", support=supp, bandwidth=f.bandwidth)

    def __mul__(self, other):
        if isinstance(other, MomentFunction):
            return product(self, other)
        return linear_combination([(float(other), self)])

    __rmul__ = __mul__

    def __add__(self, other):
        return linear_combination([(1.0, self), (1.0, other)])


def _merge_support(supports, how):
    if any(s is None for s in supports):
        if how == "union":
            return None
        supports = [s for s in supports if s is not None]
        if not supports:
            return None
    lo = [s[0] for s in supports]
    hi = [s[1] for s in supports]
    if how == "union":
        return (min(lo), max(hi))
    return (max(lo), min(hi))


def _max_bandwidth(values):
    return None if any(v is None for v in values) else max(values)


def linear_combination(terms: Sequence[tuple]) -> MomentFunction:
    """``sum_i c_i f_i`` for ``terms = [(c_i, f_i), ...]``."""
    terms = [(float(c), f) for c, f in terms]

    def make(k):
        return lambda x: sum(c * f.derivative(k)(x) for c, f in terms)

    etas = [f.eta for _, f in terms]
    return MomentFunction(make(0), make(1), make(2), make(3),
                          eta=min(etas) if all(e > 0 for e in etas) else 0.0,
                          symmetric=all(f.symmetric for _, f in terms),
                          integrable_d1=all(f.integrable_d1 for _, f in terms),
                          name=" + ".join(f"{c:g}*{f.name}" for c, f in terms),
                          support=_merge_support([f.support for _, f in terms], "union"),
                          bandwidth=_max_bandwidth([f.bandwidth for _, f in terms]))


def product(f: MomentFunction, g: MomentFunction) -> MomentFunction:
    """Pointwise product with Leibniz-rule derivatives."""
    def d0(x):
        return f.eval(x) * g.eval(x)

    def d1(x):
        return f.d1(x) * g.eval(x) + f.eval(x) * g.d1(x)

    def d2(x):
        return f.d2(x) * g.eval(x) + 2 * f.d1(x) * g.d1(x) + f.eval(x) * g.d2(x)

    def d3(x):
        return (f.d3(x) * g.eval(x) + 3 * f.d2(x) * g.d1(x)
                + 3 * f.d1(x) * g.d2(x) + f.eval(x) * g.d3(x))

    return MomentFunction(d0, d1, d2, d3, eta=max(f.eta, g.eta),
                          symmetric=f.symmetric and g.symmetric,
                          integrable_d1=f.integrable_d1 or g.integrable_d1,
                          name=f"{f.name}*{g.name}",
                          support=_merge_support([f.support, g.support], "intersection"),
                          bandwidth=None if f.bandwidth is None or g.bandwidth is None
                          else f.bandwidth + g.bandwidth)


def splice(positive: MomentFunction, negative: MomentFunction, name: str = "splice") -> MomentFunction:
    """``positive`` on ``x >= 0`` and ``negative`` on ``x < 0``; both must vanish near 0."""
    if not (positive.eta > 0 and negative.eta > 0):
        raise ParameterError("spliced pieces must vanish near zero")

    def make(k):
        fp, fn = positive.derivative(k), negative.derivative(k)

        def fun(x):
            xa = _as_array(x)
            return _shape_like(np.where(xa >= 0, fp(xa), fn(xa)), x)
        return fun

    sp = positive.support or (-np.inf, np.inf)
    sn = negative.support or (-np.inf, np.inf)
    supp = (min(sn[0], 0.0), max(sp[1], 0.0))
    supp = None if not np.all(np.isfinite(supp)) else supp
    return MomentFunction(make(0), make(1), make(2), make(3),
                          eta=min(positive.eta, negative.eta), symmetric=False,
                          name=name, support=supp,
                          bandwidth=_max_bandwidth([positive.bandwidth, negative.bandwidth]))


def zero_function() -> MomentFunction:
    def zero(x):
        return _shape_like(np.zeros_like(_as_array(x)), x)
    return MomentFunction(zero, zero, zero, zero, eta=np.inf, symmetric=True, name="0",
                          support=(0.0, 0.0), bandwidth=0.0)


def gaussian_dip(k: float = 10.0) -> MomentFunction:
    """``1 - exp(-k x^2)``; second derivative ``2k`` at the origin."""
    def g(x):
        return np.exp(-k * _as_array(x) ** 2)

    def d0(x):
        return _shape_like(-np.expm1(-k * _as_array(x) ** 2), x)

    def d1(x):
        xa = _as_array(x)
        return _shape_like(2 * k * xa * g(xa), x)

    def d2(x):
        xa = _as_array(x)
        return _shape_like((2 * k - 4 * k * k * xa ** 2) * g(xa), x)

    def d3(x):
        xa = _as_array(x)
        return _shape_like((-12 * k * k * xa + 8 * k ** 3 * xa ** 3) * g(xa), x)

    # Fourier transform of the Gaussian part decays like exp(-l^2 / (4k))
    return MomentFunction(d0, d1, d2, d3, eta=0.0, symmetric=True, integrable_d1=True,
                          name="gauss_dip", bandwidth=math.sqrt(4 * k * 30.0))


@dataclass(frozen=True)
class BumpShape:
    """``exp(-a/(y - lo) - b/(hi - y))`` on ``(lo, hi)``, rescaled to peak value 1."""

    lo: float = 0.2
    hi: float = 4.0
    a: float = 300.0
    b: float = 10.0

    @property
    def peak(self) -> float:
        k = math.sqrt(self.b / self.a)
        return (self.hi + k * self.lo) / (1.0 + k)

    @property
    def log_peak(self) -> float:
        y = self.peak
        return self.a / (y - self.lo) + self.b / (self.hi - y)

    def kernel_args(self):
        return (self.lo, self.hi, self.a, self.b, self.log_peak)

    def log_derivatives(self, y):
        """First three derivatives of the exponent, valid inside the support."""
        p, q = y - self.lo, self.hi - y
        e1 = self.a / p ** 2 - self.b / q ** 2
        e2 = -2 * self.a / p ** 3 - 2 * self.b / q ** 3
        e3 = 6 * self.a / p ** 4 - 6 * self.b / q ** 4
        return e1, e2, e3


# frequency (per unit argument scale) beyond which the default bump's transform
# is below 1e-7 of its peak; fixed by a convergence study of cutoff doubling
BUMP_BANDWIDTH = 40.0


def bump_function(scale: float, shape: BumpShape | None = None, name: str = "bump") -> MomentFunction:
    """Even bump ``B(scale |x|)``; vanishes for ``|x| <= lo / scale`` and ``|x| >= hi / scale``."""
    shape = shape or BumpShape()
    args = shape.kernel_args()

    def base(x):
        xa = _as_array(x)
        flat = np.ascontiguousarray(xa, dtype=float).reshape(-1)
        return kernels.bump(flat, scale, *args).reshape(xa.shape)

    def d0(x):
        return _shape_like(base(x), x)

    def deriv(order):
        def fun(x):
            xa = _as_array(x)
            val = base(xa)
            out = np.zeros_like(val)
            inside = val > 0
            y = scale * np.abs(xa[inside])
            e1, e2, e3 = shape.log_derivatives(y)
            v = val[inside]
            sgn = np.sign(xa[inside])
            if order == 1:
                out[inside] = scale * sgn * e1 * v
            elif order == 2:
                out[inside] = scale ** 2 * (e2 + e1 * e1) * v
            else:
                out[inside] = scale ** 3 * sgn * (e3 + 3 * e1 * e2 + e1 ** 3) * v
            return _shape_like(out, x)
        return fun

    return MomentFunction(d0, deriv(1), deriv(2), deriv(3), eta=shape.lo / scale, symmetric=True,
                          integrable_d1=True, name=name,
                          support=(-shape.hi / scale, shape.hi / scale),
                          bandwidth=BUMP_BANDWIDTH * scale)


@dataclass(frozen=True)
class MomentFunctionSet:
    """Ordered functions ``f_1, ..., f_{3M+1}``.

    ``fused`` optionally carries parameters of a compiled single-pass
    evaluator for the whole set.
    """

    functions: tuple
    eta: float = field(default=None)
    fused: tuple | None = None

    def __post_init__(self):
        funcs = tuple(self.functions)
        object.__setattr__(self, "functions", funcs)
        if len(funcs) < 4 or (len(funcs) - 1) % 3:
            raise ParameterError("a moment set needs 3M + 1 functions")
        f1 = funcs[0]
        if not f1.symmetric:
            raise ParameterError("the first moment function must be symmetric")
        if abs(f1.eval(0.0)) > 1e-14 or abs(f1.d1(0.0)) > 1e-14 or f1.d2(0.0) == 0.0:
            raise ParameterError("the first moment function needs f(0) = f'(0) = 0 != f''(0)")
        if any(not f.eta > 0 for f in funcs[1:]):
            raise ParameterError("moment functions 2, 3, ... must vanish near zero")
        common = min(f.eta for f in funcs[1:])
        if self.eta is None:
            object.__setattr__(self, "eta", common)
        elif self.eta > common:
            raise ParameterError("declared vanishing radius exceeds that of some function")

    @property
    def n_components(self) -> int:
        return (len(self.functions) - 1) // 3

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __getitem__(self, i):
        return self.functions[i]

    def evaluate(self, x) -> np.ndarray:
        """Matrix of values, shape ``(len(self), len(x))``."""
        xa = np.ascontiguousarray(x, dtype=float).reshape(-1)
        return np.vstack([f.eval(xa) for f in self.functions])


DEFAULT_DIP_COEFF = 10.0
DEFAULT_F2_SCALE = 0.4
DEFAULT_F3_SCALE = 1.6


def default_moment_set() -> MomentFunctionSet:
    """The four-function set for one stable component.

    f1 = 1 - exp(-10 x^2); f2 and f3 are the bump at argument scales 0.4|x| and
    1.6|x|; f4 uses f3 on the positive axis and f2 on the negative axis. Bumps
    are rescaled to unit peak (the raw bump peaks near exp(-110)).
    """
    shape = BumpShape()
    f1 = gaussian_dip(DEFAULT_DIP_COEFF)
    f2 = bump_function(DEFAULT_F2_SCALE, shape, name="f2")
    f3 = bump_function(DEFAULT_F3_SCALE, shape, name="f3")
    f4 = splice(f3, f2, name="f4")
    f1 = MomentFunction(f1.eval, f1.d1, f1.d2, f1.d3, 0.0, True, True, "f1", None, f1.bandwidth)
    fused = (DEFAULT_DIP_COEFF, DEFAULT_F2_SCALE, DEFAULT_F3_SCALE) + shape.kernel_args()
    return MomentFunctionSet((f1, f2, f3, f4), eta=1.0 / 8.0, fused=fused)


def sample_moment_sums(values: np.ndarray, u: float, fset: MomentFunctionSet):
    """Sums and sums of squares of ``f_j(u x_i)`` over the increments."""
    x = np.ascontiguousarray(values, dtype=float).reshape(-1)
    if fset.fused is not None:
        k1, s2, s3, lo, hi, a, b, logpeak = fset.fused
        return kernels.default_moment_sums(x, float(u), k1, s2, s3, lo, hi, a, b, logpeak)
    vals = fset.evaluate(u * x)
    return vals.sum(axis=1), (vals * vals).sum(axis=1)


# ---------------------------------------------------------------------------
# expected moments on a density grid


@dataclass(frozen=True)
class GridMoments:
    values: np.ndarray
    cutoff: float
    n_points: int
    tail_bound: float


class MomentEngine:
    """Model-implied moments and Jacobians for fixed ``(h, u, fset)``.

    Function values on grid nodes are cached by grid geometry, so repeated
    evaluations at nearby parameters cost one FFT each.
    """

    def __init__(self, fset: MomentFunctionSet | Sequence[MomentFunction], h: float, u: float,
                 spec: GridSpec | None = None, max_points: int = 2 ** 18, refine_tol: float = 1e-9):
        if not (h > 0 and u > 0):
            raise ParameterError("h and u must be positive")
        self.functions = tuple(fset)
        self.fset = fset
        self.h = float(h)
        self.u = float(u)
        self.spec = spec or GridSpec()
        self.max_points = max(int(max_points), self.spec.n_points)
        self.refine_tol = refine_tol
        self._fcache = {}
        self._sup = np.array([_sup_norm(f) for f in self.functions])
        widths = [f.bandwidth for f in self.functions if f.bandwidth is not None]
        self.min_cutoff = max(widths) if widths else 0.0

    def _fvals(self, x0, dx, n):
        key = (x0, dx, n)
        vals = self._fcache.get(key)
        if vals is None:
            x = x0 + dx * np.arange(n)
            vals = np.vstack([np.asarray(f.eval(x), dtype=float) for f in self.functions])
            if len(self._fcache) > 8:
                self._fcache.clear()
            self._fcache[key] = vals
        return vals

    def cutoff(self, vec) -> float:
        if self.spec.cutoff is not None:
            return self.spec.cutoff
        cut = auto_cutoff_vector(np.asarray(vec, dtype=float), self.h, self.u, self.spec.tol)
        while cut < self.min_cutoff:
            cut *= 2.0
        return cut

    def moments_on(self, vec, cutoff: float, n: int) -> np.ndarray:
        x0, dx, dens = density_values(np.asarray(vec, dtype=float), self.h, self.u, n, cutoff)
        dens = clip_ringing(dens)
        return self._fvals(x0, dx, n) @ dens * dx

    def resolve(self, vec, cutoff: float | None = None) -> GridMoments:
        """Moments with the refinement ladder: double the node count until stable."""
        vec = np.asarray(vec, dtype=float)
        cutoff = self.cutoff(vec) if cutoff is None else cutoff
        n = self.spec.n_points
        prev = self.moments_on(vec, cutoff, n)
        while 2 * n <= self.max_points:
            cur = self.moments_on(vec, cutoff, 2 * n)
            n *= 2
            done = np.max(np.abs(cur - prev)) < self.refine_tol
            prev = cur
            if done:
                break
        radius = n // 2 * np.pi / cutoff
        bound = float(self._sup.max() * tail_probability_bound(vec, self.h, self.u, radius))
        return GridMoments(prev, cutoff, n, bound)

    def moments(self, vec) -> np.ndarray:
        return self.resolve(vec).values

    def jacobian_fd(self, vec, cutoff: float, n: int, lower=None, upper=None,
                    rel_step: float = 1e-4, base=None) -> np.ndarray:
        """Central differences with relative steps; one-sided next to the bounds."""
        vec = np.asarray(vec, dtype=float)
        p = vec.size
        lower = np.full(p, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        upper = np.full(p, np.inf) if upper is None else np.asarray(upper, dtype=float)
        jac = np.empty((len(self.functions), p))
        for i in range(p):
            step = rel_step * max(abs(vec[i]), 1e-3)
            up, dn = vec.copy(), vec.copy()
            can_up = vec[i] + step <= upper[i]
            can_dn = vec[i] - step >= lower[i]
            if can_up and can_dn:
                up[i] += step
                dn[i] -= step
                jac[:, i] = (self.moments_on(up, cutoff, n) - self.moments_on(dn, cutoff, n)) / (2 * step)
            else:
                if base is None:
                    base = self.moments_on(vec, cutoff, n)
                if can_up:
                    up[i] += step
                    jac[:, i] = (self.moments_on(up, cutoff, n) - base) / step
                else:
                    dn[i] -= step
                    jac[:, i] = (base - self.moments_on(dn, cutoff, n)) / step
        return jac

    def jacobian_analytic(self, vec, cutoff: float, n: int) -> np.ndarray:
        """Differentiate the symbol under the Fourier integral: d p = F^-1[-h (d psi)(u l) phi]."""
        vec = np.asarray(vec, dtype=float)
        lam = half_spectrum(n, cutoff)
        phi = np.exp(-self.h * psi_vector(vec, self.u * lam))
        grad = psi_gradient_vector(vec, self.u * lam)
        x0, dx, dens = invert_half_spectrum(-self.h * grad * phi, n, cutoff)
        return self._fvals(x0, dx, n) @ dens.T * dx


def _sup_norm(f: MomentFunction) -> float:
    if f.support is not None and np.all(np.isfinite(f.support)):
        x = np.linspace(f.support[0], f.support[1], 4001)
    else:
        x = np.concatenate([np.linspace(-50, 50, 4001), [-1e6, 1e6]])
    return float(np.max(np.abs(f.eval(x))))


def expected_moments(theta: ThetaParams, h: float, u: float, fset, spec: GridSpec | None = None) -> GridMoments:
    """``E f_j(u Z_h)`` for every function in ``fset`` from one refined density grid."""
    return MomentEngine(fset, h, u, spec).resolve(theta.to_vector())


def expected_moment(theta: ThetaParams, h: float, u: float, f: MomentFunction,
                    spec: GridSpec | None = None) -> float:
    return float(expected_moments(theta, h, u, [f], spec).values[0])


def grid_expectation(grid: DensityGrid, f: MomentFunction) -> float:
    """Trapezoidal ``int f p dx`` on an existing grid."""
    return float(np.dot(np.asarray(f.eval(grid.x), dtype=float), grid.values) * grid.dx)


def moment_jacobian(theta: ThetaParams, h: float, u: float, fset, method: str = "finite_difference",
                    spec: GridSpec | None = None, rel_step: float = 1e-4) -> np.ndarray:
    """``D_theta E_theta f_j(u Z_h)`` on a grid resolved at theta and frozen for all evaluations."""
    engine = MomentEngine(fset, h, u, spec)
    vec = theta.to_vector()
    res = engine.resolve(vec)
    if method == "analytic":
        jac = engine.jacobian_analytic(vec, res.cutoff, res.n_points)
    elif method == "finite_difference":
        lower = np.zeros_like(vec)
        lower[1::3] = -np.inf
        jac = engine.jacobian_fd(vec, res.cutoff, res.n_points, lower=lower, rel_step=rel_step,
                                 base=res.values)
    else:
        raise ParameterError(f"unknown Jacobian method {method!r}")
    bad = np.argwhere(~np.isfinite(jac))
    if bad.size:
        raise QuadratureError(f"non-finite Jacobian entries at (row, coordinate) {bad.tolist()}")
    return jac


# ---------------------------------------------------------------------------
# jump functionals

_QUAD_RTOL = 1e-9
_TAYLOR_RADIUS = 1e-3


def _sign(sign) -> float:
    if sign in ("+", 1, 1.0):
        return 1.0
    if sign in ("-", -1, -1.0):
        return -1.0
    raise ParameterError(f"sign must be '+' or '-', got {sign!r}")


def _quad(fun, a, b, points=None, **kw):
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=400)
    opts.update(kw)
    if points is not None and np.isfinite(b):
        opts["points"] = points
    val, err = integrate.quad(fun, a, b, full_output=1, **opts)[:2]
    return val, err


def _check(val, err, what):
    scale = max(abs(val), 1e-300)
    if not np.isfinite(val) or err > _QUAD_RTOL * scale and err > 1e-15:
        raise QuadratureError(f"{what}: quadrature reached relative error {err / scale:.2e}",
                              achieved=err / scale)


def _panels(f: MomentFunction, s: float):
    """Integration range on the half line ``s z > 0`` and interior break points."""
    start = f.eta if f.eta > 0 else 0.0
    end = np.inf
    if f.support is not None:
        end = f.support[1] if s > 0 else -f.support[0]
    if np.isfinite(end):
        points = list(start + (end - start) * np.array([0.1, 0.25, 0.4, 0.55, 0.7, 0.85]))
    else:
        points = None
    return start, end, points


def _functional(alpha, sign, f, weight_log: bool):
    """``int K(z) z^(-1-alpha) w(z) dz`` with ``w = alpha`` or ``1 - alpha log z``."""
    check_alpha(alpha)
    s = _sign(sign)

    def g(z):
        return f.eval(s * z)

    def w(z):
        return 1.0 - alpha * np.log(z) if weight_log else alpha

    if f.eta > 0:
        start, end, points = _panels(f, s)
        if end <= start:
            return 0.0
        total, err = 0.0, 0.0
        if weight_log and start < 1.0 < end:
            segs = [(start, 1.0), (1.0, end)]
        else:
            segs = [(start, end)]
        for a, b in segs:
            pts = None if points is None else [p for p in points if a < p < b] or None
            v, e = _quad(lambda z: g(z) * z ** (-1.0 - alpha) * w(z), a, b, points=pts)
            total += v
            err += e
        _check(total, err, "jump functional")
        return total

    g0 = float(f.eval(0.0))
    g1 = s * float(f.d1(0.0))
    g2 = float(f.d2(0.0))
    g3 = s * float(f.d3(0.0))

    def inner(z):
        if z < _TAYLOR_RADIUS:
            return 0.5 * g2 + g3 * z / 6.0
        return (g(z) - g0 - g1 * z) / (z * z)

    # inner panel: (g - g0 - g1 z)/z^2 against the algebraic weight z^(1-alpha)
    v1, e1 = _quad(inner, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0))
    if weight_log:
        v1l, e1l = _quad(inner, 0.0, 1.0, weight="alg-loga", wvar=(1.0 - alpha, 0.0))
        v1, e1 = v1 - alpha * v1l, e1 + alpha * e1l
    else:
        v1, e1 = alpha * v1, alpha * e1
    v2, e2 = _quad(lambda z: (g(z) - g0) * z ** (-1.0 - alpha) * w(z), 1.0, np.inf)
    total = v1 + v2
    _check(total, e1 + e2, "jump functional")
    return total


def jump_functional(alpha: float, sign, f: MomentFunction) -> float:
    """``J^{+/-}_alpha f(0) = alpha int (f(z) - f(0) - f'(0) tau(z)) |z|^(-1-alpha) 1{+/- z > 0} dz``."""
    return _functional(alpha, sign, f, weight_log=False)


def jump_functional_dalpha(alpha: float, sign, f: MomentFunction) -> float:
    """Derivative of :func:`jump_functional` in ``alpha``."""
    return _functional(alpha, sign, f, weight_log=True)


# ---------------------------------------------------------------------------
# small-time expansions and the bias diagnostic


def smalltime_expansion(theta: ThetaParams, h: float, u: float, f: MomentFunction, case: str) -> float:
    """Leading small-time term of ``E f(u Z_h)``.

    case "i": f vanishes near 0, term ``h u^a (r+ J+ f + r- J- f)`` of the leading component;
    case "ii": f(0) = 0 != f''(0), term ``h u^2 sigma^2 f''(0) / 2``;
    case "iii": f(0) = f''(0) = 0, term ``h^2 u^4 sigma^4 f''''(0) / 8``.
    """
    case = str(case).lower().strip("()")
    if case == "i":
        if not f.eta > 0:
            raise HypothesisMismatchError("case (i) needs a function vanishing near zero")
        if not theta.components:
            raise HypothesisMismatchError("case (i) needs a jump component")
        alpha, rp, rm = theta.components[0]
        return h * u ** alpha * (rp * jump_functional(alpha, "+", f) + rm * jump_functional(alpha, "-", f))
    f0, f2 = float(f.eval(0.0)), float(f.d2(0.0))
    if case == "ii":
        if abs(f0) > 1e-14 or f2 == 0.0:
            raise HypothesisMismatchError("case (ii) needs f(0) = 0 and f''(0) != 0")
        return h * u * u * theta.sigma_sq * f2 / 2.0
    if case == "iii":
        f4 = f.d4_at_zero()
        if abs(f0) > 1e-14 or abs(f2) > 1e-10 or f4 == 0.0:
            raise HypothesisMismatchError("case (iii) needs f(0) = f''(0) = 0 and f''''(0) != 0")
        return h * h * u ** 4 * theta.sigma_sq ** 2 * f4 / 8.0
    raise HypothesisMismatchError(f"unknown case {case!r}")


@dataclass(frozen=True)
class BiasRow:
    h: float
    u: float
    mc_mean: float
    mc_se: float
    model_moment: float
    bias: float
    censored: bool


@dataclass(frozen=True)
class BiasDiagnostic:
    rows: tuple
    slope: float
    bound_slope: float
    noise_band: tuple

    def as_table(self) -> list:
        return [r.__dict__.copy() for r in self.rows]


def bias_decay_diagnostic(model, theta: ThetaParams, f: MomentFunction, h_schedule: Sequence[float],
                          n_draws: int = 10 ** 6, seed: int = 0, u_of_h: Callable | None = None,
                          censor_z: float = 2.0) -> BiasDiagnostic:
    """Monte Carlo bias ``|mean f(u X_h) - E f(u Z_h)|`` along a schedule of steps.

    Cells where the bias is within ``censor_z`` standard errors of zero are
    censored (noise dominated). The noise band is 4 standard errors per cell.
    """
    from .levy_sim import derive_seed, simulate_increments

    u_of_h = u_of_h or (lambda hh: 1.0 / math.sqrt(hh * abs(math.log(hh))))
    rows = []
    for i, h in enumerate(h_schedule):
        u = u_of_h(h)
        batch = simulate_increments(model, n_draws, h, derive_seed(seed, i))
        vals = np.asarray(f.eval(u * batch.values), dtype=float)
        mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_draws))
        exact = expected_moment(theta, h, u, f)
        bias = abs(mean - exact)
        rows.append(BiasRow(h, u, mean, se, exact, bias, bias < censor_z * se))
    hs = np.array([r.h for r in rows])
    rho = model.nuisance.alpha if model.nuisance is not None else 0.0
    alpha = theta.components[0][0] if theta.components else 2.0
    us = np.array([u_of_h(h) for h in hs])
    bound = (hs * us ** rho + hs ** 2 * us ** max(2.0, alpha + 1.0)) * (1.0 + np.log(us))
    bound_slope = float(np.polyfit(np.log(hs), np.log(bound), 1)[0]) if len(hs) > 1 else float("nan")
    live = [r for r in rows if not r.censored and r.bias > 0]
    if len(live) >= 2:
        slope = float(np.polyfit(np.log([r.h for r in live]), np.log([r.bias for r in live]), 1)[0])
    else:
        slope = float("nan")
    return BiasDiagnostic(tuple(rows), slope, bound_slope, tuple(4.0 * r.mc_se for r in rows))
