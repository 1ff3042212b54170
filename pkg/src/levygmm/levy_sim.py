"""Seeded simulation of Brownian motion plus skewed stable components.

Stable draws use the Chambers-Mallows-Stuck construction in the
parametrization with characteristic exponent
``-|lam|^alpha (1 - i beta tan(pi alpha / 2) sgn(lam))``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .charfn import ThetaParams, check_alpha, gamma_cos
from .errors import ParameterError

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Mix a base seed with stream indices into an independent 64-bit seed."""
    state = splitmix64(int(base) & _MASK64)
    for idx in indices:
        state = splitmix64(state ^ splitmix64((int(idx) + 1) & _MASK64))
    return state


@dataclass(frozen=True)
class StableSpec:
    """A stable component ``scale * S^{alpha, beta}``."""

    alpha: float
    beta: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        check_alpha(self.alpha)
        if not abs(self.beta) <= 1.0:
            raise ParameterError(f"|beta| must be at most 1, got {self.beta}")
        if not self.scale >= 0.0:
            raise ParameterError(f"scale must be nonnegative, got {self.scale}")

    def levy_weights(self) -> tuple[float, float]:
        """``(r+, r-)`` of the Lévy density ``alpha |z|^(-1-alpha) (r+ 1{z>0} + r- 1{z<0})``."""
        total = self.scale ** self.alpha / gamma_cos(self.alpha)
        return 0.5 * total * (1.0 + self.beta), 0.5 * total * (1.0 - self.beta)

    def truncation_drift(self) -> float:
        """Drift to add so the component has zero drift under compensation with ``z 1{|z| <= 1}``."""
        rp, rm = self.levy_weights()
        return self.alpha * (rp - rm) / (self.alpha - 1.0)


@dataclass(frozen=True)
class SimModelSpec:
    mu: float = 0.0
    sigma: float = 1.0
    components: tuple = ()
    nuisance: StableSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.sigma >= 0.0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not np.isfinite(self.mu):
            raise ParameterError("mu must be finite")
        if not self.theory_conditions_hold():
            warnings.warn("nuisance index is not below alpha_1 / 2; asymptotic theory does not apply",
                          stacklevel=2)

    def theory_conditions_hold(self) -> bool:
        if self.nuisance is None or not self.components or self.nuisance.scale == 0.0:
            return True
        return self.nuisance.alpha < self.components[0].alpha / 2.0

    def theta(self) -> ThetaParams:
        """Parameters of the modeled part (volatility and stable components)."""
        return ThetaParams(self.sigma ** 2,
                           tuple((c.alpha,) + c.levy_weights() for c in self.components))

    @classmethod
    def from_theta(cls, theta: ThetaParams) -> "SimModelSpec":
        """Model whose increments are exactly those of the zero-drift process with parameters theta.

        A skewed stable law is not centred for the truncated compensation;
        ``mu`` supplies the missing drift.
        """
        comps = []
        for alpha, rp, rm in theta.components:
            total = rp + rm
            scale = float((total * gamma_cos(alpha)) ** (1.0 / alpha))
            comps.append(StableSpec(alpha, (rp - rm) / total, scale))
        mu = float(sum(c.truncation_drift() for c in comps))
        return cls(mu=mu, sigma=float(np.sqrt(theta.sigma_sq)), components=tuple(comps))

    @classmethod
    def benchmark(cls, alpha: float = 1.3, beta: float = -1.0 / 3.0, sigma: float = 1.0,
                  nuisance_scale: float = 0.1) -> "SimModelSpec":
        """Brownian motion plus ``S^{alpha,beta}`` plus ``nuisance_scale * S^{0.5,0}``."""
        nuisance = StableSpec(0.5, 0.0, nuisance_scale) if nuisance_scale > 0 else None
        return cls(0.0, sigma, (StableSpec(alpha, beta, 1.0),), nuisance)


@dataclass(frozen=True)
class IncrementBatch:
    h: float
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    model: SimModelSpec | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).ravel()
        if vals.size < 1:
            raise ParameterError("a batch needs at least one increment")
        if not self.h > 0:
            raise ParameterError("h must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def horizon(self) -> float:
        return self.n * self.h


def sample_standard_stable(alpha: float, beta: float, n: int, seed: int) -> np.ndarray:
    """``n`` draws of ``S_1^{alpha, beta}``; ``alpha = 2`` is accepted and gives N(0, 2)."""
    check_alpha(alpha, allow_two=True)
    if not abs(beta) <= 1.0:
        raise ParameterError(f"|beta| must be at most 1, got {beta}")
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = np.random.default_rng(int(seed) & _MASK64)
    half_pi = 0.5 * np.pi
    v = rng.uniform(-half_pi, half_pi, n)
    # the open interval is needed: cos(v) = 0 at the endpoints
    v[v <= -half_pi] = np.nextafter(-half_pi, 0.0)
    w = rng.standard_exponential(n)
    w[w <= 0.0] = np.finfo(float).tiny
    return kernels.cms_transform(float(alpha), float(beta), v, w)


def simulate_increments(model: SimModelSpec, n: int, h: float, seed: int) -> IncrementBatch:
    """Increments of ``X`` over ``n`` steps of length ``h``; each source has its own sub-seed."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not h > 0:
        raise ParameterError("h must be positive")
    values = np.full(n, model.mu * h)
    if model.sigma > 0:
        rng = np.random.default_rng(derive_seed(seed, 0))
        values += model.sigma * np.sqrt(h) * rng.standard_normal(n)
    sources = list(model.components)
    if model.nuisance is not None:
        sources.append(model.nuisance)
    for idx, comp in enumerate(sources, start=1):
        if comp.scale == 0.0:
            continue
        draws = sample_standard_stable(comp.alpha, comp.beta, n, derive_seed(seed, idx))
        values += comp.scale * h ** (1.0 / comp.alpha) * draws
    return IncrementBatch(h, values, seed, model)
