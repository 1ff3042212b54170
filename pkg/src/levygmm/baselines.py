"""Threshold-based reference estimators: jump counts, two-threshold activity
index and truncated realized variance."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientExceedancesError, ParameterError


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold ``tau = c * h**omega``."""

    c: float
    omega: float = 0.49

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError("threshold constant c must be positive")
        if not 0.0 < self.omega < 0.5:
            raise ParameterError("omega must lie in (0, 1/2)")

    def threshold(self, h: float) -> float:
        return self.c * h ** self.omega


def _values(batch):
    return np.asarray(getattr(batch, "values", batch), dtype=float)


def aj_count(batch, tau: float) -> int:
    """Number of increments with absolute value above ``tau``."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    return int(np.count_nonzero(np.abs(_values(batch)) > tau))


def aj_alpha(batch, spec1: ThresholdSpec, spec2: ThresholdSpec, min_count: int = 10) -> float:
    """Two-threshold activity index ``log(U(tau1)/U(tau2)) / log(tau2/tau1)``."""
    tau1, tau2 = spec1.threshold(batch.h), spec2.threshold(batch.h)
    if tau1 == tau2:
        raise ParameterError("thresholds must differ")
    u1, u2 = aj_count(batch, tau1), aj_count(batch, tau2)
    if u1 == 0 or u2 == 0:
        raise InsufficientExceedancesError(f"exceedance counts ({u1}, {u2}) include zero")
    if min(u1, u2) < min_count:
        warnings.warn(f"few exceedances ({u1}, {u2}); the ratio is noisy", stacklevel=2)
    return math.log(u1 / u2) / math.log(tau2 / tau1)


def realized_variance(batch) -> float:
    x = _values(batch)
    return float(np.dot(x, x) / (x.size * batch.h))


def bipower_variation(batch) -> float:
    """``(pi/2) sum |x_i||x_{i-1}| / T``, a jump-robust volatility proxy."""
    x = np.abs(_values(batch))
    if x.size < 2:
        return realized_variance(batch)
    return float(0.5 * math.pi * np.dot(x[1:], x[:-1]) * x.size / (x.size - 1) / (x.size * batch.h))


def truncated_rv(batch, spec: ThresholdSpec) -> float:
    """Sum of squared increments below the threshold, divided by the horizon."""
    x = _values(batch)
    keep = np.abs(x) <= spec.threshold(batch.h)
    return float(np.dot(x[keep], x[keep]) / (x.size * batch.h))


def default_volatility_threshold(batch, factor: float = 3.0, omega: float = 0.49) -> ThresholdSpec:
    """Threshold ``factor * sigma_guess * h^omega`` with ``sigma_guess`` from bipower variation."""
    bv = bipower_variation(batch)
    sigma_guess = math.sqrt(bv) if bv > 0 and np.isfinite(bv) else 1.0
    return ThresholdSpec(factor * sigma_guess, omega)
