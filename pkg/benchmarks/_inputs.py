"""Shared inputs for the kernel benchmarks and equivalence checks."""

import numpy as np

from levygmm.charfn import _half_grid, _packed
from levygmm.gmm import scaling_factor
from levygmm.levy_sim import SimModelSpec, simulate_increments
from levygmm.moments import default_moment_set


def kernel_cases(n=10 ** 6, seed=0):
    """``{name: (args tuple)}`` for each kernel at a realistic size."""
    rng = np.random.default_rng(seed)
    v = np.ascontiguousarray(rng.uniform(-np.pi / 2, np.pi / 2, n))
    w = np.ascontiguousarray(rng.standard_exponential(n))
    model = SimModelSpec.benchmark(1.3)
    x = simulate_increments(model, n, 1.0 / 23400, seed).values
    u = scaling_factor(23400)
    fused = default_moment_set().fused
    k1, s2, s3, lo, hi, a, b, logpeak = fused
    ux = np.ascontiguousarray(u * x)
    theta = model.theta().to_vector()
    lam, log_lam, _ = _half_grid(2 ** 16, 64.0)
    return {
        "cms_transform": (1.3, -1.0 / 3.0, v, w),
        "bump": (ux, s2, lo, hi, a, b, logpeak),
        "default_moment_sums": (np.ascontiguousarray(x), u, k1, s2, s3, lo, hi, a, b, logpeak),
        "inversion_spectrum": (lam, log_lam, 1.0 / 23400, u, _packed(theta)),
    }
