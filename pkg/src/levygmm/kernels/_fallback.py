"""NumPy versions of the compiled kernels, used when the extension is absent."""

import numpy as np


def cms_transform(alpha, beta, v, w):
    t = beta * np.tan(np.pi * alpha / 2.0)
    shift = np.arctan(t) / alpha
    scale = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    s = alpha * (v + shift)
    return scale * np.sin(s) / np.cos(v) ** (1.0 / alpha) * (np.cos(v - s) / w) ** ((1.0 - alpha) / alpha)


def bump(x, scale, lo, hi, a, b, logpeak):
    y = scale * np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(y)
    inside = (y > lo) & (y < hi)
    yi = y[inside]
    out[inside] = np.exp(logpeak - a / (yi - lo) - b / (hi - yi))
    return out


def default_moment_sums(x, u, k1, s2, s3, lo, hi, a, b, logpeak):
    y = u * np.asarray(x, dtype=float)
    g1 = -np.expm1(-k1 * y * y)
    g2 = bump(y, s2, lo, hi, a, b, logpeak)
    g3 = bump(y, s3, lo, hi, a, b, logpeak)
    g4 = np.where(y >= 0, g3, g2)
    cols = (g1, g2, g3, g4)
    return (np.array([c.sum() for c in cols]),
            np.array([(c * c).sum() for c in cols]))


def inversion_spectrum(lam, log_lam, h, u, theta):
    n_comp = (len(theta) - 1) // 5
    ul = u * lam
    re = 0.5 * theta[0] * ul * ul
    im = np.zeros_like(lam)
    for m in range(n_comp):
        a, rp, rm = theta[1 + 3 * m: 4 + 3 * m]
        gc, gs = theta[1 + 3 * n_comp + 2 * m: 3 + 3 * n_comp + 2 * m]
        pw = np.exp(a * (np.log(u) + log_lam))
        re = re + (rp + rm) * gc * pw
        im = im - (rp - rm) * (gs * pw + ul * a / (a - 1.0))
    sgn = np.where(np.arange(lam.size) % 2 == 0, 1.0, -1.0)
    mag = sgn * np.exp(-h * re)
    return mag * np.cos(h * im) + 1j * mag * np.sin(h * im)
