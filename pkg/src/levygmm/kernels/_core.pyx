# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: stable sampling transform, bump evaluation and the
fused sample-moment pass over increments."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan, cos, exp, fabs, log, pow, sin, tan, M_PI

cnp.import_array()


cdef inline double _bump(double y, double lo, double hi, double a, double b,
                         double logpeak) noexcept nogil:
    if y <= lo or y >= hi:
        return 0.0
    return exp(logpeak - a / (y - lo) - b / (hi - y))


def cms_transform(double alpha, double beta, const double[::1] v, const double[::1] w):
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double t = beta * tan(M_PI * alpha / 2.0)
    cdef double shift = atan(t) / alpha
    cdef double scale = pow(1.0 + t * t, 1.0 / (2.0 * alpha))
    cdef double inv_a = 1.0 / alpha
    cdef double expo = (1.0 - alpha) / alpha
    cdef double vv, s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            vv = v[i]
            s = alpha * (vv + shift)
            o[i] = (scale * sin(s) / pow(cos(vv), inv_a)
                    * pow(cos(vv - s) / w[i], expo))
    return out


def bump(const double[::1] x, double scale, double lo, double hi, double a,
         double b, double logpeak):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _bump(scale * fabs(x[i]), lo, hi, a, b, logpeak)
    return out


def default_moment_sums(const double[::1] x, double u, double k1, double s2,
                        double s3, double lo, double hi, double a, double b,
                        double logpeak):
    """Sums and sums of squares of (f1, f2, f3, f4)(u*x) in one pass.

    f1 = 1 - exp(-k1 y^2), f2 and f3 are even bumps at argument scales s2 and
    s3, and f4 uses f3 on the positive axis and f2 on the negative axis.
    """
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double y, ay, g1, g2, g3, g4
    cdef double m1 = 0, m2 = 0, m3 = 0, m4 = 0
    cdef double q1 = 0, q2 = 0, q3 = 0, q4 = 0
    with nogil:
        for i in range(n):
            y = u * x[i]
            ay = fabs(y)
            g1 = -k1 * y * y
            g1 = 1.0 - exp(g1) if g1 > -745.0 else 1.0
            g2 = _bump(s2 * ay, lo, hi, a, b, logpeak)
            g3 = _bump(s3 * ay, lo, hi, a, b, logpeak)
            g4 = g3 if y >= 0 else g2
            m1 += g1
            m2 += g2
            m3 += g3
            m4 += g4
            q1 += g1 * g1
            q2 += g2 * g2
            q3 += g3 * g3
            q4 += g4 * g4
    return np.array([m1, m2, m3, m4]), np.array([q1, q2, q3, q4])


def inversion_spectrum(const double[::1] lam, const double[::1] log_lam, double h, double u,
                       const double[::1] theta):
    """``conj(exp(-h psi(u lam_k))) * (-1)^k`` on nonnegative frequencies.

    ``theta`` packs the parameter vector (sigma^2, alpha_1, r_1^+, r_1^-, ...)
    followed by the pairs (Gamma(1-a) cos(pi a/2), Gamma(1-a) sin(pi a/2)) of
    every component.
    """
    cdef Py_ssize_t k, m, n = lam.shape[0]
    cdef Py_ssize_t n_comp = (theta.shape[0] - 1) // 5
    cdef double logu = log(u)
    cdef double re, im, pw, mag, ul, a, rp, rm, sgn
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for k in range(n):
            ul = u * lam[k]
            re = 0.5 * theta[0] * ul * ul
            im = 0.0
            for m in range(n_comp):
                a = theta[1 + 3 * m]
                rp = theta[2 + 3 * m]
                rm = theta[3 + 3 * m]
                pw = exp(a * (logu + log_lam[k]))
                re += (rp + rm) * theta[1 + 3 * n_comp + 2 * m] * pw
                im -= (rp - rm) * (theta[2 + 3 * n_comp + 2 * m] * pw + ul * a / (a - 1.0))
            mag = exp(-h * re)
            sgn = -1.0 if k & 1 else 1.0
            # conj(exp(-h re - i h im)) = mag * (cos(h im) + i sin(h im))
            o[k].real = sgn * mag * cos(h * im)
            o[k].imag = sgn * mag * sin(h * im)
    return out
