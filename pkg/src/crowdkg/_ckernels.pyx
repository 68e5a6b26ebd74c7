# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels.

Same functions, same arithmetic and same branch structure as
``_pykernels``; the two are tested against each other for agreement.
"""

import numpy as np

from libc.math cimport exp, log, log1p, fabs, isfinite, M_PI

from .errors import DomainError, NumericError

EXPECTED = 0
OPTIMISTIC = 1
PESSIMISTIC = 2
CVAR = 3

cdef double _LN_HALF = log(0.5)
cdef double _EPS = 1e-16
cdef double _TINY = 1e-300
cdef int _MAXIT = 100000
cdef double _VAR_FLOOR = 1e-12
cdef double _HALF_LN_2PI = 0.5 * log(2.0 * M_PI)
cdef double _STIRLING_MIN = 8.0


cdef inline int _bad(double a, double b) nogil:
    return not (isfinite(a) and isfinite(b)) or a <= 0.0 or b <= 0.0


cdef inline void _check(double a, double b) except *:
    if _bad(a, b):
        raise DomainError(f"Beta parameters must be finite and positive, got ({a!r}, {b!r})")


cdef inline double _stirling_corr(double x) nogil:
    cdef double r = 1.0 / x
    cdef double r2 = r * r
    return r * (1.0 / 12.0 + r2 * (-1.0 / 360.0 + r2 * (1.0 / 1260.0 + r2 * (
        -1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0 + r2 / 156.0))))))


cdef double _lgamma(double x) nogil:
    cdef double prod = 1.0
    while x < _STIRLING_MIN:
        prod *= x
        x += 1.0
    return (x - 0.5) * log(x) - x + _HALF_LN_2PI + _stirling_corr(x) - log(prod)


cdef double _log_gain(double a, double b) nogil:
    cdef double s = a + b
    cdef double p = a if a >= b else b
    cdef double q = b if a >= b else a
    cdef double diff
    if q >= _STIRLING_MIN:
        return (
            a * log1p((b - a) / (2.0 * a))
            + b * log1p((a - b) / (2.0 * b))
            + 0.5 * log(a * b / s)
            - _HALF_LN_2PI
            - (_stirling_corr(a) + _stirling_corr(b) - _stirling_corr(s))
        )
    if p >= _STIRLING_MIN:
        diff = (
            -(p - 0.5) * log1p(q / p) - q * log(s) + q
            + _stirling_corr(p) - _stirling_corr(s)
        )
        return s * _LN_HALF - _lgamma(q) - diff
    return s * _LN_HALF - (_lgamma(a) + _lgamma(b) - _lgamma(s))


cdef double _betacf(double p, double q) except? -1.0:
    cdef double x = 0.5
    cdef double qab = p + q
    cdef double qap = p + 1.0
    cdef double qam = p - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (q - m) * x / ((qam + m2) * (p + m2))
        d = 1.0 + aa * d
        if fabs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if fabs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(p + m) * (qab + m) * x / ((p + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if fabs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge for ({p}, {q})")


cdef inline double _lower_half(double p, double q) except? -1.0:
    return exp(_log_gain(p, q)) / p * _betacf(p, q)


cdef double _upper_tail(double a, double b) except? -1.0:
    if a == b:
        return 0.5
    if a > b:
        return 1.0 - _lower_half(a, b)
    return _lower_half(b, a)


def upper_tail(a, b):
    """Pr(theta >= 1/2) for theta ~ Beta(a, b)."""
    cdef double x = float(a), y = float(b)
    _check(x, y)
    return _upper_tail(x, y)


def step_gain(a, b):
    """g = 0.5**(a+b) / B(a, b)."""
    return exp(_log_gain(float(a), float(b)))


cdef int _reward_pair(double a, double b, double *r1, double *r2) except -1:
    cdef double g = exp(_log_gain(a, b))
    cdef double d1 = g / a
    cdef double d2 = g / b
    if a >= b:
        r1[0] = d1
    elif a <= b - 1.0:
        r1[0] = -d1
    else:
        r1[0] = 2.0 * (_upper_tail(a, b) - 0.5) + d1
    if a >= b + 1.0:
        r2[0] = -d2
    elif a <= b:
        r2[0] = d2
    else:
        r2[0] = d2 - 2.0 * (_upper_tail(a, b) - 0.5)
    return 0


def reward_pair(a, b):
    """Change in h(I) after a +1 label and after a -1 label."""
    cdef double x = float(a), y = float(b), r1, r2
    _check(x, y)
    _reward_pair(x, y, &r1, &r2)
    return r1, r2


cdef inline double _expected(double a, double b, double r1, double r2) nogil:
    if a >= b + 1.0 or a <= b - 1.0:
        return 0.0
    cdef double s = a + b
    return (a / s) * r1 + (b / s) * r2


cdef inline double _cvar(double p1, double r1, double r2, double alpha) nogil:
    cdef double hi, lo, p_hi, q
    if r1 >= r2:
        hi = r1
        lo = r2
        p_hi = p1
    else:
        hi = r2
        lo = r1
        p_hi = 1.0 - p1
    q = p_hi / alpha
    if q >= 1.0:
        return hi
    return q * hi + (1.0 - q) * lo


cdef double _combine(double p1, double r1, double r2, int mode, double alpha,
                     double expected) except? -1.0:
    if mode == EXPECTED:
        return expected
    if mode == OPTIMISTIC:
        return r1 if r1 >= r2 else r2
    if mode == PESSIMISTIC:
        return r1 if r1 <= r2 else r2
    if mode == CVAR:
        if alpha >= 1.0:
            return expected
        return _cvar(p1, r1, r2, alpha)
    raise DomainError(f"unknown scoring mode {mode!r}")


cdef double _score(double a, double b, int mode, double alpha) except? -1.0:
    cdef double r1, r2
    _check(a, b)
    _reward_pair(a, b, &r1, &r2)
    return _combine(a / (a + b), r1, r2, mode, alpha, _expected(a, b, r1, r2))


def score(a, b, int mode, double alpha=1.0):
    """Scalar score of one instance state under a risk mode."""
    return _score(float(a), float(b), mode, alpha)


def scores(a, b, int mode, double alpha=1.0):
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for k in range(n):
        ov[k] = _score(av[k], bv[k], mode, alpha)
    return out


cdef int _match(double a, double b, double w_up, double w_down,
                double *at, double *bt) noexcept nogil:
    cdef double s = a + b
    cdef double tot = w_up + w_down
    cdef double pu = w_up / tot
    cdef double pd = w_down / tot
    cdef double s1 = s + 1.0
    cdef double q = (pu * (a + 1.0) * b + pd * a * (b + 1.0)) / (s + 2.0)
    cdef double spread = q / s1
    cdef double var = (q + pu * pd) / (s1 * s1)
    cdef int clamped = 0
    cdef double k
    if var <= _VAR_FLOOR:
        var = _VAR_FLOOR
        clamped = 1
    k = spread / var
    at[0] = (pu * (a + 1.0) + pd * a) / s1 * k
    bt[0] = (pu * b + pd * (b + 1.0)) / s1 * k
    return clamped


def matched_update(a, b, c, d, z):
    """Moment-matched (a~, b~, c~, d~, clamped) after label z from worker (c, d)."""
    cdef double x = float(a), y = float(b), u = float(c), v = float(d)
    cdef double at, bt, ct, dt
    cdef int f1, f2
    _check(x, y)
    _check(u, v)
    if z == 1:
        f1 = _match(x, y, x * u, y * v, &at, &bt)
        f2 = _match(u, v, x * u, y * v, &ct, &dt)
    elif z == -1:
        f1 = _match(x, y, x * v, y * u, &at, &bt)
        f2 = _match(u, v, y * u, x * v, &ct, &dt)
    else:
        raise DomainError(f"label must be +1 or -1, got {z!r}")
    return at, bt, ct, dt, bool(f1 or f2)


cdef inline double _h_tail(double a, double b) except? -1.0:
    return 0.5 + fabs(_upper_tail(a, b) - 0.5)


cdef int _hetero_pair(double a, double b, double c, double d,
                      double *r1, double *r2) except -1:
    cdef double base, ap, bp, an, bn
    _check(a, b)
    _check(c, d)
    base = _h_tail(a, b)
    _match(a, b, a * c, b * d, &ap, &bp)
    _match(a, b, a * d, b * c, &an, &bn)
    r1[0] = _h_tail(ap, bp) - base
    r2[0] = _h_tail(an, bn) - base
    return 0


def hetero_reward_pair(a, b, c, d):
    cdef double r1, r2
    _hetero_pair(float(a), float(b), float(c), float(d), &r1, &r2)
    return r1, r2


cdef inline double _label_prob_pos(double a, double b, double c, double d) nogil:
    return (a * c + b * d) / ((a + b) * (c + d))


def label_prob_pos(a, b, c, d):
    return _label_prob_pos(float(a), float(b), float(c), float(d))


cdef double _hetero_score(double a, double b, double c, double d, int mode,
                          double alpha) except? -1.0:
    cdef double r1, r2, p1
    _hetero_pair(a, b, c, d, &r1, &r2)
    p1 = _label_prob_pos(a, b, c, d)
    return _combine(p1, r1, r2, mode, alpha, p1 * r1 + (1.0 - p1) * r2)


def hetero_score(a, b, c, d, int mode, double alpha=1.0):
    return _hetero_score(float(a), float(b), float(c), float(d), mode, alpha)


def hetero_scores(a, b, c, d, int mode, double alpha=1.0):
    a, b, c, d = np.broadcast_arrays(
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        np.asarray(d, dtype=np.float64),
    )
    cdef double[::1] av = np.ascontiguousarray(a)
    cdef double[::1] bv = np.ascontiguousarray(b)
    cdef double[::1] cv = np.ascontiguousarray(c)
    cdef double[::1] dv = np.ascontiguousarray(d)
    cdef Py_ssize_t n = av.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for k in range(n):
        ov[k] = _hetero_score(av[k], bv[k], cv[k], dv[k], mode, alpha)
    return out
