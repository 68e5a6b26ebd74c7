"""Pure-Python scoring kernels.

Mirrors ``_ckernels.pyx`` function for function. ``crowdkg.kernels`` picks
the compiled module when it imports and falls back to this one otherwise.

Every reward here is built from the upper tail ``I(a, b) = Pr(theta >= 1/2)``
of a Beta(a, b) variable and the two exact one-step recurrences

    I(a + 1, b) = I(a, b) + g / a,    I(a, b + 1) = I(a, b) - g / b,
    g = 0.5 ** (a + b) / B(a, b),

which hold for all real a, b > 0. Which side of 1/2 each of the three tails
sits on is decided from the counts alone (I(a, b) >= 1/2 iff a >= b), so the
rewards of integer states come out with exact zeros and exact ties.
"""

import math

import numpy as np

from .errors import DomainError, NumericError

EXPECTED = 0
OPTIMISTIC = 1
PESSIMISTIC = 2
CVAR = 3

_LN_HALF = math.log(0.5)
_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 100000
_VAR_FLOOR = 1e-12


def _check(a, b):
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise DomainError(f"Beta parameters must be finite and positive, got ({a!r}, {b!r})")


_HALF_LN_2PI = 0.5 * math.log(2.0 * math.pi)
_STIRLING_MIN = 8.0


def _stirling_corr(x):
    # lgamma(x) - [(x - 1/2) ln x - x + ln(2 pi)/2], asymptotic series, x >= 8.
    r = 1.0 / x
    r2 = r * r
    return r * (1.0 / 12.0 + r2 * (-1.0 / 360.0 + r2 * (1.0 / 1260.0 + r2 * (
        -1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0 + r2 / 156.0))))))


def _lgamma(x):
    # Shift up to the asymptotic range with Gamma(x + 1) = x Gamma(x). Built
    # only from log and the series so both backends round identically.
    prod = 1.0
    while x < _STIRLING_MIN:
        prod *= x
        x += 1.0
    return (x - 0.5) * math.log(x) - x + _HALF_LN_2PI + _stirling_corr(x) - math.log(prod)


def _log_gain(a, b):
    """ln(0.5**(a+b) / B(a, b)) without cancelling large lgamma terms."""
    s = a + b
    p = a if a >= b else b
    q = b if a >= b else a
    if q >= _STIRLING_MIN:
        return (
            a * math.log1p((b - a) / (2.0 * a))
            + b * math.log1p((a - b) / (2.0 * b))
            + 0.5 * math.log(a * b / s)
            - _HALF_LN_2PI
            - (_stirling_corr(a) + _stirling_corr(b) - _stirling_corr(s))
        )
    if p >= _STIRLING_MIN:
        # lgamma(p) - lgamma(s) by Stirling, lgamma(q) directly.
        diff = (
            -(p - 0.5) * math.log1p(q / p) - q * math.log(s) + q
            + _stirling_corr(p) - _stirling_corr(s)
        )
        return s * _LN_HALF - _lgamma(q) - diff
    return s * _LN_HALF - (_lgamma(a) + _lgamma(b) - _lgamma(s))


def _betacf(p, q):
    # Lentz evaluation of the incomplete-beta continued fraction at x = 1/2.
    x = 0.5
    qab = p + q
    qap = p + 1.0
    qam = p - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (q - m) * x / ((qam + m2) * (p + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(p + m) * (qab + m) * x / ((p + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge for ({p}, {q})")


def _lower_half(p, q):
    """Regularized lower incomplete beta I_{1/2}(p, q), valid for p > q."""
    front = math.exp(_log_gain(p, q)) / p
    return front * _betacf(p, q)


def upper_tail(a, b):
    """Pr(theta >= 1/2) for theta ~ Beta(a, b)."""
    a = float(a)
    b = float(b)
    _check(a, b)
    if a == b:
        return 0.5
    if a > b:
        return 1.0 - _lower_half(a, b)
    return _lower_half(b, a)


def step_gain(a, b):
    """g = 0.5**(a+b) / B(a, b); the tail moves by g/a or -g/b after one label."""
    return math.exp(_log_gain(a, b))


def reward_pair(a, b):
    """Change in h(I) after a +1 label and after a -1 label."""
    a = float(a)
    b = float(b)
    _check(a, b)
    g = step_gain(a, b)
    d1 = g / a
    d2 = g / b
    if a >= b:
        r1 = d1
    elif a <= b - 1.0:
        r1 = -d1
    else:
        r1 = 2.0 * (upper_tail(a, b) - 0.5) + d1
    if a >= b + 1.0:
        r2 = -d2
    elif a <= b:
        r2 = d2
    else:
        r2 = d2 - 2.0 * (upper_tail(a, b) - 0.5)
    return r1, r2


def _expected(a, b, r1, r2):
    # Both successor tails on one side of 1/2: h is linear there and the
    # martingale property of the posterior makes the expectation exactly 0.
    if a >= b + 1.0 or a <= b - 1.0:
        return 0.0
    s = a + b
    return (a / s) * r1 + (b / s) * r2


def _cvar(p1, r1, r2, alpha):
    if r1 >= r2:
        hi, lo, p_hi = r1, r2, p1
    else:
        hi, lo, p_hi = r2, r1, 1.0 - p1
    q = p_hi / alpha
    if q >= 1.0:
        return hi
    return q * hi + (1.0 - q) * lo


def _combine(p1, r1, r2, mode, alpha, expected):
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


def score(a, b, mode, alpha=1.0):
    """Scalar score of one instance state under a risk mode."""
    r1, r2 = reward_pair(a, b)
    a = float(a)
    b = float(b)
    return _combine(a / (a + b), r1, r2, mode, alpha, _expected(a, b, r1, r2))


def scores(a, b, mode, alpha=1.0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty(a.shape[0], dtype=np.float64)
    for k in range(a.shape[0]):
        out[k] = score(a[k], b[k], mode, alpha)
    return out


def _match(a, b, w_up, w_down):
    # Moment-match a two-component mixture
    #   w_up * Beta(a + 1, b) + w_down * Beta(a, b + 1)
    # with a single Beta. Mean, 1 - mean, E[x(1-x)] and variance are each
    # written as sums of non-negative terms, so nothing cancels.
    s = a + b
    tot = w_up + w_down
    pu = w_up / tot
    pd = w_down / tot
    s1 = s + 1.0
    q = (pu * (a + 1.0) * b + pd * a * (b + 1.0)) / (s + 2.0)
    spread = q / s1  # E[x (1 - x)]
    var = (q + pu * pd) / (s1 * s1)
    clamped = False
    if var <= _VAR_FLOOR:
        var = _VAR_FLOOR
        clamped = True
    k = spread / var  # matched a~ + b~
    mean = (pu * (a + 1.0) + pd * a) / s1
    mean_c = (pu * b + pd * (b + 1.0)) / s1
    return mean * k, mean_c * k, clamped


def matched_update(a, b, c, d, z):
    """Moment-matched (a~, b~, c~, d~, clamped) after label z from worker (c, d)."""
    a = float(a)
    b = float(b)
    c = float(c)
    d = float(d)
    _check(a, b)
    _check(c, d)
    # Conditioning on z reweights each factor into a two-component mixture;
    # the weights are the two terms of the label likelihood.
    if z == 1:
        u_inst, d_inst = a * c, b * d
        u_work, d_work = a * c, b * d
    elif z == -1:
        u_inst, d_inst = a * d, b * c
        u_work, d_work = b * c, a * d
    else:
        raise DomainError(f"label must be +1 or -1, got {z!r}")
    at, bt, f1 = _match(a, b, u_inst, d_inst)
    ct, dt, f2 = _match(c, d, u_work, d_work)
    return at, bt, ct, dt, f1 or f2


def _instance_post(a, b, c, d, z):
    if z == 1:
        return _match(a, b, a * c, b * d)
    return _match(a, b, a * d, b * c)


def _h_tail(a, b):
    return 0.5 + abs(upper_tail(a, b) - 0.5)


def hetero_reward_pair(a, b, c, d):
    a = float(a)
    b = float(b)
    c = float(c)
    d = float(d)
    _check(a, b)
    _check(c, d)
    base = _h_tail(a, b)
    ap, bp, _ = _instance_post(a, b, c, d, 1)
    an, bn, _ = _instance_post(a, b, c, d, -1)
    return _h_tail(ap, bp) - base, _h_tail(an, bn) - base


def label_prob_pos(a, b, c, d):
    return (a * c + b * d) / ((a + b) * (c + d))


def hetero_score(a, b, c, d, mode, alpha=1.0):
    r1, r2 = hetero_reward_pair(a, b, c, d)
    p1 = label_prob_pos(float(a), float(b), float(c), float(d))
    return _combine(p1, r1, r2, mode, alpha, p1 * r1 + (1.0 - p1) * r2)


def hetero_scores(a, b, c, d, mode, alpha=1.0):
    a, b, c, d = np.broadcast_arrays(
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        np.asarray(d, dtype=np.float64),
    )
    out = np.empty(a.shape[0], dtype=np.float64)
    for k in range(a.shape[0]):
        out[k] = hetero_score(a[k], b[k], c[k], d[k], mode, alpha)
    return out
