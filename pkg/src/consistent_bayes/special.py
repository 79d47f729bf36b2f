"""Chi-squared density, CDF and quantile.

The CDF is the regularized lower incomplete gamma function P(d/2, q/2),
computed with the power series below ``a + 1`` and a modified-Lentz
continued fraction for the upper tail above it.
"""
import math

import numpy as np

from .errors import InputError

__all__ = ["gammainc_lower", "chi2_pdf", "chi2_logpdf", "chi2_cdf", "chi2_quantile"]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _series(a, x):
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a, x):
    # Q(a, x) by the Legendre continued fraction, modified Lentz.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0."""
    if a <= 0:
        raise InputError("shape a must be positive")
    if x < 0 or math.isnan(x):
        raise InputError("x must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _series(a, x))
    return max(0.0, 1.0 - _upper_fraction(a, x))


def _check_dof(d):
    if int(d) != d or d < 1:
        raise InputError(f"degrees of freedom must be a positive integer, got {d}")
    return int(d)


def chi2_logpdf(d, q):
    d = _check_dof(d)
    q = np.asarray(q, dtype=float)
    half = 0.5 * d
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (half - 1.0) * np.log(q) - 0.5 * q - half * math.log(2.0) - math.lgamma(half)
    if d == 2:
        out = np.where(q == 0, -math.log(2.0), out)
    out = np.where(q < 0, -np.inf, out)
    return out


def chi2_pdf(d, q):
    """Chi-squared density with ``d`` degrees of freedom; zero for q < 0."""
    out = np.exp(chi2_logpdf(d, q))
    return float(out) if np.ndim(out) == 0 else out


def chi2_cdf(d, q):
    """P(d/2, q/2); ``q`` may be a scalar or array of nonnegative reals."""
    d = _check_dof(d)
    qa = np.asarray(q, dtype=float)
    if np.any(np.isnan(qa)) or np.any(qa < 0):
        raise InputError("chi2_cdf needs q >= 0")
    flat = [gammainc_lower(0.5 * d, 0.5 * v) for v in qa.reshape(-1)]
    out = np.array(flat).reshape(qa.shape)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(d, p) -> float:
    """Smallest q with chi2_cdf(d, q) = p, located by bisection."""
    d = _check_dof(d)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InputError(f"p must lie in (0, 1), got {p}")
    lo, hi = 0.0, float(max(d, 1))
    while chi2_cdf(d, hi) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if chi2_cdf(d, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
