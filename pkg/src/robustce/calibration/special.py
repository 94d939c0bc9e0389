"""Special functions for the Gaussian calibration formulas.

Everything derives from the regularised incomplete gamma function, which is
evaluated by its power series below ``x = a + 1`` and by a Lentz continued
fraction above. Inverses use Newton steps safeguarded by a bisection bracket.
"""
from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000


def _log_prefactor(a: float, x: float) -> float:
    return -x + a * math.log(x) - math.lgamma(a)


def _series_p(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _cf_q(a: float, x: float) -> float:
    # modified Lentz on the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
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
    return h * math.exp(_log_prefactor(a, x))


def gammainc_p(a: float, x: float) -> float:
    """Regularised lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _series_p(a, x)
    return 1.0 - _cf_q(a, x)


def gammainc_q(a: float, x: float) -> float:
    """Regularised upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _series_p(a, x)
    return _cf_q(a, x)


def erf(x: float) -> float:
    if x == 0:
        return 0.0
    v = gammainc_p(0.5, x * x)
    return v if x > 0 else -v


def erfc(x: float) -> float:
    if x >= 0:
        return gammainc_q(0.5, x * x)
    return 1.0 + gammainc_p(0.5, x * x)


def norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def norm_cdf(z: float) -> float:
    """Standard normal CDF; the small tail is computed directly to keep relative accuracy."""
    if z < 0:
        return 0.5 * gammainc_q(0.5, 0.5 * z * z)
    return 1.0 - 0.5 * gammainc_q(0.5, 0.5 * z * z)


def _newton_bracket(f, df, target, lo, hi, x0, rtol=1e-15, max_iter=200):
    """Solve ``f(x) = target`` for increasing ``f`` on ``[lo, hi]``."""
    x = min(max(x0, lo), hi)
    for _ in range(max_iter):
        fx = f(x) - target
        if fx == 0:
            return x
        if fx > 0:
            hi = x
        else:
            lo = x
        d = df(x)
        step = fx / d if d > 0 else math.inf
        nx = x - step
        if not (lo < nx < hi):
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= rtol * max(abs(nx), 1e-300) or hi - lo <= rtol * max(abs(hi), 1e-300):
            return nx
        x = nx
    return x


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p > 0.5:
        # mirror so the tail carries the precision
        return -norm_ppf(1.0 - p) if 1.0 - p > 0 else math.inf
    t = math.sqrt(-2.0 * math.log(p))
    # crude rational start, polished by Newton
    x0 = -(t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t))
    return _newton_bracket(norm_cdf, norm_pdf, p, -40.0, 0.0, x0)


def chi2_cdf(x: float, k: int) -> float:
    if x <= 0:
        return 0.0
    return gammainc_p(0.5 * k, 0.5 * x)


def chi2_pdf(x: float, k: int) -> float:
    if x <= 0:
        return 0.0
    a = 0.5 * k
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_ppf(alpha: float, k: int) -> float:
    """Quantile of the chi-square distribution with ``k`` degrees of freedom.

    The lower half solves ``log P = log alpha`` in ``log x`` (the CDF behaves
    like a power there); the upper half solves ``log Q = log(1 - alpha)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    a = 0.5 * k
    if alpha <= 0.5:
        target = math.log(alpha)
        # leading-order tail: P(a, y) ~ y^a / Gamma(a + 1)
        u0 = math.log(2.0) + (target + math.lgamma(a + 1.0)) / a
        hi = math.log(max(1.0, 2.0 * k))
        while math.log(chi2_cdf(math.exp(hi), k)) < target:
            hi += 1.0
        lo = min(u0, hi) - 1.0
        while chi2_cdf(math.exp(lo), k) > 0 and math.log(chi2_cdf(math.exp(lo), k)) > target:
            lo -= 1.0

        def f(u):
            v = chi2_cdf(math.exp(u), k)
            return math.log(v) if v > 0 else -math.inf

        def df(u):
            x = math.exp(u)
            v = chi2_cdf(x, k)
            return chi2_pdf(x, k) * x / v if v > 0 else 0.0

        return math.exp(_newton_bracket(f, df, target, lo, hi, min(max(u0, lo), hi)))

    target = -math.log1p(-alpha)
    hi = max(1.0, 2.0 * k)
    while -math.log(gammainc_q(a, 0.5 * hi)) < target:
        hi *= 2.0
    z = norm_ppf(alpha)
    h = 2.0 / (9.0 * k)
    x0 = k * max(1.0 - h + z * math.sqrt(h), 1e-3) ** 3
    return _newton_bracket(lambda x: -math.log(gammainc_q(a, 0.5 * x)),
                           lambda x: chi2_pdf(x, k) / gammainc_q(a, 0.5 * x),
                           target, 0.0, hi, x0)
