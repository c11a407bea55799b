"""F distribution tails and quantiles from the regularized incomplete beta.

Pure Python on top of :mod:`math`. Accuracy target is 1e-10 absolute on
probabilities; the continued fraction is iterated to machine precision.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz's method."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
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
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def betainc_pair(a: float, b: float, x: float, y: float | None = None) -> tuple[float, float]:
    """Return ``(I_x(a, b), 1 - I_x(a, b))``.

    ``y`` is ``1 - x`` when the caller has it without cancellation. Whichever
    tail the continued fraction evaluates directly keeps full relative
    precision.
    """
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    front = math.exp(a * math.log(x) + b * math.log(y) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        lower = front * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = front * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def betainc(a: float, b: float, x: float) -> float:
    return betainc_pair(a, b, x)[0]


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) for the F(d1, d2) distribution."""
    if f != f:
        raise ValueError("F statistic is NaN")
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    denom = d1 * f + d2
    return betainc_pair(d1 / 2.0, d2 / 2.0, d1 * f / denom, d2 / denom)[1]


def f_cdf(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 0.0
    if math.isinf(f):
        return 1.0
    denom = d1 * f + d2
    return betainc_pair(d1 / 2.0, d2 / 2.0, d1 * f / denom, d2 / denom)[0]


def _solve_lower(a: float, b: float, target: float, hi: float) -> float:
    """Find t in (0, hi] with I_t(a, b) = target (Newton, bisection safeguard)."""
    log_b = _log_beta(a, b)
    lo, t = 0.0, hi / 2.0
    for _ in range(500):
        val = betainc_pair(a, b, t)[0] - target
        if val > 0:
            hi = t
        else:
            lo = t
        log_pdf = (a - 1.0) * math.log(t) + (b - 1.0) * math.log1p(-t) - log_b
        pdf = math.exp(log_pdf) if log_pdf < 700 else math.inf
        new = t - val / pdf if 0 < pdf < math.inf else math.nan
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        if abs(new - t) <= 1e-15 * t:
            return new
        t = new
    return t


def beta_isf(a: float, b: float, p: float) -> tuple[float, float]:
    """Return ``(x, 1 - x)`` with upper tail ``1 - I_x(a, b) = p``.

    Solves in x or in 1 - x, whichever lies below one half, so neither
    loses relative precision.
    """
    if p >= betainc_pair(a, b, 0.5)[1]:
        x = _solve_lower(a, b, 1.0 - p, 0.5)
        return x, 1.0 - x
    y = _solve_lower(b, a, p, 0.5)
    return 1.0 - y, y


def f_isf(p: float, d1: float, d2: float) -> float:
    """Value f with P(F > f) = p, i.e. the (1 - p) quantile."""
    if p == 0.0:
        return math.inf
    if p == 1.0:
        return 0.0
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in [0, 1]")
    x, y = beta_isf(d1 / 2.0, d2 / 2.0, p)
    return d2 * x / (d1 * y)


def f_ppf(q: float, d1: float, d2: float) -> float:
    return f_isf(1.0 - q, d1, d2)
