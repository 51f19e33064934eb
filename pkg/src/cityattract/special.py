"""Numerics for slope significance: regularized incomplete beta and Student-t tails.

The incomplete beta ratio is evaluated with the classic continued fraction
(modified Lentz iteration, as in Cephes/Numerical Recipes), converging well
below 1e-10 relative error for the degrees of freedom this package meets.
"""

from __future__ import annotations

from math import exp, inf, lgamma, log

_CF_TOL = 1e-14
_CF_MAX_ITER = 500
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta ratio (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
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
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed to converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("betainc_reg requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc_reg requires 0 <= x <= 1")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x)
    front = exp(ln_front)
    # symmetry pivot keeps the continued fraction in its fast-converging regime
    if x < (a + 1.0) / (a + b + 2.0):
        result = front * _beta_cf(a, b, x) / a
    else:
        result = 1.0 - front * _beta_cf(b, a, 1.0 - x) / b
    return min(max(result, 0.0), 1.0)


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student-t with df > 0.

    Uses the identity P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2).
    """
    if df <= 0:
        raise ValueError("t_two_sided_p requires df > 0")
    if t == 0.0:
        return 1.0
    if t in (inf, -inf):
        return 0.0
    x = df / (df + t * t)
    return betainc_reg(0.5 * df, 0.5, x)
