"""Log-gamma, Pochhammer symbols and the Gauss hypergeometric series on [0, 1)."""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS = 2.220446049250313e-16

DEFAULT_TOL = 1e-14
DEFAULT_MAX_TERMS = 10**6
# Euler transformation is applied above this argument when c - a - b > 0.
EULER_THRESHOLD = 0.75


class SeriesConvergenceError(ArithmeticError):
    """The hypergeometric series did not reach the requested tolerance."""


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


@dataclass(frozen=True)
class HypParams:
    a: float
    b: float
    c: float
    lam: float

    def __post_init__(self):
        if _is_nonpositive_integer(self.c):
            raise ValueError(f"c must not be a non-positive integer, got {self.c}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"argument must lie in [0, 1), got {self.lam}")


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    tail_bound: float

    def __float__(self):
        return float(self.value)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not x > 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def gamma_ratio(num, den) -> float:
    """prod Gamma(num) / prod Gamma(den), evaluated in log space.

    All arguments must be positive.
    """
    return math.exp(sum(log_gamma(x) for x in num) - sum(log_gamma(x) for x in den))


def pochhammer(a: float, k: int) -> float:
    """Rising factorial (a)_k = a (a+1) ... (a+k-1), with (a)_0 = 1."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = 1.0
    for i in range(k):
        out *= a + i
    return out


def _terminating_degree(a: float, b: float):
    degs = [int(-x) for x in (a, b) if _is_nonpositive_integer(x)]
    return min(degs) if degs else None


def _sum_series(a, b, c, lam, tol, max_terms):
    degree = _terminating_degree(a, b)
    if degree is not None:
        term = total = 1.0
        for k in range(degree):
            term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * lam
            total += term
        return total, degree + 1, 0.0
    if lam == 0.0:
        return 1.0, 1, 0.0

    # ratios can change sign until k passes every negative parameter
    settle = max(-a, -b, -c, 0.0)
    term = total = 1.0
    for k in range(max_terms - 1):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * lam
        total += term
        if k + 1 <= settle:
            continue
        k1 = k + 1
        ratio = abs((a + k1) * (b + k1) / ((c + k1) * (k1 + 1))) * lam
        rho = max(ratio, lam)
        tail = abs(term) * rho / (1.0 - rho) if rho < 1.0 else math.inf
        if tail <= tol * abs(total):
            return total, k + 2, tail
    raise SeriesConvergenceError(
        f"2F1({a}, {b}; {c}; {lam}) not converged after {max_terms} terms"
    )


def hyp2f1(a, b, c, lam, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS,
           euler_threshold=EULER_THRESHOLD) -> SeriesResult:
    """Gauss hypergeometric function 2F1(a, b; c; lam) for 0 <= lam < 1.

    The power series is summed until the estimated tail drops below
    ``tol`` relative to the partial sum. For ``lam > euler_threshold`` and
    ``c - a - b > 0`` the Euler-transformed series
    ``(1 - lam)**(c - a - b) * 2F1(c - a, c - b; c; lam)`` is summed instead.
    Its terms share one sign once c - a, c - b > 0, which removes the
    cancellation of sign-changing coefficients (it does not shorten the sum).
    Terminating series (``a`` or ``b`` a non-positive integer) are summed
    exactly and never transformed. Either series needs about
    log(1/tol) / (1 - lam) terms, so 1 - lam much below 1e-5 exhausts the
    default term cap.
    """
    p = HypParams(float(a), float(b), float(c), float(lam))
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = p.c - p.a - p.b
    use_euler = (
        _terminating_degree(p.a, p.b) is None and p.lam > euler_threshold and s > 0
    )
    if use_euler:
        total, used, tail = _sum_series(p.c - p.a, p.c - p.b, p.c, p.lam, tol, max_terms)
        pre = math.exp(s * math.log1p(-p.lam))
        value, tail = pre * total, pre * tail
    else:
        value, used, tail = _sum_series(p.a, p.b, p.c, p.lam, tol, max_terms)
    if tail <= 0.0:
        tail = EPS * abs(value)
    return SeriesResult(value, used, tail)


def hyp2f1_derivative(a, b, c, lam, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS,
                      euler_threshold=EULER_THRESHOLD) -> SeriesResult:
    """d/dlam 2F1(a, b; c; lam) = (a b / c) 2F1(a+1, b+1; c+1; lam)."""
    HypParams(float(a), float(b), float(c), float(lam))
    factor = a * b / c
    if factor == 0.0:
        return SeriesResult(0.0, 1, 0.0)
    res = hyp2f1(a + 1, b + 1, c + 1, lam, tol, max_terms, euler_threshold)
    return SeriesResult(factor * res.value, res.terms_used, abs(factor) * res.tail_bound)


def gauss_sum(a, b, c) -> float:
    """2F1(a, b; c; 1) = Gamma(c) Gamma(c-a-b) / (Gamma(c-a) Gamma(c-b)), for c - a - b > 0."""
    s = c - a - b
    if not s > 0:
        raise ValueError("Gauss summation needs c - a - b > 0")
    if _is_nonpositive_integer(c - a) or _is_nonpositive_integer(c - b):
        return 0.0
    sign = 1.0
    for x in (c - a, c - b, c):
        if x < 0:
            sign *= math.copysign(1.0, math.gamma(x))
    num = math.lgamma(c) + math.lgamma(s)
    den = math.lgamma(c - a) + math.lgamma(c - b)
    return sign * math.exp(num - den)


def absolute_coefficient_sum(a, b, c) -> float:
    """Sum over j of |(a)_j (b)_j / ((c)_j j!)|, for c - a - b > 0 and c > 0.

    Beyond j0 = max(0, ceil(-a), ceil(-b)) every coefficient has one sign, so
    the tail equals |2F1(a, b; c; 1) - partial sum|.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    j0 = max(0, math.ceil(-a), math.ceil(-b))
    coef = 1.0
    head = abs_head = 0.0
    for j in range(j0):
        head += coef
        abs_head += abs(coef)
        coef *= (a + j) * (b + j) / ((c + j) * (j + 1))
    return abs_head + abs(gauss_sum(a, b, c) - head)
