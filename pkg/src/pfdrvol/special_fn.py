"""Log-space special functions used by every tail formula.

Probabilities are carried as natural logarithms (:class:`LogProb`) so that
tails such as ``exp(-1000)`` survive products and ratios.  The functions
here are deliberately small in scope: the standard normal upper tail, the
regularized upper incomplete gamma function, and the two cancellation-prone
helpers ``phi(t) = t - ln(1 + t)`` and ``psi(t) = phi(t) - t**2 / 2``.
"""

from __future__ import annotations

import math
from typing import Iterable

from .errors import ConvergenceError, DomainError

__all__ = [
    "LogProb",
    "LOG_ZERO",
    "LOG_ONE",
    "log_add",
    "log_sum",
    "log1m_exp",
    "norm_sf_log",
    "gamma_upper_log",
    "phi",
    "psi",
    "GAMMA_ITER_BASE",
    "GAMMA_REL_TOL",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_HALF = math.sqrt(0.5)

# Rounding in log-sum-exp can push a log-probability a hair above zero.
_POSITIVE_SLACK = 1e-9


class LogProb(float):
    """Natural logarithm of a probability.

    A ``float`` subclass, so it drops straight into arithmetic; results of
    arithmetic are plain floats.  ``LogProb(-inf)`` is probability zero.
    Values within rounding slack above zero are clamped to ``0.0``.
    """

    __slots__ = ()

    def __new__(cls, log_value: float = 0.0) -> "LogProb":
        v = float(log_value)
        if math.isnan(v):
            raise DomainError("log-probability is NaN")
        if v > _POSITIVE_SLACK:
            raise DomainError(f"log-probability must be <= 0, got {v!r}")
        return super().__new__(cls, min(v, 0.0))

    @classmethod
    def from_prob(cls, p: float) -> "LogProb":
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"probability must lie in [0, 1], got {p!r}")
        return cls(math.log(p) if p > 0.0 else -math.inf)

    @property
    def prob(self) -> float:
        """Linear-space value; underflows to 0.0 below about 1e-308."""
        return math.exp(self)

    @property
    def is_zero(self) -> bool:
        return self == -math.inf

    def complement(self) -> "LogProb":
        """log(1 - p)."""
        return LogProb(log1m_exp(self))

    def __repr__(self) -> str:
        return f"LogProb({float(self)!r})"


LOG_ZERO = LogProb(-math.inf)
LOG_ONE = LogProb(0.0)


def log_add(x: float, y: float) -> float:
    """log(exp(x) + exp(y)) without overflow or underflow."""
    if x < y:
        x, y = y, x
    if y == -math.inf:
        return float(x)
    return x + math.log1p(math.exp(y - x))


def log_sum(values: Iterable[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        return -math.inf
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def log1m_exp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, switching branches at -ln 2."""
    if x > 0.0:
        raise DomainError(f"log1m_exp needs x <= 0, got {x!r}")
    if x == 0.0:
        return -math.inf
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


# ---------------------------------------------------------------------------
# Standard normal upper tail
# ---------------------------------------------------------------------------

_MILLS_SWITCH = 8.0


def _log_mills_ratio(t: float) -> float:
    """log of R(t) = Phi_bar(t) / phi(t) for t >= 8, by Laplace's continued
    fraction R = 1/(t + 1/(t + 2/(t + 3/(t + ...)))), modified Lentz."""
    tiny = 1e-300
    f = t
    c = t
    d = 0.0
    for n in range(1, 500):
        d = t + n * d
        d = tiny if d == 0.0 else 1.0 / d
        c = t + n / c
        if c == 0.0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return -math.log(f)


def norm_sf_log(t: float) -> LogProb:
    """Log of the standard normal survival function, log(1 - Phi(t)).

    Uses ``erfc`` for |t| <= 8 and the Mills-ratio continued fraction beyond,
    where ``erfc`` would start to underflow.  For very large t the result is
    dominated by ``-t**2/2`` and its accuracy is limited by the spacing of
    doubles at that magnitude (about 1e-8 relative on the probability at
    t = 1e4).
    """
    t = float(t)
    if math.isnan(t):
        raise DomainError("norm_sf_log argument is NaN")
    if t == math.inf:
        return LOG_ZERO
    if t == -math.inf:
        return LOG_ONE
    if t > _MILLS_SWITCH:
        return LogProb(-0.5 * t * t - _LOG_SQRT_2PI + _log_mills_ratio(t))
    if t < -_MILLS_SWITCH:
        return LogProb(log1m_exp(norm_sf_log(-t)))
    return LogProb(math.log(0.5 * math.erfc(t * _SQRT_HALF)))


# ---------------------------------------------------------------------------
# phi and psi
# ---------------------------------------------------------------------------

_SERIES_RADIUS = 0.1


def _log1p_tail(t: float, start: int) -> float:
    """Sum_{n >= start} (-1)^n t^n / n, the tail of -ln(1 + t) + polynomial."""
    total = 0.0
    power = t**start
    n = start
    while True:
        term = power / n if n % 2 == 0 else -power / n
        total += term
        if abs(term) <= 1e-17 * abs(total) or term == 0.0:
            return total
        power *= t
        n += 1


def phi(t: float) -> float:
    """t - ln(1 + t) for t > -1, accurate near 0."""
    if not t > -1.0:
        raise DomainError(f"phi needs t > -1, got {t!r}")
    if abs(t) < _SERIES_RADIUS:
        return _log1p_tail(t, 2)
    return t - math.log1p(t)


def psi(t: float) -> float:
    """t - t**2/2 - ln(1 + t) for t > -1.

    Near zero the three terms cancel to O(t**3); there the alternating series
    -t**3/3 + t**4/4 - ... is summed instead.
    """
    if not t > -1.0:
        raise DomainError(f"psi needs t > -1, got {t!r}")
    if abs(t) < _SERIES_RADIUS:
        return _log1p_tail(t, 3)
    return t - 0.5 * t * t - math.log1p(t)


# ---------------------------------------------------------------------------
# Regularized upper incomplete gamma
# ---------------------------------------------------------------------------

GAMMA_REL_TOL = 1e-15
GAMMA_ITER_BASE = 500

_STIRLING_SWITCH = 10.0


def _gamma_iter_cap(shape: float) -> int:
    # The power series needs O(sqrt(shape)) terms when x is near the mode.
    return GAMMA_ITER_BASE + 10 * math.ceil(math.sqrt(shape))


def _stirling_correction(a: float) -> float:
    """ln Gamma(a) - [(a - 1/2) ln a - a + ln sqrt(2 pi)]."""
    if a < _STIRLING_SWITCH:
        return math.lgamma(a) - ((a - 0.5) * math.log(a) - a + _LOG_SQRT_2PI)
    a2 = a * a
    return (
        1 / 12
        - (1 / 360 - (1 / 1260 - (1 / 1680 - (1 / 1188 - (691 / 360360 - 1 / (156 * a2)) / a2) / a2) / a2) / a2)
        / a2
    ) / a


def _log_gamma_kernel(a: float, x: float) -> float:
    """log(x**a * exp(-x) / Gamma(a)).

    For large a the direct form loses digits to cancellation between
    a*ln(x) and ln Gamma(a); the rearrangement -a*phi((x - a)/a) + ... keeps
    the absolute error near machine epsilon times the (small) result.
    """
    if a < _STIRLING_SWITCH:
        return a * math.log(x) - x - math.lgamma(a)
    return -a * phi((x - a) / a) + 0.5 * math.log(a / (2.0 * math.pi)) - _stirling_correction(a)


def _lower_series(a: float, x: float) -> float:
    """P(a, x) by the power series; intended for x < a + 1."""
    cap = _gamma_iter_cap(a)
    term = 1.0
    total = 1.0
    for n in range(1, cap + 1):
        term *= x / (a + n)
        total += term
        if term < GAMMA_REL_TOL * total:
            return math.exp(_log_gamma_kernel(a, x) + math.log(total) - math.log(a))
    raise ConvergenceError(f"incomplete gamma series did not converge (shape={a}, x={x})")


def _log_upper_cf(a: float, x: float) -> float:
    """log Q(a, x) by Legendre's continued fraction; intended for x >= a + 1."""
    cap = _gamma_iter_cap(a)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, cap + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_REL_TOL:
            return _log_gamma_kernel(a, x) + math.log(h)
    raise ConvergenceError(f"incomplete gamma continued fraction did not converge (shape={a}, x={x})")


def gamma_upper_log(shape: float, x: float) -> LogProb:
    """log Q(shape, x), the regularized upper incomplete gamma function.

    Equivalently the log upper tail P(S >= x) of S ~ Gamma(shape, 1).  Series
    for x < shape + 1, continued fraction otherwise.  The iteration cap is
    ``GAMMA_ITER_BASE + 10*ceil(sqrt(shape))``; exceeding it raises
    :class:`ConvergenceError` rather than returning an unconverged value.
    """
    shape = float(shape)
    x = float(x)
    if not shape > 0.0 or math.isinf(shape):
        raise DomainError(f"gamma shape must be positive and finite, got {shape!r}")
    if not x >= 0.0:
        raise DomainError(f"gamma argument must be >= 0, got {x!r}")
    if x == 0.0:
        return LOG_ONE
    if x == math.inf:
        return LOG_ZERO
    if x < shape + 1.0:
        return LogProb(math.log1p(-_lower_series(shape, x)))
    return LogProb(_log_upper_cf(shape, x))
