"""Exact tail probabilities of the rejection event and the minimum N and V.

For both exact-capable families the likelihood ratio depends on the data only
through ``S = sum_j X_ij``, so the rejection event is ``{S >= cutoff}`` and its
probability under each hypothesis is a normal or gamma tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError
from .model import GammaScale, ModelParams, NormalMean, gamma_lr_thresholds
from .special_fn import LogProb, gamma_upper_log, log1m_exp, log_add, norm_sf_log

__all__ = [
    "TailSplit",
    "VolumeResult",
    "PROVENANCES",
    "exact_p_normal",
    "exact_p_gamma",
    "exact_tails",
    "min_nulls_log",
    "min_nulls_exact",
    "min_volume_exact",
    "INT64_LIMIT",
]

INT64_LIMIT = 2**63

PROVENANCES = (
    "exact",
    "asymptotic_univariate",
    "asymptotic_multivariate",
    "asymptotic_normal",
    "asymptotic_gamma",
)


@dataclass(frozen=True)
class TailSplit:
    """Rejection-event probabilities under the null, the alternative and the mixture."""

    p_null: LogProb
    p_alt: LogProb
    p_mix: LogProb

    @classmethod
    def mix(cls, p_null: float, p_alt: float, frac_false: float) -> "TailSplit":
        p_mix = log_add(math.log1p(-frac_false) + p_null, math.log(frac_false) + p_alt)
        return cls(LogProb(p_null), LogProb(p_alt), LogProb(p_mix))

    def to_dict(self) -> dict:
        return {name: _prob_record(getattr(self, name)) for name in ("p_null", "p_alt", "p_mix")}


def _prob_record(lp: float) -> dict:
    return {"value": math.exp(lp), "log": float(lp)}


@dataclass(frozen=True)
class VolumeResult:
    """Event probability with the minimum number of nulls N* and volume V* = k N*.

    ``log_n_star`` is always set.  ``n_star_int`` holds the integer N* for the
    exact path when it is below 2**63, and is None otherwise (including every
    asymptotic result, where N* is a real-valued leading term).
    """

    p_event: LogProb
    log_n_star: float
    k: float
    provenance: str
    n_star_int: Optional[int] = None

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise DomainError(f"unknown provenance {self.provenance!r}")

    @property
    def log_v_star(self) -> float:
        return math.log(self.k) + self.log_n_star

    @property
    def n_star(self) -> float:
        if self.n_star_int is not None:
            return float(self.n_star_int)
        return _safe_exp(self.log_n_star)

    @property
    def v_star(self) -> float:
        if self.n_star_int is not None:
            return self.k * self.n_star_int
        return _safe_exp(self.log_v_star)

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "k": self.k,
            "p_event": _prob_record(self.p_event),
            "n_star": self.n_star,
            "n_star_int": self.n_star_int,
            "log_n_star": self.log_n_star,
            "v_star": self.v_star,
            "log_v_star": self.log_v_star,
        }


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# Exact tails
# ---------------------------------------------------------------------------


def exact_p_normal(params: ModelParams, family: NormalMean) -> TailSplit:
    """Tails of {S >= cutoff} with S ~ N(k theta0 + eta k delta, k sigma^2).

    In standardized units, with r = sqrt(k) delta / sigma and b = ln Q_alpha,
    P0 = Phi_bar(b/r + r/2) and Pa = Phi_bar(b/r - r/2).
    """
    b = params.log_q
    r = math.sqrt(params.k) * family.standardized_delta(params.delta)
    p_null = norm_sf_log(b / r + r / 2.0)
    p_alt = norm_sf_log(b / r - r / 2.0)
    return TailSplit.mix(p_null, p_alt, params.frac_false)


def exact_p_gamma(params: ModelParams, family: GammaScale) -> TailSplit:
    """Tails of {S >= c_k} with S ~ Gamma(k nu, 1) or Gamma(k nu, 1 + delta).

    The alternative tail uses scaling: P(Gamma(z, 1 + delta) >= c) = Q(z, c/(1 + delta)).
    """
    c_k, d_k = gamma_lr_thresholds(params, family)
    shape = params.k * family.nu
    p_null = gamma_upper_log(shape, max(c_k, 0.0))
    p_alt = gamma_upper_log(shape, max(d_k, 0.0))
    return TailSplit.mix(p_null, p_alt, params.frac_false)


def exact_tails(params: ModelParams, family) -> TailSplit:
    if isinstance(family, NormalMean):
        return exact_p_normal(params, family)
    if isinstance(family, GammaScale):
        return exact_p_gamma(params, family)
    raise DomainError(f"exact tails are available only for normal and gamma families, got {family!r}")


# ---------------------------------------------------------------------------
# Minimum number of nulls and volume
# ---------------------------------------------------------------------------


def _check_detect(detect_prob: float) -> None:
    if not 0.0 < detect_prob < 1.0:
        raise DomainError(f"detect_prob must lie in (0, 1), got {detect_prob!r}")


def _log_neg_log1m(lp: float) -> float:
    """log(-ln(1 - p)) given lp = log p."""
    if lp < -700.0:
        # -ln(1 - p) = p (1 + p/2 + ...); the correction is below double precision.
        return lp
    return math.log(-log1m_exp(lp))


def min_nulls_log(p_event: float, detect_prob: float) -> float:
    """log of the real-valued N solving 1 - (1 - p_event)^N = detect_prob."""
    _check_detect(detect_prob)
    lp = float(p_event)
    if lp == -math.inf:
        raise DomainError("p_event is zero: the detection criterion is unattainable")
    if lp >= 0.0:
        return 0.0 if lp == 0.0 else math.nan
    return math.log(-math.log1p(-detect_prob)) - _log_neg_log1m(lp)


def _meets_criterion(n: int, lp: float, detect_prob: float) -> bool:
    # 1 - (1 - p)^n >= detect_prob  <=>  n ln(1 - p) <= ln(1 - detect_prob)
    return n * log1m_exp(lp) <= math.log1p(-detect_prob)


def min_nulls_exact(p_event: float, detect_prob: float) -> int:
    """Smallest integer N with 1 - (1 - p_event)^N >= detect_prob.

    ``p_event`` is a log-probability.  Computed as ceil(ln(1-p)/ln(1-p_event))
    with a boundary correction so that floating-point noise near an integer
    cannot add a spurious extra null.  Values too large for a float raise
    OverflowError; use :func:`min_nulls_log` there.
    """
    lp = float(p_event)
    if lp == 0.0:
        _check_detect(detect_prob)
        return 1
    log_n = min_nulls_log(lp, detect_prob)
    n_real = math.exp(log_n)
    n = max(1, math.ceil(n_real))
    if n_real < 2**52:
        while n > 1 and _meets_criterion(n - 1, lp, detect_prob):
            n -= 1
        while not _meets_criterion(n, lp, detect_prob):
            n += 1
    return n


def min_volume_exact(params: ModelParams, family) -> VolumeResult:
    tails = exact_tails(params, family)
    log_n = min_nulls_log(tails.p_mix, params.detect_prob)
    n_int = None
    if log_n < math.log(INT64_LIMIT):
        n_int = min_nulls_exact(tails.p_mix, params.detect_prob)
        if n_int >= INT64_LIMIT:
            n_int = None
        else:
            log_n = math.log(n_int)
    return VolumeResult(
        p_event=tails.p_mix,
        log_n_star=log_n,
        k=params.k,
        provenance="exact",
        n_star_int=n_int,
    )
