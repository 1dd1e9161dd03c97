"""Asymptotic (N -> infinity) power and pFDR of posterior-thresholding procedures.

A thresholding procedure rejects null i when its posterior null probability is
at most a cutoff.  As N grows, R_a/N_a and the conditional pFDR converge to
tail functionals of the rejection event at that cutoff:

    power_inf = Pa(E_k(cutoff)),   pFDR_inf = (1 - a) P0(E_k(cutoff)) / p_mix(cutoff)

so both are computed here from exact tails rather than by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .asymptotics import extrapolate_limit
from .errors import DomainError
from .exact import TailSplit, exact_tails
from .model import ModelParams, NormalMean, require_q_above_one
from .special_fn import LogProb

__all__ = [
    "ThresholdProcedure",
    "PowerReport",
    "power_pfdr_threshold",
    "power_identity_check",
    "shifted_cutoff_for_gain",
    "power_ratio_limit",
    "adjudicate_ratio_limit",
    "power_upper_bound",
]


@dataclass(frozen=True)
class ThresholdProcedure:
    """Reject when P(null | data) <= cutoff.

    ``kind="fixed"`` uses ``alpha``; ``kind="shifted"`` uses alpha + c k delta^2
    at each (delta, k).
    """

    alpha: float
    kind: str = "fixed"
    c: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "shifted"):
            raise DomainError(f"procedure kind must be 'fixed' or 'shifted', got {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.kind == "fixed" and self.c != 0.0:
            raise DomainError("a fixed procedure takes no shift constant")

    @classmethod
    def fixed(cls, alpha: float) -> "ThresholdProcedure":
        return cls(alpha=alpha)

    @classmethod
    def shifted(cls, alpha: float, c: float) -> "ThresholdProcedure":
        return cls(alpha=alpha, kind="shifted", c=c)

    def effective_cutoff(self, delta: float, k: float) -> float:
        cutoff = self.alpha + self.c * k * delta * delta if self.kind == "shifted" else self.alpha
        if not 0.0 < cutoff < 1.0:
            raise DomainError(f"effective cutoff {cutoff!r} left (0, 1) at delta={delta}, k={k}")
        return cutoff

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "c": self.c}


@dataclass(frozen=True)
class PowerReport:
    power_inf: LogProb
    pfdr_inf: float
    effective_cutoff: float
    delta: float
    k: float
    tails: TailSplit

    def to_dict(self) -> dict:
        return {
            "power_inf": {"value": math.exp(self.power_inf), "log": float(self.power_inf)},
            "pfdr_inf": self.pfdr_inf,
            "effective_cutoff": self.effective_cutoff,
            "regime_point": {"delta": self.delta, "k": self.k},
            "tails": self.tails.to_dict(),
        }


def _pfdr_from_tails(tails: TailSplit, frac_false: float) -> float:
    if tails.p_mix.is_zero:
        return math.nan
    return math.exp(math.log1p(-frac_false) + tails.p_null - tails.p_mix)


def power_pfdr_threshold(proc: ThresholdProcedure, params: ModelParams, family) -> PowerReport:
    """Limiting power and pFDR of a thresholding procedure at (params.delta, params.k).

    ``params.alpha`` is ignored in favour of the procedure's own cutoff.
    """
    cutoff = proc.effective_cutoff(params.delta, params.k)
    tails = exact_tails(replace(params, alpha=cutoff), family)
    return PowerReport(
        power_inf=tails.p_alt,
        pfdr_inf=_pfdr_from_tails(tails, params.frac_false),
        effective_cutoff=cutoff,
        delta=params.delta,
        k=params.k,
        tails=tails,
    )


def power_identity_check(params: ModelParams, family) -> float:
    """a * Pa(E_k(alpha)) / ((1 - alpha) p_mix(alpha)); tends to 1 in the small-delta regime."""
    tails = exact_tails(params, family)
    return math.exp(
        math.log(params.frac_false) + tails.p_alt - math.log1p(-params.alpha) - tails.p_mix
    )


def shifted_cutoff_for_gain(params: ModelParams, fisher_info: float, gain_M: float) -> float:
    """Shift constant c = (1 - alpha) alpha I ln M / ln Q_alpha targeting an M-fold power gain."""
    b = require_q_above_one(params)
    if not gain_M > 1.0:
        raise DomainError(f"gain M must exceed 1, got {gain_M!r}")
    if not fisher_info > 0.0:
        raise DomainError(f"fisher_info must be positive, got {fisher_info!r}")
    al = params.alpha
    return (1.0 - al) * al * fisher_info * math.log(gain_M) / b


def power_ratio_limit(
    params: ModelParams, c: float, family: NormalMean
) -> tuple[Callable[[float, float], float], dict[str, float]]:
    """Exact power ratio of the shifted procedure over d*, and closed-form limits.

    Returns ``(ratio_fn, candidates)``.  ``ratio_fn(delta, k)`` is the exact
    ratio Pa(E_k(alpha + c k delta^2)) / Pa(E_k(alpha)).  ``candidates`` holds
    closed forms the ratio might tend to:

    * ``neg_one_minus_alpha``: exp(-2 c ln Q / (1 - alpha))
    * ``one_minus_alpha``: exp(2 c ln Q / (1 - alpha))
    * ``one_minus_alpha_times_alpha``: exp(2 c ln Q / ((1 - alpha) alpha))
    * ``first_order_taylor``: exp(c ln Q / ((1 - alpha) alpha I)), from a
      first-order expansion of ln Q at the shifted cutoff; equals M when c
      comes from :func:`shifted_cutoff_for_gain`.
    """
    b = require_q_above_one(params)
    if not isinstance(family, NormalMean):
        raise DomainError("power_ratio_limit is defined for the normal-mean family")
    proc = ThresholdProcedure.shifted(params.alpha, c) if c != 0.0 else ThresholdProcedure.fixed(params.alpha)
    base = ThresholdProcedure.fixed(params.alpha)

    def ratio_fn(delta: float, k: float) -> float:
        p = replace(params, delta=float(delta), k=k)
        shifted = power_pfdr_threshold(proc, p, family).power_inf
        ref = power_pfdr_threshold(base, p, family).power_inf
        return math.exp(shifted - ref)

    al = params.alpha
    info = family.fisher_info
    candidates = {
        "neg_one_minus_alpha": math.exp(-2.0 * c * b / (1.0 - al)),
        "one_minus_alpha": math.exp(2.0 * c * b / (1.0 - al)),
        "one_minus_alpha_times_alpha": math.exp(2.0 * c * b / ((1.0 - al) * al)),
        "first_order_taylor": math.exp(c * b / ((1.0 - al) * al * info)),
    }
    return ratio_fn, candidates


def adjudicate_ratio_limit(
    deltas: Sequence[float], ratios: Sequence[float], candidates: dict[str, float]
) -> dict:
    """Extrapolate the ratio sequence to delta -> 0 and name the closest candidate (in log scale)."""
    order = sorted(range(len(deltas)), key=lambda i: -deltas[i])
    xs = [deltas[i] for i in order]
    logs = [math.log(ratios[i]) for i in order]
    limit = math.exp(extrapolate_limit(xs, logs))
    gaps = {name: abs(math.log(limit) - math.log(v)) for name, v in candidates.items()}
    best = min(gaps, key=gaps.get)
    return {"extrapolated_limit": limit, "log_gaps": gaps, "closest": best}


def power_upper_bound(params: ModelParams, family, alpha2: float) -> float:
    """log of p_mix(alpha2) / a, the bound on power for procedures controlling pFDR at alpha.

    Returned as a plain log value: the bound can exceed one (it is capped by 1/a).
    """
    if not params.alpha < alpha2 < 1.0:
        raise DomainError(f"alpha2 must lie in (alpha, 1) = ({params.alpha}, 1), got {alpha2!r}")
    tails = exact_tails(replace(params, alpha=alpha2), family)
    return float(tails.p_mix) - math.log(params.frac_false)

