"""Closed-form leading terms for the event probability, N* and V*.

Every function returns the leading term with the (1 + o(1)) factor dropped.
Comparisons with exact values are ratio diagnostics; nothing downstream treats
these values as exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, RegimeWarning
from .exact import VolumeResult, exact_tails
from .model import (
    GammaScale,
    GenericMultivariate,
    ModelParams,
    NormalMean,
    RegimeSpec,
    require_q_above_one,
)
from .special_fn import LogProb, psi

__all__ = [
    "log_prefactor",
    "asym_p_univariate",
    "asym_p_multivariate",
    "asym_p_normal",
    "asym_v_normal",
    "asym_p_gamma",
    "asym_v_generic",
    "GAMMA_PREFACTORS",
    "convergence_table",
    "extrapolate_limit",
    "adjudicate_gamma",
]


def log_prefactor(params: ModelParams) -> float:
    """log sqrt((1-a) a / (2 pi (1-alpha) alpha))."""
    a, al = params.frac_false, params.alpha
    return 0.5 * (math.log1p(-a) + math.log(a) - math.log(2.0 * math.pi) - math.log1p(-al) - math.log(al))


def _warn_regime(msg: str) -> None:
    warnings.warn(msg, RegimeWarning, stacklevel=3)


def _leading(log_value: float) -> LogProb:
    # Far outside the regime the leading term can exceed one; report it as one.
    if log_value > 0.0:
        _warn_regime(f"leading term exp({log_value:.3g}) exceeds one and is capped at one")
        return LogProb(0.0)
    return LogProb(log_value)


def _log_p_from_info(params: ModelParams, kq: float, b: float) -> LogProb:
    # kq = k * delta^T I delta
    if kq >= 1.0:
        _warn_regime(f"k*I*delta^2 = {kq:.3g} is not small; the leading term may be inaccurate")
    return _leading(log_prefactor(params) + 0.5 * math.log(kq) - math.log(b) - b * b / (2.0 * kq))


def asym_p_univariate(params: ModelParams, fisher_info: float) -> LogProb:
    """Leading term for a regular univariate family with Fisher information I(theta0)."""
    b = require_q_above_one(params)
    if not fisher_info > 0.0:
        raise DomainError(f"fisher_info must be positive, got {fisher_info!r}")
    return _log_p_from_info(params, params.k * fisher_info * params.delta**2, b)


def asym_p_multivariate(params: ModelParams, fisher_matrix, delta_vec) -> LogProb:
    """Multivariate leading term with q(delta) = delta^T I(theta0) delta.

    ``params.delta`` is ignored; the effect is the vector ``delta_vec``.
    """
    b = require_q_above_one(params)
    fam = fisher_matrix if isinstance(fisher_matrix, GenericMultivariate) else GenericMultivariate(fisher_matrix)
    q = fam.quadratic_form(delta_vec)
    return _log_p_from_info(params, params.k * q, b)


def asym_p_normal(params: ModelParams, family: NormalMean) -> LogProb:
    """Normal-mean leading term; depends on (delta, sigma) only through delta/sigma."""
    b = require_q_above_one(params)
    d = family.standardized_delta(params.delta)
    return _log_p_from_info(params, params.k * d * d, b)


def asym_v_normal(params: ModelParams, family: NormalMean) -> VolumeResult:
    """Leading term of V* for the normal-mean family, with N* = V*/k."""
    b = require_q_above_one(params)
    d = family.standardized_delta(params.delta)
    kq = params.k * d * d
    log_v = (
        math.log(-math.log1p(-params.detect_prob))
        - log_prefactor(params)
        + 0.5 * math.log(params.k)
        + math.log(b)
        - math.log(d)
        + b * b / (2.0 * kq)
    )
    p_event = asym_p_normal(params, family)
    return VolumeResult(
        p_event=p_event,
        log_n_star=log_v - math.log(params.k),
        k=params.k,
        provenance="asymptotic_normal",
    )


GAMMA_PREFACTORS = ("sqrt_log_q", "log_q")


def asym_p_gamma(params: ModelParams, family: GammaScale, prefactor: str = "sqrt_log_q") -> LogProb:
    """Gamma-scale leading term including the psi correction to the exponent.

    ``prefactor="sqrt_log_q"`` (the default) divides by sqrt(ln Q_alpha).
    ``prefactor="log_q"`` divides by ln Q_alpha instead, which is what
    combining the two gamma tail expansions produces; the convergence
    diagnostics report which of the two matches exact tails.
    """
    if prefactor not in GAMMA_PREFACTORS:
        raise DomainError(f"prefactor must be one of {GAMMA_PREFACTORS}, got {prefactor!r}")
    b = require_q_above_one(params)
    z = params.k * family.nu
    d = params.delta
    if params.k * d <= 1.0 or params.k * d * d >= 1.0:
        _warn_regime(f"gamma expansion needs k*delta >> 1 and k*delta^2 << 1 (k={params.k}, delta={d})")
    log_b_term = 0.5 * math.log(b) if prefactor == "sqrt_log_q" else math.log(b)
    return _leading(
        log_prefactor(params)
        + 0.5 * math.log(z)
        + math.log(d)
        - log_b_term
        - b * b / (2.0 * z * d * d)
        - z * psi(b / (z * d))
    )


def asym_v_generic(p_event: float, params: ModelParams, provenance: str = "asymptotic_univariate") -> VolumeResult:
    """N* = ln(1/(1-p)) / p_event and V* = k N*, carried in log form."""
    lp = float(p_event)
    if lp == -math.inf:
        raise DomainError("p_event is zero: the detection criterion is unattainable")
    log_n = math.log(-math.log1p(-params.detect_prob)) - lp
    return VolumeResult(p_event=LogProb(lp), log_n_star=log_n, k=params.k, provenance=provenance)


# ---------------------------------------------------------------------------
# Convergence diagnostics
# ---------------------------------------------------------------------------


def convergence_table(
    params: ModelParams,
    family,
    deltas: Iterable[float],
    regime: RegimeSpec,
) -> list[dict]:
    """Exact versus asymptotic log-probabilities along a (delta, k(delta)) path.

    Rows carry ``delta, k, p_exact_log, p_asym_log, log_ratio`` where
    ``log_ratio = p_exact_log - p_asym_log``.  For the gamma family the asym
    column uses the sqrt(ln Q) prefactor, and extra columns give the ln Q
    prefactor variant (``*_logq``) and the univariate Fisher-information
    formula with I = nu (``*_fisher``).
    """
    rows = []
    for delta in deltas:
        k = regime.k(delta)
        p = replace(params, delta=float(delta), k=k)
        exact = exact_tails(p, family).p_mix
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            if isinstance(family, NormalMean):
                asym = asym_p_normal(p, family)
                row = _row(delta, k, exact, asym)
            elif isinstance(family, GammaScale):
                asym = asym_p_gamma(p, family, "sqrt_log_q")
                row = {"nu": family.nu, **_row(delta, k, exact, asym)}
                logq = asym_p_gamma(p, family, "log_q")
                fisher = asym_p_univariate(p, family.fisher_info)
                row.update(
                    p_asym_logq_log=float(logq),
                    log_ratio_logq=float(exact) - float(logq),
                    p_fisher_log=float(fisher),
                    log_ratio_fisher=float(exact) - float(fisher),
                )
            else:
                raise DomainError(f"convergence needs an exact-capable family, got {family!r}")
        rows.append(row)
    return rows


def _row(delta: float, k: int, exact: float, asym: float) -> dict:
    return {
        "delta": float(delta),
        "k": k,
        "p_exact_log": float(exact),
        "p_asym_log": float(asym),
        "log_ratio": float(exact) - float(asym),
    }


def extrapolate_limit(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Limit of y as x -> 0 assuming y = L + C x**g on the last three points.

    Falls back to the last value when the three points are not consistent
    with a single power law (non-monotone differences).
    """
    if len(xs) < 3:
        return float(ys[-1])
    (x1, x2, x3), (y1, y2, y3) = xs[-3:], ys[-3:]
    d12, d23 = y1 - y2, y2 - y3
    if d23 == 0.0 or d12 * d23 <= 0.0:
        return float(y3)
    target = d12 / d23

    def gap(g: float) -> float:
        return (x1**g - x2**g) / (x2**g - x3**g) - target

    lo, hi = 1e-3, 8.0
    if gap(lo) * gap(hi) > 0.0:
        return float(y3)
    g = brentq(gap, lo, hi, xtol=1e-12)
    c = d23 / (x2**g - x3**g)
    return float(y3 - c * x3**g)


def adjudicate_gamma(rows: Sequence[dict], tol: float = 0.1) -> dict:
    """Decide which gamma closed form tends to the exact tail.

    For each candidate column the limiting log ratio is estimated by power-law
    extrapolation in delta; a formula is declared convergent when the limit is
    within ``tol`` of zero and |log ratio| decreases strictly along the grid.
    The two prefactor forms differ by 0.5 ln ln Q_alpha in the limit (about
    0.6 at the standard parameters), so the default ``tol`` separates them.
    """
    rows = sorted(rows, key=lambda r: -r["delta"])
    xs = [r["delta"] for r in rows]
    report = {}
    for name, col in (
        ("sqrt_log_q_prefactor", "log_ratio"),
        ("log_q_prefactor", "log_ratio_logq"),
        ("fisher_info_nu", "log_ratio_fisher"),
    ):
        ys = [r[col] for r in rows]
        limit = extrapolate_limit(xs, ys)
        mags = np.abs(ys)
        report[name] = {
            "final_log_ratio": float(ys[-1]),
            "extrapolated_limit": limit,
            "monotone_decrease": bool(np.all(np.diff(mags) < 0.0)),
            "converges": bool(abs(limit) < tol and np.all(np.diff(mags) < 0.0)),
        }
    winners = [n for n, r in report.items() if r["converges"]]
    report["verdict"] = winners[0] if len(winners) == 1 else ("ambiguous" if winners else "none")
    return report
