"""Random-effects model parameters, odds threshold and likelihood-ratio cutoffs.

Each null is false with probability ``frac_false``; its ``k`` observations come
from ``f0`` (true null) or ``fa`` (false null).  A null is a trustworthy
rejection at level ``alpha`` exactly when its posterior null probability is at
most ``alpha``, i.e. when the log-likelihood-ratio sum reaches ``ln Q_alpha``
with ``Q_alpha = (1/a - 1)(1/alpha - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, QAlphaError

__all__ = [
    "ModelParams",
    "NormalMean",
    "GammaScale",
    "Generic",
    "GenericMultivariate",
    "FamilySpec",
    "RegimeSpec",
    "SCHEDULES",
    "q_alpha",
    "log_q_alpha",
    "require_q_above_one",
    "posterior_null_prob",
    "log_posterior_odds_threshold",
    "normal_lr_threshold",
    "gamma_lr_thresholds",
    "normal_log_lr",
    "gamma_log_lr",
    "family_from_dict",
]


def _open_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the random-effects multiple-testing model.

    ``k`` may be a non-integer real >= 1 for the analytic formulas (regime
    schedules such as ``k = delta**-t`` produce real values); the simulator
    insists on an integer.
    """

    frac_false: float
    alpha: float
    detect_prob: float = 0.9
    delta: float = 0.1
    k: float = 1

    def __post_init__(self) -> None:
        _open_unit("frac_false", self.frac_false)
        _open_unit("alpha", self.alpha)
        _open_unit("detect_prob", self.detect_prob)
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise DomainError(f"delta must be positive and finite, got {self.delta!r}")
        if not (self.k >= 1 and math.isfinite(self.k)):
            raise DomainError(f"k must be >= 1, got {self.k!r}")

    @property
    def q_alpha(self) -> float:
        return q_alpha(self.frac_false, self.alpha)

    @property
    def log_q(self) -> float:
        return log_q_alpha(self.frac_false, self.alpha)

    @property
    def k_is_integer(self) -> bool:
        return float(self.k).is_integer()

    def to_dict(self) -> dict:
        return {
            "frac_false": self.frac_false,
            "alpha": self.alpha,
            "detect_prob": self.detect_prob,
            "delta": self.delta,
            "k": self.k,
        }


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalMean:
    """N(theta0, sigma^2) under true nulls, N(theta0 + delta, sigma^2) under false.

    Internally everything is standardized to theta0 = 0, sigma = 1 with effect
    ``delta / sigma``; thresholds are mapped back to the caller's units.
    """

    theta0: float = 0.0
    sigma: float = 1.0

    name = "normal"

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")
        if not math.isfinite(self.theta0):
            raise DomainError(f"theta0 must be finite, got {self.theta0!r}")

    @property
    def fisher_info(self) -> float:
        return 1.0 / self.sigma**2

    def standardized_delta(self, delta: float) -> float:
        return delta / self.sigma

    def to_dict(self) -> dict:
        return {"family": self.name, "theta0": self.theta0, "sigma": self.sigma}


@dataclass(frozen=True)
class GammaScale:
    """Gamma(nu, 1) under true nulls, Gamma(nu, 1 + delta) under false."""

    nu: float = 1.0

    name = "gamma"

    def __post_init__(self) -> None:
        if not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise DomainError(f"nu must be positive, got {self.nu!r}")

    @property
    def fisher_info(self) -> float:
        # Fisher information of the scale parameter at scale 1.
        return self.nu

    def to_dict(self) -> dict:
        return {"family": self.name, "nu": self.nu}


@dataclass(frozen=True)
class Generic:
    """A regular univariate family known only through I(theta0)."""

    fisher_info: float

    name = "generic"

    def __post_init__(self) -> None:
        if not (self.fisher_info > 0.0 and math.isfinite(self.fisher_info)):
            raise DomainError(f"fisher_info must be positive, got {self.fisher_info!r}")

    def to_dict(self) -> dict:
        return {"family": self.name, "fisher_info": self.fisher_info}


@dataclass(frozen=True)
class GenericMultivariate:
    """A regular d-dimensional family known only through its Fisher matrix."""

    fisher_info_matrix: np.ndarray = field(repr=False)

    name = "generic_mv"

    def __post_init__(self) -> None:
        m = np.array(self.fisher_info_matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DomainError(f"Fisher matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("Fisher matrix has non-finite entries")
        if not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
            raise DomainError("Fisher matrix must be symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise DomainError("Fisher matrix is not positive definite") from None
        m.setflags(write=False)
        object.__setattr__(self, "fisher_info_matrix", m)

    @property
    def dim(self) -> int:
        return self.fisher_info_matrix.shape[0]

    def quadratic_form(self, delta_vec) -> float:
        """q(delta) = delta^T I delta, evaluated through the Cholesky factor."""
        d = np.asarray(delta_vec, dtype=float)
        if d.shape != (self.dim,):
            raise DomainError(f"delta vector must have shape ({self.dim},), got {d.shape}")
        if not np.any(d != 0.0):
            raise DomainError("delta vector must be non-zero")
        chol = np.linalg.cholesky(self.fisher_info_matrix)
        y = chol.T @ d
        return float(y @ y)

    def to_dict(self) -> dict:
        return {"family": self.name, "fisher_info_matrix": self.fisher_info_matrix.tolist()}


FamilySpec = Union[NormalMean, GammaScale, Generic, GenericMultivariate]


def family_from_dict(d: dict) -> FamilySpec:
    kind = d.get("family")
    if kind == "normal":
        return NormalMean(theta0=d.get("theta0", 0.0), sigma=d.get("sigma", 1.0))
    if kind == "gamma":
        return GammaScale(nu=d["nu"])
    if kind == "generic":
        return Generic(fisher_info=d["fisher_info"])
    if kind == "generic_mv":
        return GenericMultivariate(np.asarray(d["fisher_info_matrix"], dtype=float))
    raise DomainError(f"unknown family {kind!r}")


# ---------------------------------------------------------------------------
# Regime schedules  k = 1 / (delta^2 s(delta))  or  k = delta^-t
# ---------------------------------------------------------------------------


def _s_sqrt_log(delta: float) -> float:
    return math.sqrt(math.log(1.0 / delta))


def _s_log_log(delta: float) -> float:
    return math.log(math.log(1.0 / delta) + math.e)


SCHEDULES = ("sqrt_log", "log_log", "power_t")


@dataclass(frozen=True)
class RegimeSpec:
    """How k grows as delta shrinks.

    ``sqrt_log`` and ``log_log`` give k = 1/(delta^2 s(delta)) with s -> inf
    and s = o(ln(1/delta^2)); ``power_t`` gives k = delta^-t.
    """

    schedule: str = "sqrt_log"
    t: float | None = None

    def __post_init__(self) -> None:
        sched = self.schedule.replace("-", "_")
        if sched not in SCHEDULES:
            raise DomainError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        object.__setattr__(self, "schedule", sched)
        if sched == "power_t":
            if self.t is None or not 0.0 < self.t <= 2.0:
                raise DomainError(f"power_t schedule needs t in (0, 2], got {self.t!r}")

    def s(self, delta: float) -> float:
        if not 0.0 < delta < 1.0:
            raise DomainError(f"regime schedules need delta in (0, 1), got {delta!r}")
        if self.schedule == "sqrt_log":
            return _s_sqrt_log(delta)
        if self.schedule == "log_log":
            return _s_log_log(delta)
        return delta ** (self.t - 2.0)

    def k_real(self, delta: float) -> float:
        if self.schedule == "power_t":
            if not 0.0 < delta < 1.0:
                raise DomainError(f"regime schedules need delta in (0, 1), got {delta!r}")
            return delta ** (-self.t)
        return 1.0 / (delta * delta * self.s(delta))

    def k(self, delta: float) -> int:
        """k_real rounded half-up, floored at 1."""
        return max(1, math.floor(self.k_real(delta) + 0.5))

    def to_dict(self) -> dict:
        return {"schedule": self.schedule, "t": self.t}


# ---------------------------------------------------------------------------
# Odds threshold and posterior
# ---------------------------------------------------------------------------


def q_alpha(frac_false: float, alpha: float) -> float:
    """Q_alpha = (1/a - 1)(1/alpha - 1)."""
    a = _open_unit("frac_false", frac_false)
    al = _open_unit("alpha", alpha)
    return (1.0 / a - 1.0) * (1.0 / al - 1.0)


def log_q_alpha(frac_false: float, alpha: float) -> float:
    a = _open_unit("frac_false", frac_false)
    al = _open_unit("alpha", alpha)
    return math.log1p(-a) - math.log(a) + math.log1p(-al) - math.log(al)


def require_q_above_one(params: ModelParams) -> float:
    """Return ln Q_alpha, refusing when Q_alpha <= 1."""
    b = params.log_q
    if not b > 0.0:
        raise QAlphaError(
            f"asymptotic formulas need Q_alpha > 1; got Q_alpha = {params.q_alpha!r} "
            f"(frac_false={params.frac_false}, alpha={params.alpha})"
        )
    return b


def log_posterior_odds_threshold(frac_false: float, alpha: float) -> float:
    """The log-likelihood-ratio sum at which the posterior null probability equals alpha."""
    return log_q_alpha(frac_false, alpha)


def posterior_null_prob(log_lr_sum: float, frac_false: float) -> float:
    """P(null true | data) = 1 / (1 + a/(1-a) * LR), computed as a logistic in log-odds."""
    a = _open_unit("frac_false", frac_false)
    if math.isnan(log_lr_sum):
        raise DomainError("log-likelihood-ratio sum is NaN")
    z = math.log(a) - math.log1p(-a) + log_lr_sum
    if z == math.inf:
        return 0.0
    if z == -math.inf:
        return 1.0
    if z > 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


# ---------------------------------------------------------------------------
# Likelihood ratios and rejection thresholds
# ---------------------------------------------------------------------------


def normal_log_lr(sum_x, k: float, delta: float, family: NormalMean):
    """Log-likelihood-ratio sum for the normal-mean family from sum of X."""
    s2 = family.sigma**2
    return (delta / s2) * (sum_x - k * family.theta0) - k * delta * delta / (2.0 * s2)


def gamma_log_lr(sum_x, k: float, delta: float, family: GammaScale):
    """Log-likelihood-ratio sum for the gamma-scale family from sum of X."""
    return -k * family.nu * math.log1p(delta) + (delta / (1.0 + delta)) * sum_x


def normal_lr_threshold(params: ModelParams, family: NormalMean) -> float:
    """Cutoff on sum_j X_ij, in the caller's units, for the rejection event.

    After standardizing (theta0 = 0, sigma = 1, effect delta/sigma) the cutoff
    is ln Q / delta' + k delta' / 2; mapping back gives
    k theta0 + sigma^2 ln Q / delta + k delta / 2.
    """
    b = params.log_q
    d, k = params.delta, params.k
    return k * family.theta0 + family.sigma**2 * b / d + k * d / 2.0


def gamma_lr_thresholds(params: ModelParams, family: GammaScale) -> tuple[float, float]:
    """(c_k, d_k): cutoff for sum X at null scale 1, and the same event at scale 1 + delta."""
    b = params.log_q
    d = params.delta
    c_k = (params.k * family.nu * math.log1p(d) + b) * (1.0 + d) / d
    return c_k, c_k / (1.0 + d)
