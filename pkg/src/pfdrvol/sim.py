"""Monte Carlo simulator of the random-effects model.

Each repetition draws ``n_nulls`` independent units (eta_i, X_i1..X_ik),
applies a posterior-thresholding procedure and records rejection counts, the
posterior-weighted false-rejection sum and the criterion indicator.  This is
the independent oracle for the analytic layers.

Reproducibility: repetition ``r`` draws from PCG64 seeded by
``SeedSequence(seed, spawn_key=(r,))``, so results do not depend on how
repetitions are distributed over threads.  Aggregates are reduced in
repetition order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceededError, DomainError, EstimationError
from .model import GammaScale, ModelParams, NormalMean, gamma_log_lr, log_q_alpha, normal_log_lr
from .power import ThresholdProcedure

logger = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "SimReport",
    "PRNG_NAME",
    "DEFAULT_BUDGET",
    "draw_budget",
    "simulate",
    "simulate_rep",
    "estimate_event_prob",
    "estimate_criterion_prob",
    "estimate_power_pfdr",
    "PowerPfdrEstimate",
    "REP_CSV_COLUMNS",
]

PRNG_NAME = f"numpy.PCG64+SeedSequence(seed, spawn_key=(rep,)) numpy=={np.__version__}"
DEFAULT_BUDGET = 10**9
TIE_TOL = 1e-12

REP_CSV_COLUMNS = (
    "rep_index",
    "R",
    "R0_expected",
    "Ra",
    "Na",
    "criterion_hit",
    "min_posterior",
    "R0",
)


def draw_budget() -> int:
    """Scalar-draw budget, overridable with the PFDR_BUDGET environment variable."""
    raw = os.environ.get("PFDR_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(float(raw))
    except ValueError:
        raise DomainError(f"PFDR_BUDGET must be a number, got {raw!r}") from None


@dataclass(frozen=True)
class SimConfig:
    """One simulation experiment.

    ``generating_frac`` is the fraction of false nulls used to *draw* the data;
    it defaults to ``params.frac_false`` and may be 0 (no false nulls exist)
    while the procedure keeps using ``params.frac_false`` as its prior.
    ``raw_observations`` draws all k observations per null instead of the
    sufficient statistic; both modes have the same distribution.
    """

    params: ModelParams
    family: NormalMean | GammaScale
    n_nulls: int
    n_reps: int = 1
    seed: int = 0
    procedure: Optional[ThresholdProcedure] = None
    generating_frac: Optional[float] = None
    raw_observations: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.family, (NormalMean, GammaScale)):
            raise DomainError(f"simulation needs a normal or gamma family, got {self.family!r}")
        if not float(self.params.k).is_integer():
            raise DomainError(f"simulation needs an integer k, got {self.params.k!r}")
        if int(self.n_nulls) < 1 or int(self.n_reps) < 1:
            raise DomainError("n_nulls and n_reps must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.generating_frac is not None and not 0.0 <= self.generating_frac < 1.0:
            raise DomainError(f"generating_frac must lie in [0, 1), got {self.generating_frac!r}")
        if int(self.threads) < 1:
            raise DomainError("threads must be >= 1")
        if self.procedure is None:
            object.__setattr__(self, "procedure", ThresholdProcedure.fixed(self.params.alpha))

    @property
    def k(self) -> int:
        return int(self.params.k)

    @property
    def true_frac(self) -> float:
        return self.params.frac_false if self.generating_frac is None else self.generating_frac

    @property
    def cutoff(self) -> float:
        return self.procedure.effective_cutoff(self.params.delta, self.params.k)

    @property
    def nominal_draws(self) -> int:
        return int(self.n_nulls) * self.k * int(self.n_reps)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "family": self.family.to_dict(),
            "n_nulls": int(self.n_nulls),
            "n_reps": int(self.n_reps),
            "seed": int(self.seed),
            "procedure": self.procedure.to_dict(),
            "generating_frac": self.true_frac,
            "raw_observations": self.raw_observations,
        }


@dataclass
class _RepResult:
    R: int
    R0_expected: float
    R0: int
    Ra: int
    Na: int
    criterion_hit: bool
    min_posterior: float


def _rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


def _draw_sums(cfg: SimConfig, rng: np.random.Generator, eta: np.ndarray):
    """Return (sum_x, log_lr) for each null, from sufficient statistics or raw draws."""
    p, fam, k, n = cfg.params, cfg.family, cfg.k, int(cfg.n_nulls)
    d = p.delta
    if isinstance(fam, NormalMean):
        if cfg.raw_observations:
            x = fam.theta0 + fam.sigma * rng.standard_normal((n, k)) + d * eta[:, None]
            s2 = fam.sigma**2
            per_obs = (d / s2) * (x - fam.theta0) - d * d / (2.0 * s2)
            return x.sum(axis=1), per_obs.sum(axis=1)
        sums = k * fam.theta0 + k * d * eta + fam.sigma * math.sqrt(k) * rng.standard_normal(n)
        return sums, normal_log_lr(sums, k, d, fam)
    scale = np.where(eta, 1.0 + d, 1.0)
    if cfg.raw_observations:
        x = rng.gamma(fam.nu, 1.0, size=(n, k)) * scale[:, None]
        per_obs = -fam.nu * math.log1p(d) + (d / (1.0 + d)) * x
        return x.sum(axis=1), per_obs.sum(axis=1)
    sums = rng.gamma(k * fam.nu, 1.0, size=n) * scale
    return sums, gamma_log_lr(sums, k, d, fam)


def _posterior(log_lr: np.ndarray, frac_false: float) -> np.ndarray:
    z = math.log(frac_false) - math.log1p(-frac_false) + log_lr
    return np.exp(-np.logaddexp(0.0, z))


def simulate_rep(cfg: SimConfig, rep: int, return_units: bool = False):
    """Run a single repetition.  With ``return_units`` also return per-null arrays."""
    rng = _rng(cfg.seed, rep)
    eta = rng.random(int(cfg.n_nulls)) < cfg.true_frac
    sums, log_lr = _draw_sums(cfg, rng, eta)
    a = cfg.params.frac_false
    cutoff = cfg.cutoff
    rejected = log_lr >= log_q_alpha(a, cutoff)
    post = _posterior(log_lr, a)
    res = _RepResult(
        R=int(rejected.sum()),
        R0_expected=float(post[rejected].sum()),
        R0=int((rejected & ~eta).sum()),
        Ra=int((rejected & eta).sum()),
        Na=int(eta.sum()),
        criterion_hit=bool(rejected.any()),
        min_posterior=float(post.min()),
    )
    if return_units:
        units = {"eta": eta, "sum_x": sums, "log_lr": log_lr, "posterior": post, "rejected": rejected}
        return res, units
    return res


def _binom_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else math.nan


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    m = len(values)
    if m == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return mean, se


@dataclass
class SimReport:
    """Per-repetition records plus pooled aggregates."""

    config: SimConfig
    R: np.ndarray
    R0_expected: np.ndarray
    R0: np.ndarray
    Ra: np.ndarray
    Na: np.ndarray
    criterion_hit: np.ndarray
    min_posterior: np.ndarray
    aggregates: dict = field(default_factory=dict)
    prng: str = PRNG_NAME

    @classmethod
    def from_reps(cls, cfg: SimConfig, reps: list[_RepResult]) -> "SimReport":
        rep = cls(
            config=cfg,
            R=np.array([r.R for r in reps], dtype=np.int64),
            R0_expected=np.array([r.R0_expected for r in reps], dtype=float),
            R0=np.array([r.R0 for r in reps], dtype=np.int64),
            Ra=np.array([r.Ra for r in reps], dtype=np.int64),
            Na=np.array([r.Na for r in reps], dtype=np.int64),
            criterion_hit=np.array([r.criterion_hit for r in reps], dtype=bool),
            min_posterior=np.array([r.min_posterior for r in reps], dtype=float),
        )
        rep.aggregates = rep._aggregate()
        return rep

    @property
    def n_total(self) -> int:
        return int(self.config.n_nulls) * int(self.config.n_reps)

    def _aggregate(self) -> dict:
        n = self.n_total
        n_reps = int(self.config.n_reps)
        rate = {}
        for name, counts in (("R", self.R), ("R0", self.R0), ("Ra", self.Ra), ("Na", self.Na)):
            p = int(counts.sum()) / n
            rate[name] = {"per_null": p, "se": _binom_se(p, n)}
        q = float(self.criterion_hit.mean())

        has_alt = self.Na > 0
        power, power_se = _mean_se(self.Ra[has_alt] / self.Na[has_alt])
        has_rej = self.R > 0
        pfdr, pfdr_se = _mean_se(self.R0_expected[has_rej] / self.R[has_rej])
        pfdr_t, pfdr_t_se = _mean_se(self.R0[has_rej] / self.R[has_rej])
        return {
            "n_total": n,
            "effective_cutoff": self.config.cutoff,
            "p_hat": rate["R"]["per_null"],
            "p_hat_se": rate["R"]["se"],
            "criterion_prob": q,
            "criterion_prob_se": _binom_se(q, n_reps),
            "rates": rate,
            "power_hat": power,
            "power_se": power_se,
            "power_reps": int(has_alt.sum()),
            "pfdr_hat": pfdr,
            "pfdr_se": pfdr_se,
            "pfdr_truth_hat": pfdr_t,
            "pfdr_truth_se": pfdr_t_se,
            "pfdr_reps": int(has_rej.sum()),
        }

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": "pfdrvol/simulate/1",
            "config": self.config.to_dict(),
            "prng": self.prng,
            "seed": int(self.config.seed),
            "aggregates": _json_safe(self.aggregates),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def rep_rows(self) -> list[dict]:
        return [
            {
                "rep_index": i,
                "R": int(self.R[i]),
                "R0_expected": float(self.R0_expected[i]),
                "R0": int(self.R0[i]),
                "Ra": int(self.Ra[i]),
                "Na": int(self.Na[i]),
                "criterion_hit": int(self.criterion_hit[i]),
                "min_posterior": float(self.min_posterior[i]),
            }
            for i in range(len(self.R))
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REP_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rep_rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


def _json_safe(obj):
    """Replace NaN with None so aggregates serialize as strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def simulate(cfg: SimConfig) -> SimReport:
    budget = draw_budget()
    if cfg.nominal_draws > budget:
        raise BudgetExceededError(
            f"n_nulls*k*n_reps = {cfg.nominal_draws} exceeds the draw budget {budget} (set PFDR_BUDGET to raise it)"
        )
    reps = range(int(cfg.n_reps))
    if cfg.threads > 1 and cfg.n_reps > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            results = list(pool.map(lambda r: simulate_rep(cfg, r), reps))
    else:
        results = [simulate_rep(cfg, r) for r in reps]
    return SimReport.from_reps(cfg, results)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def estimate_event_prob(cfg: SimConfig) -> tuple[float, float]:
    """Pooled frequency of the rejection event over all nulls, with binomial SE."""
    agg = simulate(cfg).aggregates
    return agg["p_hat"], agg["p_hat_se"]


def estimate_criterion_prob(cfg: SimConfig) -> tuple[float, float]:
    """Fraction of repetitions in which at least one of the n_nulls nulls is rejected."""
    agg = simulate(cfg).aggregates
    return agg["criterion_prob"], agg["criterion_prob_se"]


@dataclass(frozen=True)
class PowerPfdrEstimate:
    power_hat: float
    power_se: float
    pfdr_hat: float
    pfdr_se: float
    pfdr_truth_hat: float
    pfdr_truth_se: float
    reps_with_rejections: int


def estimate_power_pfdr(cfg: SimConfig) -> PowerPfdrEstimate:
    """Mean R_a/N_a and mean conditional pFDR over repetitions.

    The primary pFDR estimator averages sum(posterior of rejected)/R, the
    conditional expectation of R0/R given the data; the truth-label estimator
    averages R0/R and serves as a cross-check.
    """
    rep = simulate(cfg)
    agg = rep.aggregates
    if agg["pfdr_reps"] == 0:
        raise EstimationError("no repetition produced a rejection; pFDR is undefined")
    if agg["pfdr_reps"] < 0.5 * int(cfg.n_reps):
        logger.warning("only %d of %d repetitions had R > 0", agg["pfdr_reps"], cfg.n_reps)
    return PowerPfdrEstimate(
        power_hat=agg["power_hat"],
        power_se=agg["power_se"],
        pfdr_hat=agg["pfdr_hat"],
        pfdr_se=agg["pfdr_se"],
        pfdr_truth_hat=agg["pfdr_truth_hat"],
        pfdr_truth_se=agg["pfdr_truth_se"],
        reps_with_rejections=agg["pfdr_reps"],
    )
