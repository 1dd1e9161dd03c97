"""Minimum data volume, power and pFDR for multiple testing with small effects."""

from .errors import (
    BudgetExceededError,
    ConvergenceError,
    DomainError,
    EstimationError,
    PfdrVolError,
    QAlphaError,
    RegimeWarning,
)
from .model import (
    GammaScale,
    Generic,
    GenericMultivariate,
    ModelParams,
    NormalMean,
    RegimeSpec,
    log_q_alpha,
    posterior_null_prob,
    q_alpha,
)
from .special_fn import LogProb, gamma_upper_log, norm_sf_log, phi, psi
from .exact import TailSplit, VolumeResult, exact_p_gamma, exact_p_normal, exact_tails, min_nulls_exact, min_volume_exact
from .asymptotics import (
    adjudicate_gamma,
    asym_p_gamma,
    asym_p_multivariate,
    asym_p_normal,
    asym_p_univariate,
    asym_v_generic,
    asym_v_normal,
    convergence_table,
)
from .power import (
    ThresholdProcedure,
    power_identity_check,
    power_pfdr_threshold,
    power_ratio_limit,
    power_upper_bound,
    shifted_cutoff_for_gain,
)
from .sim import SimConfig, SimReport, estimate_criterion_prob, estimate_event_prob, estimate_power_pfdr, simulate

__version__ = "0.1.0"
