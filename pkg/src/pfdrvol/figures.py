"""Figure data along the power-law schedule k = delta**(-t).

Panel A is log10(V_t / V_2), the leading-term volume at exponent t relative to
t = 2.  Panel B is log10 of a power proxy built from the leading-term event
probability.  Only data is produced; plotting is left to external tools.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .asymptotics import asym_p_normal, asym_v_normal
from .errors import DomainError, RegimeWarning
from .model import ModelParams, NormalMean

__all__ = ["FigureRow", "PANEL_B_VARIANTS", "t_grid", "panel_a", "panel_b", "figure_rows", "rows_to_csv"]

PANEL_B_VARIANTS = ("alpha_scaled", "limit_power")
FIGURE_CSV_COLUMNS = ("t", "delta", "value")
LOG10_E = 1.0 / math.log(10.0)


@dataclass(frozen=True)
class FigureRow:
    t: float
    delta: float
    value: float


def t_grid(t_min: float = 1.0, t_max: float = 2.0, t_steps: int = 101) -> np.ndarray:
    if t_steps < 1:
        raise DomainError(f"t_steps must be >= 1, got {t_steps}")
    if not 0.0 < t_min <= t_max <= 2.0:
        raise DomainError(f"need 0 < t_min <= t_max <= 2, got [{t_min}, {t_max}]")
    if t_steps == 1:
        return np.array([t_max])
    return np.linspace(t_min, t_max, t_steps)


def _at(params: ModelParams, delta: float, t: float) -> ModelParams:
    return replace(params, delta=float(delta), k=float(delta) ** (-float(t)))


def panel_a(params: ModelParams, deltas: Sequence[float], ts: Sequence[float], family=None) -> list[FigureRow]:
    """log10(V_t / V_2) with V_t the normal-family leading term at k = delta**(-t)."""
    family = family or NormalMean()
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for d in deltas:
            ref = asym_v_normal(_at(params, d, 2.0), family).log_v_star
            for t in ts:
                log_v = asym_v_normal(_at(params, d, t), family).log_v_star
                rows.append(FigureRow(float(t), float(d), (log_v - ref) * LOG10_E))
    return rows


def panel_b(
    params: ModelParams, deltas: Sequence[float], ts: Sequence[float], variant: str = "alpha_scaled", family=None
) -> list[FigureRow]:
    """log10 of a power proxy at k = delta**(-t).

    ``variant="alpha_scaled"`` scales the leading-term event probability by
    (1 - alpha)/alpha; ``variant="limit_power"`` uses (1 - alpha) p / a, the
    limiting power of the alpha-threshold procedure.
    """
    if variant not in PANEL_B_VARIANTS:
        raise DomainError(f"variant must be one of {PANEL_B_VARIANTS}, got {variant!r}")
    family = family or NormalMean()
    denom = params.alpha if variant == "alpha_scaled" else params.frac_false
    log_scale = math.log1p(-params.alpha) - math.log(denom)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for d in deltas:
            for t in ts:
                lp = float(asym_p_normal(_at(params, d, t), family))
                rows.append(FigureRow(float(t), float(d), (log_scale + lp) * LOG10_E))
    return rows


def figure_rows(
    panel: str,
    params: ModelParams,
    deltas: Sequence[float],
    t_min: float = 1.0,
    t_max: float = 2.0,
    t_steps: int = 101,
    variant: str = "alpha_scaled",
) -> list[FigureRow]:
    """Rows ordered delta-major (in the given delta order), t-minor (ascending)."""
    if not deltas:
        raise DomainError("delta list is empty")
    ts = t_grid(t_min, t_max, t_steps)
    if panel.upper() == "A":
        return panel_a(params, deltas, ts)
    if panel.upper() == "B":
        return panel_b(params, deltas, ts, variant)
    raise DomainError(f"panel must be A or B, got {panel!r}")


def rows_to_csv(rows: Sequence[FigureRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIGURE_CSV_COLUMNS)
    for r in rows:
        writer.writerow([repr(r.t), repr(r.delta), repr(r.value)])
    return buf.getvalue()
