"""Acceptance criteria, each run at its stated tolerance.

Every test records a single PASS/FAIL line (printed at the end of the pytest
run) before asserting, so a failing criterion still reports what it measured.
"""

import csv
import io
import itertools
import json
import math
import warnings

import numpy as np
import pytest
from scipy.stats import binom

from pfdrvol.asymptotics import adjudicate_gamma, convergence_table, extrapolate_limit
from pfdrvol.cli import main
from pfdrvol.errors import RegimeWarning
from pfdrvol.exact import exact_tails, min_nulls_exact
from pfdrvol.model import GammaScale, ModelParams, NormalMean, RegimeSpec, log_q_alpha, posterior_null_prob
from pfdrvol.power import (
    ThresholdProcedure,
    adjudicate_ratio_limit,
    power_identity_check,
    power_pfdr_threshold,
    power_ratio_limit,
    shifted_cutoff_for_gain,
)
from pfdrvol.sim import SimConfig, estimate_criterion_prob, simulate
from pfdrvol.special_fn import gamma_upper_log, log_add, norm_sf_log

RESULTS: dict[int, str] = {}

A, ALPHA, DETECT = 0.05, 0.4, 0.9
SEED = 20_231_017
GRID = list(
    itertools.product(
        ("normal", "gamma"), (0.1, 0.2, 0.4), (4, 16, 64), (0.05, 0.2), (0.1, 0.4)
    )
)


def _family(name):
    return NormalMean() if name == "normal" else GammaScale(1.0)


def record(num: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2}: {title} | {detail}"
    RESULTS[num] = line
    print(line)


@pytest.mark.slow
def test_01_oracle_agreement():
    n = 10**6
    failures = []
    for idx, (fam, d, k, a, al) in enumerate(GRID):
        params = ModelParams(a, al, detect_prob=DETECT, delta=d, k=k)
        p_exact = math.exp(exact_tails(params, _family(fam)).p_mix)
        cfg = SimConfig(params, _family(fam), n_nulls=n, n_reps=1, seed=SEED + idx)
        hits = int(simulate(cfg).R.sum())
        lo, hi = binom.ppf(0.0005, n, p_exact), binom.ppf(0.9995, n, p_exact)
        if not lo <= hits <= hi:
            failures.append((fam, d, k, a, al, hits, p_exact))
    frac = 1 - len(failures) / len(GRID)
    passed = frac >= 0.99
    record(1, "exact vs Monte Carlo on the 72-cell grid", passed, f"{len(GRID) - len(failures)}/{len(GRID)} cells inside 99.9% CI; misses={failures}")
    assert passed


@pytest.mark.slow
def test_02_criterion_equivalence():
    cells = []
    for fam, d, k, a, al in GRID:
        params = ModelParams(a, al, detect_prob=DETECT, delta=d, k=k)
        n_star = min_nulls_exact(exact_tails(params, _family(fam)).p_mix, DETECT)
        if n_star >= 2:
            cells.append((n_star, fam, params))
    cells.sort(key=lambda c: (c[0], c[1], c[2].delta, c[2].k, c[2].frac_false, c[2].alpha))
    reps = 4000
    bad = []
    for i, (n_star, fam, params) in enumerate(cells[:10]):
        q_n, se_n = estimate_criterion_prob(SimConfig(params, _family(fam), n_nulls=n_star, n_reps=reps, seed=SEED + 100 + i))
        q_m, se_m = estimate_criterion_prob(SimConfig(params, _family(fam), n_nulls=n_star - 1, n_reps=reps, seed=SEED + 200 + i))
        if not (q_n >= DETECT - 3 * se_n and q_m < DETECT + 3 * se_m):
            bad.append((fam, params.to_dict(), n_star, q_n, q_m))
    passed = not bad
    sizes = [c[0] for c in cells[:10]]
    record(2, "N* and N*-1 bracket the detection probability", passed, f"10 cells, N* in {sizes}, {reps} reps each; violations={bad}")
    assert passed


def test_03_posterior_threshold_identity():
    rng = np.random.default_rng(SEED)
    pairs = rng.uniform(1e-4, 1 - 1e-4, size=(100, 2))
    worst = max(abs(posterior_null_prob(log_q_alpha(a, al), a) / al - 1) for a, al in pairs)
    passed = worst <= 1e-12
    record(3, "posterior at ln Q_alpha equals alpha", passed, f"max relative error {worst:.3g} over 100 pairs")
    assert passed


def test_04_normal_leading_term_convergence():
    rows = convergence_table(ModelParams(A, ALPHA, delta=0.2), NormalMean(), [0.2, 0.1, 0.05, 0.02], RegimeSpec("sqrt_log"))
    mags = [abs(r["log_ratio"]) for r in rows]
    passed = all(x > y for x, y in zip(mags, mags[1:])) and mags[-1] < 0.1
    record(4, "normal leading term converges", passed, "|log ratio| = " + ", ".join(f"{m:.4f}" for m in mags))
    assert passed


def test_05_gamma_leading_term_convergence(tmp_path):
    deltas = [0.2, 0.1, 0.05, 0.02]
    regime = RegimeSpec("power_t", 1.5)
    conv_ok = True
    parts = []
    for nu in (0.5, 1.0, 3.0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            rows = convergence_table(ModelParams(A, ALPHA, delta=0.2), GammaScale(nu), deltas, regime)
        disp = [abs(r["log_ratio"]) for r in rows]
        logq = [abs(r["log_ratio_logq"]) for r in rows]
        ok = all(x > y for x, y in zip(disp, disp[1:])) and disp[-1] < 0.1
        conv_ok &= ok
        parts.append(
            f"nu={nu}: sqrt(ln Q) prefactor {', '.join(f'{m:.3f}' for m in disp)}; ln Q prefactor {', '.join(f'{m:.3f}' for m in logq)}"
        )

    # adjudication through the converge command, on the stated grid and on a grid reaching 1e-4
    verdicts = {}
    for label, grid in (("stated", "0.2,0.1,0.05,0.02"), ("extended", "1e-1,1e-2,1e-3,1e-4")):
        per_nu = []
        for nu in ("0.5", "1", "3"):
            out = tmp_path / f"conv_{label}_{nu}.json"
            argv = ["converge", "--family", "gamma", "--nu", nu, "--a", str(A), "--alpha", str(ALPHA),
                    "--schedule", "power-t", "--t", "1.5", "--deltas", grid, "--format", "json", "--out", str(out)]
            assert main(argv) == 0
            per_nu.append(json.loads(out.read_text())["adjudication"]["verdict"])
        verdicts[label] = per_nu
    adjudicated = len(set(verdicts["extended"])) == 1 and verdicts["extended"][0] not in ("none", "ambiguous")
    passed = conv_ok and adjudicated
    record(
        5,
        "gamma leading term converges; prefactor adjudicated",
        passed,
        "; ".join(parts) + f"; verdicts stated-grid={verdicts['stated']} extended-grid={verdicts['extended']}",
    )
    assert passed


def test_06_threshold_pfdr_and_power_limits():
    reg = RegimeSpec("sqrt_log")
    deltas = [0.2, 0.1, 0.05, 0.02]
    pfdrs, ratios = [], []
    for d in deltas:
        params = ModelParams(A, ALPHA, delta=d, k=reg.k(d))
        pfdrs.append(power_pfdr_threshold(ThresholdProcedure.fixed(ALPHA), params, NormalMean()).pfdr_inf)
        ratios.append(power_identity_check(params, NormalMean()))
    bound_ok = all(p <= ALPHA for p in pfdrs)
    end_ok = abs(pfdrs[-1] - ALPHA) < 0.05 * ALPHA
    ratio_ok = 0.9 <= ratios[-1] <= 1.1
    passed = bound_ok and end_ok and ratio_ok
    record(
        6,
        "pFDR of d* tends to alpha, power identity",
        passed,
        f"pFDR={', '.join(f'{p:.4f}' for p in pfdrs)} (<=alpha: {bound_ok}); "
        f"|pFDR-alpha| at 0.02 = {abs(pfdrs[-1] - ALPHA):.4f} vs {0.05 * ALPHA:.4f} ({end_ok}); "
        f"identity ratio {', '.join(f'{r:.4f}' for r in ratios)} ({ratio_ok})",
    )
    assert passed


def test_07_shifted_cutoff_gain():
    base = ModelParams(A, ALPHA, delta=0.1)
    c = shifted_cutoff_for_gain(base, 1.0, 10.0)
    ratio_fn, candidates = power_ratio_limit(base, c, NormalMean())
    proc = ThresholdProcedure.shifted(ALPHA, c)
    deltas = [0.1, 0.05, 0.02, 0.01]
    ratios, pfdrs, cutoffs = [], [], []
    for d in deltas:
        k = d**-1.5
        ratios.append(ratio_fn(d, k))
        rep = power_pfdr_threshold(proc, ModelParams(A, ALPHA, delta=d, k=k), NormalMean())
        pfdrs.append(rep.pfdr_inf)
        cutoffs.append(rep.effective_cutoff)
    verdict = adjudicate_ratio_limit(deltas, ratios, candidates)
    limit = verdict["extrapolated_limit"]
    steps = np.diff(ratios)
    # increasing with shrinking increments and a finite extrapolated limit
    converging = bool(np.all(steps > 0) and steps[-1] < steps[0] and math.isfinite(limit))
    pfdr_under = all(p <= cut for p, cut in zip(pfdrs, cutoffs))
    pfdr_limit = extrapolate_limit(deltas, pfdrs)
    limsup_ok = max(pfdrs[-1], pfdr_limit) <= ALPHA + 0.01
    passed = converging and limit > 1 and pfdr_under and limsup_ok
    record(
        7,
        "shifted procedure power gain",
        passed,
        f"c={c:.6f}; ratios={', '.join(f'{r:.4f}' for r in ratios)}; limit~{limit:.4f} matches "
        f"'{verdict['closest']}' ({candidates[verdict['closest']]:.4f}); other candidates "
        + ", ".join(f"{k}={v:.4g}" for k, v in candidates.items() if k != verdict["closest"])
        + f"; pFDR={', '.join(f'{p:.4f}' for p in pfdrs)} (<= cutoff: {pfdr_under}), extrapolated {pfdr_limit:.4f} (<= alpha+0.01: {limsup_ok})",
    )
    assert passed


def _figure(tmp_path, panel):
    out = tmp_path / f"fig_{panel}.csv"
    argv = ["figure", "--panel", panel, "--a", "0.05", "--alpha", "0.4", "--p", "0.9",
            "--deltas", "0.1,0.2,0.4", "--t-min", "1", "--t-max", "2", "--t-steps", "101", "--out", str(out)]
    assert main(argv) == 0
    curves = {}
    for row in csv.DictReader(io.StringIO(out.read_text())):
        curves.setdefault(float(row["delta"]), []).append((float(row["t"]), float(row["value"])))
    return curves


def test_08_figure_regeneration(tmp_path):
    a = _figure(tmp_path, "A")
    a_ok = True
    for rows in a.values():
        vals = [v for _, v in rows]
        a_ok &= rows[-1][0] == 2.0 and vals[-1] == 0.0
        a_ok &= all(v > 0 for v in vals[:-1]) and all(x > y for x, y in zip(vals, vals[1:]))

    b = _figure(tmp_path, "B")
    ts = [t for t, _ in b[0.1]]
    finite = all(math.isfinite(v) for rows in b.values() for _, v in rows)
    violations = []
    for i, t in enumerate(ts):
        # power must fall strictly as delta decreases: 0.4 -> 0.2 -> 0.1
        v4, v2, v1 = b[0.4][i][1], b[0.2][i][1], b[0.1][i][1]
        if not (v4 > v2 > v1):
            violations.append(t)
    b_ok = finite and not violations
    passed = a_ok and b_ok
    record(
        8,
        "figure curves",
        passed,
        f"panel A zero at t=2, positive and increasing toward t=1: {a_ok}; panel B finite: {finite}, "
        f"non-strict points at t={violations} (k delta^2 = 1 there, so the curves coincide)",
    )
    assert passed


def test_09_numerical_hygiene():
    import mpmath as mp

    worst_n_inner = worst_n_outer = worst_g = 0.0
    with mp.workdps(40):
        for t in np.concatenate([np.linspace(-8, 8, 161), [9, 12, 20, 38, 40, 100, 1e3, 1e4]]):
            want = float(mp.log(mp.erfc(mp.mpf(float(t)) / mp.sqrt(2)) / 2))
            err = abs(math.expm1(norm_sf_log(float(t)) - want))
            if abs(t) <= 8:
                worst_n_inner = max(worst_n_inner, err)
            else:
                worst_n_outer = max(worst_n_outer, err)
        for shape in (0.5, 1.0, 10.0, 1e3, 1e5, 1e6):
            for z in (-50, -10, -1, 0, 1, 10, 50):
                x = shape + z * math.sqrt(shape)
                if x < 0:
                    continue
                want = float(mp.log(mp.gammainc(mp.mpf(shape), mp.mpf(x), mp.inf, regularized=True)))
                worst_g = max(worst_g, abs(math.expm1(gamma_upper_log(shape, x) - want)))
    symmetry = max(abs(log_add(norm_sf_log(t), norm_sf_log(-t))) for t in np.linspace(0, 40, 401))
    zero_ok = all(gamma_upper_log(s, 0.0) == 0.0 for s in (1e-3, 0.5, 7.0, 1e6))
    mono_ok = all(
        np.all(np.diff([gamma_upper_log(s, x) for x in np.linspace(0, s + 60 * math.sqrt(s), 400)]) <= 0)
        for s in (0.5, 10.0, 1e6)
    )
    finite = math.isfinite(norm_sf_log(1e4)) and math.isfinite(gamma_upper_log(1e6, 1e6 + 50e3))
    passed = worst_n_inner < 1e-12 and worst_n_outer < 1e-8 and worst_g < 1e-10 and symmetry < 1e-12 and zero_ok and mono_ok and finite
    record(
        9,
        "special-function tolerance suites",
        passed,
        f"normal |t|<=8 {worst_n_inner:.2g} (<1e-12), t>8 {worst_n_outer:.2g} (<1e-8); gamma {worst_g:.2g} (<1e-10); "
        f"symmetry {symmetry:.2g}; Q(s,0)=1 {zero_ok}; monotone {mono_ok}; extremes finite {finite}",
    )
    assert passed


def test_10_determinism(tmp_path):
    base = ["simulate", "--family", "gamma", "--nu", "1.5", "--a", "0.2", "--alpha", "0.4", "--delta", "0.2",
            "--k", "16", "--n-nulls", "20000", "--n-reps", "16", "--seed", "99"]
    blobs = {}
    for threads in (1, 1, 2, 4, 7):
        out = tmp_path / f"t{threads}_{len(blobs)}.json"
        assert main(base + ["--threads", str(threads), "--out", str(out)]) == 0
        blobs[out.name] = out.read_bytes()
    passed = len(set(blobs.values())) == 1
    record(10, "simulate output independent of repetition and threads", passed, f"{len(blobs)} runs, distinct outputs={len(set(blobs.values()))}")
    assert passed
