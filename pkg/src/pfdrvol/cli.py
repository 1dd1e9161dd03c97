"""Command-line front end.

Every subcommand is a pure function of its flags (and seed): rerunning it
reproduces its output files byte for byte.  When ``--out`` is given a run
manifest is written next to the output as ``<out>.manifest.json``.

Exit codes: 0 ok, 2 usage or domain error, 3 simulation budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import metadata, resources
from pathlib import Path
from typing import Optional, Sequence

from .asymptotics import (
    adjudicate_gamma,
    asym_p_gamma,
    asym_p_normal,
    asym_p_univariate,
    asym_v_generic,
    asym_v_normal,
    convergence_table,
)
from .errors import BudgetExceededError, DomainError, EstimationError, PfdrVolError, RegimeWarning
from .exact import exact_tails, min_volume_exact
from .figures import PANEL_B_VARIANTS, panel_a, panel_b, rows_to_csv, t_grid
from .model import GammaScale, Generic, ModelParams, NormalMean, RegimeSpec
from .power import (
    ThresholdProcedure,
    adjudicate_ratio_limit,
    power_identity_check,
    power_pfdr_threshold,
    power_ratio_limit,
    power_upper_bound,
    shifted_cutoff_for_gain,
)
from .sim import SimConfig, simulate

logger = logging.getLogger("pfdrvol")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_BUDGET = 0, 2, 3

CONVERGE_COLUMNS = ("delta", "k", "p_exact_log", "p_asym_log", "log_ratio")
CONVERGE_GAMMA_EXTRA = ("nu", "p_asym_logq_log", "log_ratio_logq", "p_fisher_log", "log_ratio_fisher")

# Field names used in model error messages mapped to the flags that set them.
_FLAG_NAMES = {
    "frac_false": "--a",
    "alpha": "--alpha",
    "detect_prob": "--p",
    "delta": "--delta",
    "k": "--k",
    "sigma": "--sigma",
    "theta0": "--theta0",
    "nu": "--nu",
    "fisher_info": "--fisher",
}


def load_schema(name: str) -> dict:
    """Versioned JSON schema shipped with the package for a command's output."""
    return json.loads(resources.files("pfdrvol").joinpath("schemas", f"{name}.json").read_text())


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class UsageError(PfdrVolError):
    """A flag combination that argparse itself cannot reject."""


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    return vals


def _add_model_flags(p: argparse.ArgumentParser, delta_required: bool = True, families=("normal", "gamma", "generic")):
    p.add_argument("--family", choices=families, default="normal")
    p.add_argument("--a", type=float, required=True, help="fraction of false nulls")
    p.add_argument("--alpha", type=float, required=True, help="posterior cutoff / pFDR level")
    p.add_argument("--p", type=float, default=0.9, help="detection probability for N* and V*")
    if delta_required:
        p.add_argument("--delta", type=float, required=True, help="effect size")
    kgroup = p.add_mutually_exclusive_group()
    kgroup.add_argument("--k", type=float, help="observations per null")
    kgroup.add_argument("--schedule", choices=("sqrt-log", "log-log", "power-t"), help="derive k from delta")
    p.add_argument("--t", type=float, help="exponent for --schedule power-t")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--fisher", type=float, help="Fisher information I(theta0) for --family generic")


def _add_output_flags(p: argparse.ArgumentParser, default_format: str = "json"):
    p.add_argument("--out", type=Path, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=default_format)


def _add_procedure_flags(p: argparse.ArgumentParser):
    p.add_argument("--procedure", choices=("fixed", "shifted"), default="fixed")
    p.add_argument("--cutoff-c", "--c", dest="cutoff_c", type=float, help="shift constant c")
    p.add_argument("--gain-M", dest="gain_M", type=float, help="target power gain M (derives c)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfdrvol", description="Data volume, power and pFDR under small effects.")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact tails, N* and V* (normal or gamma)")
    _add_model_flags(p, families=("normal", "gamma"))
    _add_output_flags(p)

    p = sub.add_parser("asym", help="leading-term event probability and volume")
    _add_model_flags(p)
    p.add_argument("--prefactor", choices=("sqrt_log_q", "log_q"), default="sqrt_log_q", help="gamma prefactor form")
    _add_output_flags(p)

    p = sub.add_parser("volume", help="N* and V*, exact where available plus leading term")
    _add_model_flags(p)
    _add_output_flags(p)

    p = sub.add_parser("power", help="limiting power and pFDR of a threshold procedure")
    _add_model_flags(p, families=("normal", "gamma"))
    _add_procedure_flags(p)
    p.add_argument("--alpha2", type=float, help="also report the power upper bound p_mix(alpha2)/a")
    _add_output_flags(p)

    p = sub.add_parser("ratio", help="power gain of the shifted procedure along a delta grid")
    _add_model_flags(p, delta_required=False, families=("normal",))
    p.add_argument("--deltas", type=_float_list, default=[0.1, 0.05, 0.02, 0.01])
    _add_procedure_flags(p)
    _add_output_flags(p)

    p = sub.add_parser("simulate", help="Monte Carlo run of the random-effects model")
    _add_model_flags(p, families=("normal", "gamma"))
    _add_procedure_flags(p)
    p.add_argument("--n-nulls", dest="n_nulls", type=int, required=True)
    p.add_argument("--n-reps", dest="n_reps", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--raw", action="store_true", help="draw raw observations instead of sufficient statistics")
    p.add_argument("--reps-csv", dest="reps_csv", type=Path, help="write per-rep rows to this CSV")
    _add_output_flags(p)

    p = sub.add_parser("converge", help="exact versus leading-term log ratios along a delta grid")
    _add_model_flags(p, delta_required=False, families=("normal", "gamma"))
    p.add_argument("--deltas", type=_float_list, default=[0.2, 0.1, 0.05, 0.02])
    _add_output_flags(p, default_format="csv")

    p = sub.add_parser("figure", help="figure data along k = delta**-t")
    p.add_argument("--panel", choices=("A", "B"), required=True)
    p.add_argument("--a", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--deltas", type=_float_list, default=[0.1, 0.2, 0.4])
    p.add_argument("--t-min", dest="t_min", type=float, default=1.0)
    p.add_argument("--t-max", dest="t_max", type=float, default=2.0)
    p.add_argument("--t-steps", dest="t_steps", type=int, default=101)
    p.add_argument("--variant", choices=PANEL_B_VARIANTS, default="alpha_scaled", help="panel B scaling")
    _add_output_flags(p, default_format="csv")
    return parser


# ---------------------------------------------------------------------------
# Flag -> model objects
# ---------------------------------------------------------------------------


def _flagged(err: DomainError) -> DomainError:
    msg = str(err)
    for name, flag in _FLAG_NAMES.items():
        if msg.startswith(name + " "):
            return DomainError(f"{flag}: {msg}")
    return err


def _family(args):
    try:
        if args.family == "normal":
            return NormalMean(theta0=args.theta0, sigma=args.sigma)
        if args.family == "gamma":
            return GammaScale(nu=args.nu)
        if args.fisher is None:
            raise UsageError("--fisher is required for --family generic")
        return Generic(fisher_info=args.fisher)
    except DomainError as e:
        raise _flagged(e) from None


def _regime(args) -> Optional[RegimeSpec]:
    if getattr(args, "schedule", None) is None:
        return None
    try:
        return RegimeSpec(args.schedule, args.t)
    except DomainError as e:
        raise DomainError(f"--schedule/--t: {e}") from None


def _params(args, delta: Optional[float] = None, k: Optional[float] = None) -> ModelParams:
    delta = args.delta if delta is None else delta
    if k is None:
        regime = _regime(args)
        if regime is not None:
            k = regime.k(delta)
        else:
            k = 1.0 if args.k is None else args.k
    if float(k).is_integer():
        k = int(k)
    try:
        return ModelParams(frac_false=args.a, alpha=args.alpha, detect_prob=args.p, delta=delta, k=k)
    except DomainError as e:
        raise _flagged(e) from None


def _procedure(args, params: ModelParams) -> ThresholdProcedure:
    if args.procedure == "fixed":
        if args.cutoff_c is not None or args.gain_M is not None:
            raise UsageError("--cutoff-c/--gain-M need --procedure shifted")
        return ThresholdProcedure.fixed(params.alpha)
    return ThresholdProcedure.shifted(params.alpha, _shift_c(args, params))


def _shift_c(args, params: ModelParams) -> float:
    if (args.cutoff_c is None) == (args.gain_M is None):
        raise UsageError("a shifted procedure needs exactly one of --cutoff-c and --gain-M")
    if args.cutoff_c is not None:
        return args.cutoff_c
    info = 1.0 / args.sigma**2 if args.family == "normal" else args.nu
    return shifted_cutoff_for_gain(params, info, args.gain_M)


def _resolved(args) -> dict:
    out = {}
    for key, val in sorted(vars(args).items()):
        if key in ("func",):
            continue
        out[key] = str(val) if isinstance(val, Path) else val
    return out


# ---------------------------------------------------------------------------
# Commands: each returns (text, extra_files) where extra_files maps path -> text
# ---------------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _envelope(command: str, args, body: dict) -> dict:
    return {"schema": f"pfdrvol/{command}/{SCHEMA_VERSION}", "command": command, "inputs": _resolved(args), **body}


def _json_only(args):
    if args.format != "json":
        raise UsageError(f"{args.command} supports only --format json")


def cmd_exact(args):
    _json_only(args)
    params = _params(args)
    family = _family(args)
    vol = min_volume_exact(params, family)
    body = {"params": params, "family": family, "tails": exact_tails(params, family), "volume": vol}
    return _dump(_envelope("exact", args, body)), {}


def _asym_p(args, params, family):
    if isinstance(family, NormalMean):
        return asym_p_normal(params, family)
    if isinstance(family, GammaScale):
        return asym_p_gamma(params, family, getattr(args, "prefactor", "sqrt_log_q"))
    return asym_p_univariate(params, family.fisher_info)


def _asym_volume(args, params, family):
    if isinstance(family, NormalMean):
        return asym_v_normal(params, family)
    prov = "asymptotic_gamma" if isinstance(family, GammaScale) else "asymptotic_univariate"
    return asym_v_generic(_asym_p(args, params, family), params, prov)


def cmd_asym(args):
    _json_only(args)
    params = _params(args)
    family = _family(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegimeWarning)
        vol = _asym_volume(args, params, family)
    body = {
        "params": params,
        "family": family,
        "volume": vol,
        "regime_warnings": sorted({str(w.message) for w in caught}),
    }
    return _dump(_envelope("asym", args, body)), {}


def cmd_volume(args):
    _json_only(args)
    params = _params(args)
    family = _family(args)
    body = {"params": params, "family": family}
    if isinstance(family, (NormalMean, GammaScale)):
        body["exact"] = min_volume_exact(params, family)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            body["asymptotic"] = _asym_volume(args, params, family)
        body["regime_warnings"] = sorted({str(w.message) for w in caught})
    except DomainError as e:
        if "exact" not in body:
            raise
        body["asymptotic"] = None
        body["asymptotic_error"] = str(e)
    return _dump(_envelope("volume", args, body)), {}


def cmd_power(args):
    _json_only(args)
    params = _params(args)
    family = _family(args)
    proc = _procedure(args, params)
    report = power_pfdr_threshold(proc, params, family)
    body = {
        "params": params,
        "family": family,
        "procedure": proc,
        "power": report,
        "identity_ratio": power_identity_check(params, family),
    }
    if args.alpha2 is not None:
        try:
            log_bound = power_upper_bound(params, family, args.alpha2)
        except DomainError as e:
            raise DomainError(f"--alpha2: {e}") from None
        body["power_upper_bound"] = {"value": math.exp(log_bound), "log": log_bound}
    return _dump(_envelope("power", args, body)), {}


def cmd_ratio(args):
    _json_only(args)
    if not args.deltas:
        raise UsageError("--deltas is empty")
    regime = _regime(args) or RegimeSpec("power_t", 1.5)
    base = _params(args, delta=args.deltas[0], k=1)
    family = _family(args)
    c = _shift_c(args, base)
    ratio_fn, candidates = power_ratio_limit(base, c, family)
    proc = ThresholdProcedure.shifted(base.alpha, c)
    rows = []
    for d in args.deltas:
        k = regime.k_real(d)
        p = replace(base, delta=float(d), k=k)
        rep = power_pfdr_threshold(proc, p, family)
        rows.append(
            {
                "delta": float(d),
                "k": k,
                "power_ratio": ratio_fn(d, k),
                "effective_cutoff": rep.effective_cutoff,
                "pfdr_inf": rep.pfdr_inf,
            }
        )
    verdict = adjudicate_ratio_limit([r["delta"] for r in rows], [r["power_ratio"] for r in rows], candidates)
    body = {"c": c, "regime": regime, "rows": rows, "candidates": candidates, "adjudication": verdict}
    return _dump(_envelope("ratio", args, body)), {}


def cmd_simulate(args):
    if args.seed is None:
        logger.warning("no --seed given; using seed 0")
        args.seed = 0
    params = _params(args)
    family = _family(args)
    proc = _procedure(args, params)
    cfg = SimConfig(
        params=params,
        family=family,
        n_nulls=args.n_nulls,
        n_reps=args.n_reps,
        seed=args.seed,
        procedure=proc,
        raw_observations=args.raw,
        threads=args.threads,
    )
    report = simulate(cfg)
    extra = {}
    if args.reps_csv is not None:
        extra[args.reps_csv] = report.to_csv()
    text = report.to_csv() if args.format == "csv" else report.to_json()
    return text, extra


def converge_csv(rows: Sequence[dict], gamma: bool) -> str:
    cols = CONVERGE_COLUMNS + (CONVERGE_GAMMA_EXTRA if gamma else ())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def cmd_converge(args):
    if not args.deltas:
        raise UsageError("--deltas is empty")
    regime = _regime(args)
    if regime is None:
        regime = RegimeSpec("sqrt_log") if args.family == "normal" else RegimeSpec("power_t", 1.5)
    params = _params(args, delta=args.deltas[0], k=1)
    family = _family(args)
    rows = convergence_table(params, family, args.deltas, regime)
    gamma = isinstance(family, GammaScale)
    if args.format == "csv":
        return converge_csv(rows, gamma), {}
    body = {"regime": regime, "family": family, "rows": rows}
    if gamma and len(rows) >= 3:
        body["adjudication"] = adjudicate_gamma(rows)
    return _dump(_envelope("converge", args, body)), {}


def cmd_figure(args):
    if args.format != "csv":
        raise UsageError("figure supports only --format csv")
    try:
        params = ModelParams(frac_false=args.a, alpha=args.alpha, detect_prob=args.p)
        family = NormalMean(sigma=args.sigma)
    except DomainError as e:
        raise _flagged(e) from None
    if not args.deltas:
        raise UsageError("--deltas is empty")
    ts = t_grid(args.t_min, args.t_max, args.t_steps)
    if args.panel == "A":
        rows = panel_a(params, args.deltas, ts, family)
    else:
        rows = panel_b(params, args.deltas, ts, args.variant, family)
    return rows_to_csv(rows), {}


COMMANDS = {
    "exact": cmd_exact,
    "asym": cmd_asym,
    "volume": cmd_volume,
    "power": cmd_power,
    "ratio": cmd_ratio,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "figure": cmd_figure,
}


# ---------------------------------------------------------------------------
# Manifest and entry point
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    parameters: dict
    tool_version: str
    seeds: list[int]
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": f"pfdrvol/manifest/{SCHEMA_VERSION}",
            "command": self.command,
            "argv": self.argv,
            "parameters": self.parameters,
            "tool_version": self.tool_version,
            "seeds": self.seeds,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    started = _now()
    try:
        text, extra = COMMANDS[args.command](args)
    except BudgetExceededError as e:
        print(f"pfdrvol {args.command}: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (DomainError, UsageError, EstimationError, ValueError) as e:
        print(f"pfdrvol {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    outputs = []
    for path, content in extra.items():
        Path(path).write_text(content)
        outputs.append(str(path))
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
        outputs.insert(0, str(args.out))
        manifest = RunManifest(
            command=args.command,
            argv=argv,
            parameters=_resolved(args),
            tool_version=tool_version(),
            seeds=[args.seed] if getattr(args, "seed", None) is not None else [],
            started=started,
            finished=_now(),
            outputs=outputs,
        )
        Path(str(args.out) + ".manifest.json").write_text(_dump(manifest.to_dict()))
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
