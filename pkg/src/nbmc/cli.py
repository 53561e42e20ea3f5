"""
nbmc command line: planning, exact confidence, sequential runs, numerical
verification and curve data.

Every command prints exactly one report on stdout (JSON envelope or CSV);
logging and error messages go to stderr. Exit codes: 0 success, 2 invalid or
unachievable parameters, 3 term cap, 4 input format error, 5 verification
failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import config_base as config
from .appendix_verify import Family, coefficients_nonnegative_sweep, lemma1_sweep
from .core import (
    EstimationResult,
    RuleVersion,
    StoppingPlan,
    asymptotic_confidence,
    check_conditions_new,
    legacy_min_margin,
    legacy_p_limit,
    min_margin,
    min_N_for,
    min_N_for_factors,
    min_N_for_margin,
    mu1_bound_legacy,
    mu2_bound,
)
from .database import get_session_by_id, init_db, save_session
from .engine import coverage_experiment, new_session, run_until_stop
from .exact_conf import exact_confidence
from .exceptions import NBMCError, ParameterError, StreamFormatError, UnachievableError, VerificationError
from .models import SessionRecord, SourceKind
from .report import ReportEnvelope, flatten, write_csv
from .sources import LineSource, SyntheticSource, TrialSource

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("m", "N", "c_bar", "is_min_curve")


class CommandOutput(NamedTuple):
    envelope: ReportEnvelope
    rows: List[Dict[str, Any]]
    exit_code: int = 0


def _parameters(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"func", "verbose", "quiet", "format", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _factors(args: argparse.Namespace) -> Tuple[float, float, Optional[float]]:
    """(mu1, mu2, margin) from either --margin or --mu1/--mu2."""
    if args.margin is not None:
        if args.mu1 is not None or args.mu2 is not None:
            raise ParameterError("give either --margin or --mu1/--mu2, not both")
        if not args.margin > 0:
            raise ParameterError(f"--margin must be positive, got {args.margin}")
        return 1.0 + args.margin, 1.0 + args.margin, args.margin
    if args.mu1 is None or args.mu2 is None:
        raise ParameterError("need --margin or both --mu1 and --mu2")
    return args.mu1, args.mu2, None


# --- plan ---


def _legacy_summary(N: int, mu1: float, mu2: float, margin: Optional[float], args) -> dict:
    certifiable = mu1 >= mu1_bound_legacy(N) and mu2 >= mu2_bound(N)
    summary = {
        "certifiable": certifiable,
        "mu1_bound": mu1_bound_legacy(N),
        "min_margin": legacy_min_margin(N),
        "p_limit": legacy_p_limit(N, mu1) if certifiable else None,
        "min_N": None,
    }
    if margin is not None:
        try:
            summary["min_N"] = min_N_for(margin, args.confidence, args.max_N, rule=RuleVersion.LEGACY)
        except UnachievableError:
            pass
    return summary


def cmd_plan(args: argparse.Namespace) -> CommandOutput:
    mu1, mu2, margin = _factors(args)
    if margin is not None:
        N = min_N_for(margin, args.confidence, args.max_N)
    else:
        N = min_N_for_factors(mu1, mu2, args.confidence, args.max_N)
    plan = StoppingPlan(N, mu1, mu2)
    legacy = _legacy_summary(N, mu1, mu2, margin, args)
    warnings = []
    if not legacy["certifiable"]:
        warnings.append(f"legacy conditions cannot certify this point at N={N}")
    results = {
        "N": N,
        "c_bar": plan.c_bar,
        "mu1": mu1,
        "mu2": mu2,
        "margin": margin,
        "min_margin": min_margin(N),
        "conditions": check_conditions_new(N, mu1, mu2).to_dict(),
        "legacy": legacy,
    }
    envelope = ReportEnvelope("plan", _parameters(args), results, warnings)
    return CommandOutput(envelope, [flatten(results)])


# --- exact ---


def cmd_exact(args: argparse.Namespace) -> CommandOutput:
    mu1, mu2, _ = _factors(args)
    exact = exact_confidence(args.N, args.p, mu1, mu2)
    conditions = check_conditions_new(args.N, mu1, mu2, args.p)
    warnings = []
    if exact.interval_below_support:
        warnings.append(f"n2 = {exact.n2} < N = {exact.N}: the interval event is impossible, c = 0")
    if not (conditions.mu1_ok and conditions.mu2_ok):
        warnings.append("conditions do not hold: c_bar is not guaranteed to bound c")
    results = exact.to_dict()
    results["conditions"] = conditions.to_dict()
    envelope = ReportEnvelope("exact", _parameters(args), results, warnings)
    return CommandOutput(envelope, [flatten(results)])


# --- run ---


def _open_source(kind: SourceKind, args: argparse.Namespace, record: Optional[SessionRecord] = None) -> TrialSource:
    if kind is SourceKind.SYNTHETIC:
        p = args.p if args.p is not None else (record.p if record else None)
        seed = args.seed if args.seed is not None else (record.seed if record else None)
        if p is None or seed is None:
            raise ParameterError("--source synthetic needs --p and --seed")
        return SyntheticSource(p, seed)
    if kind is SourceKind.REPLAY:
        path = args.path or (record.replay_path if record else None)
        if not path:
            raise ParameterError("--source file needs --path")
        return LineSource.from_path(path)
    return LineSource.from_stdin()


_SOURCE_KINDS = {"synthetic": SourceKind.SYNTHETIC, "file": SourceKind.REPLAY, "stdin": SourceKind.STREAM}


def cmd_run(args: argparse.Namespace) -> CommandOutput:
    record = None
    if args.store:
        init_db(args.store)
    if args.resume is not None:
        if not args.store:
            raise ParameterError("--resume needs --store")
        record = get_session_by_id(args.resume)
        if record is None:
            raise ParameterError(f"no session {args.resume} in {args.store}")
        plan = record.plan
        source = _open_source(SourceKind(record.source_kind), args, record)
    else:
        if args.N is None:
            raise ParameterError("--N is required")
        mu1, mu2, _ = _factors(args)
        plan = StoppingPlan(args.N, mu1, mu2)
        source = _open_source(_SOURCE_KINDS[args.source], args)
        if args.store:
            record = new_session(plan, source)

    try:
        outcome = run_until_stop(plan, source, args.max_trials, resume_from=record)
    except StreamFormatError:
        if record is not None:
            session_id = save_session(record)
            logger.warning("Saved partial session %d (%d trials) before the malformed line", session_id, record.trials)
        raise
    finally:
        if isinstance(source, LineSource):
            source.close()

    warnings = []
    if isinstance(outcome, EstimationResult):
        results = outcome.to_dict()
        if outcome.ci_clamped:
            warnings.append("upper interval end clamped to 1")
    else:
        record = outcome
        results = outcome.to_dict()
        warnings.append(f"run ended without an estimate: {results['status']}")
    if args.store:
        results["session_id"] = save_session(record)
    envelope = ReportEnvelope("run", _parameters(args), results, warnings)
    return CommandOutput(envelope, [flatten(results)])


# --- verify ---


def _verify_Ns(args: argparse.Namespace) -> List[int]:
    if args.N is not None:
        return [args.N]
    Ns = list(range(args.N_min, args.N_max + 1))
    if not Ns:
        raise ParameterError(f"empty N range [{args.N_min}, {args.N_max}]")
    return Ns


def cmd_verify(args: argparse.Namespace) -> CommandOutput:
    run_lemma = args.lemma1 or not args.coefficients
    run_coefficients = args.coefficients or not args.lemma1
    Ns = _verify_Ns(args)
    results: Dict[str, Any] = {}
    rows = []
    all_hold = True

    if run_lemma:
        ps = args.p or list(config.DEFAULT_VERIFY_PS)
        reports = lemma1_sweep(Ns, ps, workers=args.workers)
        results["lemma1"] = [r.to_dict() for r in reports]
        margins = [r.worst_relative_margin for r in reports if r.worst_relative_margin is not None]
        results["lemma1_worst_relative_margin"] = min(margins) if margins else None
        results["lemma1_points_checked"] = sum(r.points_checked for r in reports)
        all_hold &= all(r.all_hold for r in reports)
        rows += [{"check": "lemma1", **r.to_dict()} for r in reports]

    if run_coefficients:
        families = [Family.X, Family.X_PRIME] if args.family == "both" else [Family(args.family)]
        reports = [
            coefficients_nonnegative_sweep(Ns, args.j_max, args.density, family=family, workers=args.workers)
            for family in families
        ]
        results["coefficients"] = [r.to_dict() for r in reports]
        all_hold &= all(r.all_hold for r in reports)
        rows += [{"check": "coefficients", **flatten(r.to_dict())} for r in reports]

    results["all_hold"] = all_hold
    warnings = [] if all_hold else ["an inequality failed beyond tolerance"]
    envelope = ReportEnvelope("verify", _parameters(args), results, warnings)
    return CommandOutput(envelope, rows, 0 if all_hold else VerificationError.exit_code)


# --- curves ---


def parse_m_grid(spec: str) -> np.ndarray:
    """'start:stop:count' (inclusive, evenly spaced) or a comma list of margins."""
    spec = spec.strip()
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            grid = np.linspace(float(start), float(stop), int(count))
        else:
            grid = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError as e:
        raise ParameterError(f"bad margin grid {spec!r}: {e}") from e
    if grid.size == 0:
        raise ParameterError(f"margin grid {spec!r} is empty")
    if not np.all(grid > 0):
        raise ParameterError(f"margin grid {spec!r} has nonpositive values")
    return grid


def parse_N_grid(spec: str) -> List[int]:
    """'lo:hi' (inclusive) or a comma list of N values."""
    spec = spec.strip()
    try:
        if ":" in spec:
            lo, hi = spec.split(":")
            grid = list(range(int(lo), int(hi) + 1))
        else:
            grid = [int(v) for v in spec.split(",") if v.strip()]
    except ValueError as e:
        raise ParameterError(f"bad N grid {spec!r}: {e}") from e
    if not grid:
        raise ParameterError(f"N grid {spec!r} is empty")
    if min(grid) < 3:
        raise ParameterError(f"N grid {spec!r} has values below 3")
    return grid


def curve_rows(
    m_grid: Sequence[float],
    N_grid: Sequence[int] = (),
    rule: RuleVersion = RuleVersion.NEW,
    max_N: int = config.DEFAULT_MAX_N,
) -> Tuple[List[Dict[str, Any]], List[str]]:
    """
    Rows of the guaranteed-confidence curves. For every m the smallest N the
    rule admits gives the minimum curve; every N in ``N_grid`` gives a
    fixed-N curve over the m values it admits.
    """
    floor = min_margin if RuleVersion(rule) is RuleVersion.NEW else legacy_min_margin
    rows, warnings = [], []
    for m in m_grid:
        m = float(m)
        try:
            N = min_N_for_margin(m, rule, max_N)
        except UnachievableError:
            warnings.append(f"m={m:g} needs N > {max_N}; skipped")
            continue
        rows.append({"m": m, "N": N, "c_bar": asymptotic_confidence(N, 1 + m, 1 + m), "is_min_curve": 1})
    for N in N_grid:
        lowest = floor(N)
        for m in m_grid:
            m = float(m)
            if m >= lowest:
                rows.append({"m": m, "N": N, "c_bar": asymptotic_confidence(N, 1 + m, 1 + m), "is_min_curve": 0})
    return rows, warnings


def cmd_curves(args: argparse.Namespace) -> CommandOutput:
    m_grid = parse_m_grid(args.m_grid)
    N_grid = parse_N_grid(args.N_grid) if args.N_grid is not None else []
    rows, warnings = curve_rows(m_grid, N_grid, RuleVersion(args.rule), args.max_N)
    if args.out:
        path = Path(args.out)
        try:
            with path.open("w", newline="", encoding="utf-8") as f:
                write_csv(rows, f, CURVE_COLUMNS)
        except OSError as e:
            raise ParameterError(f"cannot write {path}: {e}") from e
        logger.info("Wrote %d curve rows to %s", len(rows), path)
        results = {"out": str(path), "rows": len(rows)}
    else:
        results = rows
    envelope = ReportEnvelope("curves", _parameters(args), results, warnings)
    return CommandOutput(envelope, rows)


# --- coverage ---


def cmd_coverage(args: argparse.Namespace) -> CommandOutput:
    mu1, mu2, _ = _factors(args)
    report = coverage_experiment(args.N, mu1, mu2, args.p, args.runs, args.seed, workers=args.workers)
    results = report.to_dict()
    envelope = ReportEnvelope("coverage", _parameters(args), results, list(report.warnings))
    return CommandOutput(envelope, [results])


# --- argument parsing ---


def _add_factor_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--margin", type=float, help="Symmetric relative margin m (ratio, e.g. 0.237).")
    parser.add_argument("--mu1", type=float, help="Factor mu1 > 1 of the interval [p/mu2, p*mu1].")
    parser.add_argument("--mu2", type=float, help="Factor mu2 > 1 of the interval [p/mu2, p*mu1].")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="Report format (default: json).")

    parser = argparse.ArgumentParser(
        prog="nbmc",
        description="Negative-binomial Monte Carlo estimation with guaranteed confidence.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More diagnostics on stderr (-vv: debug).")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only errors on stderr.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="Smallest N reaching a confidence for a margin.")
    _add_factor_args(p)
    p.add_argument("--confidence", type=float, required=True, help="Target asymptotic confidence in (0, 1).")
    p.add_argument("--max-N", dest="max_N", type=int, default=config.DEFAULT_MAX_N)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("exact", parents=[common], help="Exact confidence c at a given p.")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    _add_factor_args(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("run", parents=[common], help="Run trials until the N-th occurrence.")
    p.add_argument("--N", type=int)
    _add_factor_args(p)
    p.add_argument("--source", choices=tuple(_SOURCE_KINDS), default="synthetic")
    p.add_argument("--p", type=float, help="Event probability of the synthetic source.")
    p.add_argument("--seed", type=int, help="Seed of the synthetic source.")
    p.add_argument("--path", help="Outcome file for --source file.")
    p.add_argument("--max-trials", dest="max_trials", type=int)
    p.add_argument("--store", help="SQLAlchemy URL of the session store, e.g. sqlite:///nbmc_sessions.db")
    p.add_argument("--resume", type=int, help="Continue the stored session with this id.")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="Numerical checks of the supporting inequalities.")
    p.add_argument("--lemma1", action="store_true", help="Integral/sum inequality sweep.")
    p.add_argument("--coefficients", action="store_true", help="Series coefficient nonnegativity sweep.")
    p.add_argument("--N", type=int, help="Single N (overrides --N-min/--N-max).")
    p.add_argument("--N-min", dest="N_min", type=int, default=config.DEFAULT_VERIFY_N_MIN)
    p.add_argument("--N-max", dest="N_max", type=int, default=config.DEFAULT_VERIFY_N_MAX)
    p.add_argument("--p", type=float, action="append", help="Event probability (repeatable).")
    p.add_argument("--j-max", dest="j_max", type=int, default=config.DEFAULT_J_MAX)
    p.add_argument("--density", type=int, default=config.DEFAULT_GRID_DENSITY, help="nu points per interval.")
    p.add_argument("--family", choices=("x", "x_prime", "both"), default="both")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("curves", parents=[common], help="Guaranteed-confidence curves as CSV data.")
    p.add_argument("--m-grid", dest="m_grid", default=config.DEFAULT_M_GRID, help="start:stop:count or m1,m2,...")
    p.add_argument("--N-grid", dest="N_grid", help="lo:hi or N1,N2,... for fixed-N curves.")
    p.add_argument("--rule", choices=[r.value for r in RuleVersion], default=RuleVersion.NEW.value)
    p.add_argument("--max-N", dest="max_N", type=int, default=config.DEFAULT_MAX_N)
    p.add_argument("--out", help="CSV output file (header m,N,c_bar,is_min_curve).")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("coverage", parents=[common], help="Empirical coverage of repeated synthetic runs.")
    p.add_argument("--N", type=int, required=True)
    _add_factor_args(p)
    p.add_argument("--p", type=float, required=True, help="True event probability.")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_coverage)
    return parser


def _setup_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
        force=True,
    )


def emit(output: CommandOutput, fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "csv" and not (output.envelope.command == "curves" and isinstance(output.envelope.results, dict)):
        columns = list(dict.fromkeys(key for row in output.rows for key in row))
        write_csv(output.rows, stream, columns)
    else:
        stream.write(output.envelope.to_json() + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    try:
        output = args.func(args)
        emit(output, args.format)
    except NBMCError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return output.exit_code


if __name__ == "__main__":
    sys.exit(main())
