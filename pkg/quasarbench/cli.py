"""
Command-line entry point: certify, run, sweep, fit, report.

Exit codes: 0 success, 1 usage or configuration error, 2 divergence or
stage failure, 3 regime violation, 4 certification failure.

Usage:
    python -m quasarbench certify --config configs/certify_sine_bump.json
    python -m quasarbench sweep --config configs/sgd_average_quadratic.json --bound --fit --jobs 4
    python -m quasarbench report
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from quasarbench.analysis import (
    bound_check,
    bound_for,
    compare_bounds,
    exponent_report,
    regime_threshold,
    run_sweep,
    summarize,
    validate_regime,
)
from quasarbench.config import configure_logging, get_default_jobs
from quasarbench.errors import CertificationError, ConfigurationError, QuasarBenchError, RegimeError
from quasarbench.models import Box, CertificationReport, ConstantsCertificate, ExperimentConfig, SweepSummary
from quasarbench.problems import build_objective, certify
from quasarbench.store import ResultStore, config_digest, load_fit, problem_digest

logger = logging.getLogger(__name__)

DEFAULT_BOX_RADIUS = 10.0
COMPARISON_GRID = [10**k for k in range(1, 7)]

# Claims tracked by the report, in report order
CLAIMS: List[Tuple[str, str]] = [
    ("certification", "Structural constants certified on the box"),
    ("sgd-average-subopt", "SGD averaged suboptimality stays below 4(R sigma/(gamma sqrt T) + R^2 L/(gamma T))"),
    ("sgd-noisy-rate", "SGD averaged suboptimality decays as T^(-1/2) under noise"),
    ("sgd-noiseless-rate", "SGD averaged suboptimality decays as T^(-1) without noise"),
    ("geometric-output-subopt", "Geometric-weighted output meets the strongly-quasar bound"),
    ("noiseless-contraction", "Noiseless steps contract ||x - x*||^2 by (1 - gamma mu alpha)"),
    ("two-phase-deterministic", "Deterministic two-phase method reaches ||grad f|| <= epsilon"),
    ("two-phase-stochastic", "Stochastic two-phase method reaches E||grad f|| <= 1.1 epsilon"),
    ("two-phase-strongly-quasar", "Strongly-quasar two-phase method reaches E||grad f|| <= 1.1 epsilon"),
    ("nonsmooth-constant-step", "Subgradient averaged suboptimality stays below RG/(gamma sqrt T)"),
    ("nonsmooth-harmonic-distance", "Harmonic-step distance stays below 1.1 G^2/(gamma^2 mu^2 t)"),
    ("bound-comparison", "Averaged and constant-step comparison bounds tabulated side by side"),
]


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def load_config(path: Path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read a JSON experiment config; --seed replaces the master seed."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if seed is not None:
        data.setdefault("oracle", {})["master_seed"] = seed
    return ExperimentConfig.model_validate(data)


def default_box(config: ExperimentConfig) -> Box:
    """Configured box, else a cube of radius 10 around x* (enlarged to contain x0)."""
    if config.certify.box is not None:
        return config.certify.box
    f = build_objective(config.problem)
    center = f.minimizer.tolist()
    radius = DEFAULT_BOX_RADIUS
    if config.problem.start is not None:
        reach = max(abs(s - c) for s, c in zip(config.problem.start, center))
        radius = max(radius, 1.5 * reach)
    return Box.cube(radius, f.dimension, center)


def resolve_certificate(config: ExperimentConfig, store: ResultStore) -> ConstantsCertificate:
    """
    Certificate for a run: the document's own, then the stored one, then the analytic one.

    R is taken from the start point for stored certificates, and whenever the
    source leaves it at 0.
    """
    spec = config.problem
    cert = spec.certificate
    source = "config"
    if cert is None:
        stored = store.load_certificate(problem_digest(spec))
        if stored is not None:
            cert, source = stored.certificate, "store"
    f = build_objective(spec)
    if cert is None:
        cert, source = f.declared, "analytic"
    if cert is None:
        raise ConfigurationError(f"no certificate for {spec.family}; run `certify` first or supply one")
    if spec.start is not None and (cert.R == 0.0 or source == "store"):
        R = math.dist(spec.start, f.minimizer.tolist())
        cert = cert.model_copy(update={"R": R})
    logger.info(f"Using {source} certificate: gamma={cert.gamma:.6g}, mu={cert.mu:.6g}, L={cert.L}, G={cert.G}, R={cert.R:.6g}")
    return cert


def pin_certificate(config: ExperimentConfig, store: ResultStore) -> Tuple[ExperimentConfig, ConstantsCertificate]:
    """
    Config with the resolved certificate written into its problem document.

    The run digest then covers the constants actually used, so re-certifying a
    problem yields a new digest instead of reusing runs made with old constants.
    """
    cert = resolve_certificate(config, store)
    problem = config.problem.model_copy(update={"certificate": cert})
    return config.model_copy(update={"problem": problem}), cert


# Commands


def cmd_certify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    store = ResultStore()
    key = problem_digest(config.problem)
    report = store.load_certificate(key)
    if report is not None and not args.force:
        logger.info(f"Certificate {key[:12]} already stored; use --force to recompute")
    else:
        f = build_objective(config.problem)
        report = certify(
            f,
            default_box(config),
            config.certify.grid_points,
            config.certify.samples,
            start=config.problem.start,
            jobs=args.jobs,
        )
        store.save_certificate(key, report)
        store.save_config(config_digest(config), config)
    _print_certificate(report)
    return 0


def _print_certificate(report: CertificationReport) -> None:
    cert = report.certificate
    print(f"class:   {report.function_class}")
    print(f"gamma:   {cert.gamma:.10g}")
    print(f"mu:      {cert.mu:.10g}")
    print(f"L:       {'-' if cert.L is None else f'{cert.L:.10g}'}")
    print(f"G:       {'-' if cert.G is None else f'{cert.G:.10g}'}")
    print(f"R:       {cert.R:.10g}")
    print(f"worst point (gamma): {report.worst_point_gamma}")
    print(f"worst point (mu):    {report.worst_point_mu}")
    print(f"min gap: {report.min_gap:.6g}")


def _execute(
    config: ExperimentConfig, store: ResultStore, jobs: int, force: bool
) -> Tuple[ExperimentConfig, str, ConstantsCertificate, int]:
    """
    Run every seed and horizon of a config into the store.

    Returns:
        (pinned config, digest, certificate, failed cells); a finished run set
        is reused unless force, replaying its failure count
    """
    config, cert = pin_certificate(config, store)
    digest = config_digest(config)
    validate_regime(config, cert)
    manifest = store.load_manifest(digest)
    if manifest is not None and not force:
        logger.info(f"Runs for {digest[:12]} already stored ({manifest.failures} failed); use --force to recompute")
        return config, digest, cert, manifest.failures

    store.save_config(digest, config)
    store.clear_runs(digest)
    appender = store.run_appender(digest)
    result = run_sweep(config, cert, digest, jobs, on_record=lambda record: store.append_record(appender, record))
    runs = sum(len(v) for v in result.records.values())
    store.mark_runs_complete(digest, runs, len(result.failures))
    logger.info(f"Stored {runs} runs for {digest[:12]} ({len(result.failures)} failed)")
    return config, digest, cert, len(result.failures)


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.seed)
    store = ResultStore()
    _, digest, _, failures = _execute(config, store, args.jobs, args.force)
    print(f"runs: {store.path('runs', digest + '.csv')}")
    return 2 if failures else 0


def _summary_for(config: ExperimentConfig, store: ResultStore, digest: str) -> SweepSummary:
    records: Dict[int, list] = {}
    for record in store.load_records(digest):
        records.setdefault(record.T, []).append(record)
    if not records:
        raise ConfigurationError(f"no stored runs for {digest[:12]}")
    return summarize(records, config.criterion, digest, label=config.name)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.seed)
    store = ResultStore()
    config, digest, cert, failures = _execute(config, store, args.jobs, args.force)
    summary = _summary_for(config, store, digest)

    if args.bound:
        if config.bound is None:
            raise ConfigurationError("--bound needs a 'bound' entry in the config")
        evaluator = bound_for(
            config.bound,
            cert,
            config.oracle.sigma,
            config.bound_slack,
            beta=config.compare_gower_beta,
            epsilon=config.epsilon,
        )
        summary = bound_check(summary, evaluator)
    store.write_summary(digest, summary)
    _print_summary(summary)

    fit = None
    if args.fit:
        fit = _write_fit(config, cert, summary, store, digest)

    if config.compare_gower_beta is not None and cert.L is not None:
        Ts = sorted(set(COMPARISON_GRID) | set(config.T_grid or []))
        table = compare_bounds(Ts, cert.R, config.oracle.sigma, cert.L, cert.gamma, config.compare_gower_beta)
        path = store.write_comparison(digest, table)
        print(f"bound comparison: {path}")

    if args.plot:
        from quasarbench.plotting import plot_summary

        plot_summary(summary, store.path("summaries", f"{digest}.svg"), fit.fit if fit else None, config.name)
    return 2 if failures else 0


def _write_fit(config: ExperimentConfig, cert: ConstantsCertificate, summary: SweepSummary, store: ResultStore, digest: str):
    if config.mode != "sgd":
        raise ConfigurationError("rate fits apply to sgd sweeps")
    sigma = config.oracle.sigma
    report = exponent_report(summary, config.schedule.name, sigma, regime_threshold(config.schedule.name, cert, sigma))
    store.write_fit(digest, report)
    slope = f"{report.fit.slope:.4f}" if report.fit else "-"
    r2 = f"{report.fit.r_squared:.4f}" if report.fit else "-"
    print(f"fit: slope={slope} r2={r2} predicted={report.predicted} +/- {report.tolerance} -> {report.verdict} {report.reason}")
    return report


def _print_summary(summary: SweepSummary) -> None:
    print(f"{'T':>10} {'mean':>14} {'ci95':>12} {'seeds':>6} {'bound':>14} pass")
    for row in summary.rows:
        bound = f"{row.bound:.6g}" if row.bound is not None else "-"
        passed = "-" if row.passed is None else ("yes" if row.passed else "no")
        print(f"{row.T:>10} {row.mean:>14.6g} {row.ci95:>12.3g} {row.seeds:>6} {bound:>14} {passed}")


def cmd_fit(args: argparse.Namespace) -> int:
    store = ResultStore()
    config, cert = pin_certificate(load_config(args.config, args.seed), store)
    digest = config_digest(config)
    if not store.has_summary(digest):
        raise ConfigurationError(f"no summary for {digest[:12]}; run `sweep` first")
    _write_fit(config, cert, store.read_summary(digest), store, digest)
    return 0


def _verdict(config: ExperimentConfig, store: ResultStore, digest: str) -> Tuple[str, str]:
    """(verdict, detail) of one stored experiment."""
    if config.claim == "certification":
        stored = store.load_certificate(problem_digest(config.problem))
        if stored is None:
            return "not run", "no certificate stored"
        cert = stored.certificate
        return "pass", f"gamma={cert.gamma:.4g}, mu={cert.mu:.4g}, L={cert.L}, G={cert.G}"
    if not store.has_summary(digest):
        return "not run", "no summary stored"
    summary = store.read_summary(digest)
    details = []
    verdicts = []
    if summary.verdict is not None:
        verdicts.append(summary.verdict)
        details.append(f"{sum(bool(r.passed) for r in summary.rows)}/{len(summary.rows)} rows within bound")
    records = store.load_records(digest)
    if config.claim == "noiseless-contraction" and records:
        violations = sum(r.contraction_violations for r in records)
        verdicts.append(violations == 0)
        details.append(f"{violations} contraction violations over {sum(r.oracle_calls for r in records)} steps")
    fit = load_fit(store.read_fit(digest) or {})
    if fit is not None:
        stored = store.read_fit(digest)
        details.append(f"slope {fit.slope:.3f} (predicted {stored['predicted']} +/- {stored['tolerance']}): {stored['verdict']}")
        if stored["verdict"] != "inconclusive":
            verdicts.append(stored["verdict"] == "pass")
    if config.claim == "bound-comparison":
        exists = store.path("reports", f"{digest}.comparison.csv").exists()
        verdicts.append(exists)
        details.append("comparison table written" if exists else "comparison table missing")
    if not verdicts:
        return "recorded", "; ".join(details) or "no verdict attached"
    return ("pass" if all(verdicts) else "fail"), "; ".join(details)


def build_report(store: ResultStore) -> str:
    """Markdown report: one table per claim, claims in fixed order, experiments in digest order."""
    configs = store.list_configs()
    lines = ["# quasarbench report", ""]
    for claim, description in CLAIMS:
        lines += [f"## {claim}", "", description, "", "| experiment | digest | verdict | detail |", "|---|---|---|---|"]
        matched = [(d, c) for d, c in configs.items() if c.claim == claim]
        if not matched:
            logger.warning(f"Claim {claim}: no experiment stored")
            lines.append("| - | - | not run | - |")
        for digest, config in matched:
            verdict, detail = _verdict(config, store, digest)
            if verdict == "not run":
                logger.warning(f"Claim {claim}: {config.name or digest[:12]} has no results")
            lines.append(f"| {config.name or '-'} | {digest[:12]} | {verdict} | {detail} |")
        lines.append("")
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> int:
    store = ResultStore()
    path = store.write_report(build_report(store))
    print(f"report: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quasarbench", description="Quasar-convex SGD benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", type=Path, required=True, help="JSON experiment config")
        p.add_argument("--jobs", type=int, default=get_default_jobs(), help="worker count")
        p.add_argument("--force", action="store_true", help="recompute even if the digest is stored")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")

    p = sub.add_parser("certify", help="certify gamma, mu, L/G on a box")
    common(p)
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("run", help="run every seed of a config")
    common(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", help="run a T grid and summarize")
    common(p)
    p.add_argument("--bound", action="store_true", help="attach the configured bound and verdicts")
    p.add_argument("--fit", action="store_true", help="fit the log-log rate")
    p.add_argument("--plot", action="store_true", help="write an SVG plot")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("fit", help="fit the rate of a stored summary")
    common(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("report", help="write the consolidated report")
    common(p, config=False)
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"Error: invalid configuration: {e}", file=sys.stderr)
        return 1
    except RegimeError as e:
        print(f"Error: {e}", file=sys.stderr)
        if e.minimal_T is not None:
            print(f"minimal admissible T = {e.minimal_T}", file=sys.stderr)
        return e.exit_code
    except CertificationError as e:
        print(f"Error: {e}", file=sys.stderr)
        print(f"witness: {e.witness}", file=sys.stderr)
        return e.exit_code
    except QuasarBenchError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
