"""
Aggregation of runs into sweep summaries, bound verdicts, rate fits and
empirical complexity estimates.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import norm

from quasarbench.errors import BudgetExhausted, ConfigurationError, DomainError, QuasarBenchError, StageFailure
from quasarbench.models import (
    ComplexityEstimate,
    ConstantsCertificate,
    ExperimentConfig,
    ExponentReport,
    RateFit,
    RunRecord,
    StatisticKind,
    SummaryRow,
    SweepSummary,
)
from quasarbench.oracles import Oracle, effective_G
from quasarbench.problems import build_objective
from quasarbench.schedules import (
    gower_alpha,
    gower_constant_step_bound,
    gower_distance_bound,
    make_schedule,
    nonsmooth_bound,
    nonsmooth_harmonic_distance_bound,
    qc_bound,
    sqc_bound,
    sqc_threshold,
)
from quasarbench.solvers import get_stage_one, sgd_run, two_phase_det, two_phase_sto

logger = logging.getLogger(__name__)

CONFIDENCE = 0.95
MIN_ACCEPTANCE_SEEDS = 30
MIN_FIT_POINTS = 4
MIN_FIT_DECADES = 2.0
COMPLEXITY_SLACK = 1.1


def z_value(confidence: float = CONFIDENCE) -> float:
    """Two-sided normal quantile, 1.96 at 95%."""
    return float(norm.ppf(0.5 + confidence / 2.0))


def half_width(values: Sequence[float], confidence: float = CONFIDENCE) -> float:
    """Normal-approximation confidence half-width of the mean; 0 for a single value."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return 0.0
    return z_value(confidence) * float(np.std(arr, ddof=1)) / math.sqrt(arr.size)


def statistic_value(record: RunRecord, statistic: StatisticKind) -> float:
    """
    Per-seed value of a statistic.

    Output statistics use the exact expectation over the output draw, which is
    the limit of re-sampling the output per seed.
    """
    if statistic == "avg-subopt":
        return record.avg_subopt
    if statistic == "output-subopt":
        return record.expected_output_f_gap
    if statistic == "output-grad-norm":
        return record.expected_output_grad_norm
    return record.final_dist_sq


def summarize(
    records_by_T: Dict[int, List[RunRecord]],
    statistic: StatisticKind,
    config_digest: str = "",
    label: str = "",
) -> SweepSummary:
    """
    Aggregate runs into one row per T, reducing in ascending run_index order.

    Args:
        records_by_T: Runs grouped by horizon
        statistic: Statistic to aggregate
        config_digest: Digest stamped on each row
        label: Free-form label

    Returns:
        SweepSummary with rows sorted by T
    """
    rows = []
    for T in sorted(records_by_T):
        ordered = sorted(records_by_T[T], key=lambda r: r.run_index)
        if not ordered:
            continue
        values = [statistic_value(r, statistic) for r in ordered]
        rows.append(
            SummaryRow(
                config_digest=config_digest,
                T=T,
                statistic=statistic,
                mean=math.fsum(values) / len(values),
                ci95=half_width(values),
                seeds=len(values),
            )
        )
    return SweepSummary(statistic=statistic, label=label, rows=rows)


# Bounds


@dataclass
class BoundEvaluator:
    """A theoretical bound as a function of T, with the statistic it controls."""

    name: str
    statistic: StatisticKind
    fn: Callable[[int], float]

    def __call__(self, T: int) -> float:
        return self.fn(T)


BOUND_NAMES = (
    "qc",
    "sqc",
    "gower_distance",
    "gower_constant_step",
    "nonsmooth",
    "nonsmooth_harmonic_distance",
    "epsilon",
)


def bound_for(
    name: str,
    cert: ConstantsCertificate,
    sigma: float,
    slack: float = 1.0,
    beta: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> BoundEvaluator:
    """
    Build a named bound evaluator from certified constants.

    Args:
        name: One of BOUND_NAMES
        cert: Certificate supplying gamma, mu, L, G, R
        sigma: Oracle noise level
        slack: Multiplier applied to the bound (e.g. 1.1 for the harmonic distance check)
        beta: Step scale of the constant-step comparison bound
        epsilon: Target of the two-phase gradient-norm criterion

    Returns:
        BoundEvaluator
    """
    g, mu, L, R = cert.gamma, cert.mu, cert.L, cert.R

    def smooth() -> float:
        if L is None:
            raise ConfigurationError(f"bound {name} needs a smooth certificate")
        return L

    def bounded_G() -> float:
        if cert.G is None:
            raise ConfigurationError(f"bound {name} needs a certified G; run `certify` on a box first")
        return effective_G(cert.G, sigma)

    if name == "qc":
        L_ = smooth()
        return BoundEvaluator(name, "avg-subopt", lambda T: slack * qc_bound(T, R, sigma, L_, g))
    if name == "sqc":
        L_ = smooth()
        return BoundEvaluator(name, "output-subopt", lambda T: slack * sqc_bound(T, g, mu, L_, R, sigma))
    if name == "gower_distance":
        return BoundEvaluator(
            name,
            "dist-sq",
            lambda T: slack * gower_distance_bound(T, g, mu, R, sigma, gower_alpha(g, mu, R, sigma, T)),
        )
    if name == "gower_constant_step":
        L_ = smooth()
        if beta is None:
            raise ConfigurationError("gower_constant_step bound needs beta")
        return BoundEvaluator(name, "avg-subopt", lambda T: slack * gower_constant_step_bound(T, R, sigma, g, L_, beta))
    if name == "nonsmooth":
        G = bounded_G()
        return BoundEvaluator(name, "avg-subopt", lambda T: slack * nonsmooth_bound(T, R, G, g))
    if name == "nonsmooth_harmonic_distance":
        G = bounded_G()
        return BoundEvaluator(name, "dist-sq", lambda T: slack * nonsmooth_harmonic_distance_bound(T, G, g, mu))
    if name == "epsilon":
        if epsilon is None:
            raise ConfigurationError("epsilon bound needs the target epsilon")
        return BoundEvaluator(name, "output-grad-norm", lambda T: slack * epsilon)
    raise ConfigurationError(f"unknown bound {name!r}; known: {list(BOUND_NAMES)}")


def bound_check(summary: SweepSummary, bound: BoundEvaluator, min_seeds: int = MIN_ACCEPTANCE_SEEDS) -> SweepSummary:
    """
    Attach bound values and verdicts: a row passes iff mean - ci95 <= bound(T).

    Args:
        summary: Sweep summary
        bound: Evaluator for the statistic the summary aggregates
        min_seeds: Seed count below which a row is flagged as not acceptance-grade

    Returns:
        New SweepSummary with bound and passed set on every row

    Raises:
        ConfigurationError: If the summary statistic is not the one the bound controls
    """
    if summary.statistic != bound.statistic:
        raise ConfigurationError(
            f"bound {bound.name} controls {bound.statistic}, summary aggregates {summary.statistic}"
        )
    rows = []
    for row in summary.rows:
        if row.seeds < min_seeds:
            logger.warning(f"T={row.T}: {row.seeds} seeds is below the {min_seeds} needed for acceptance")
        value = bound(row.T)
        rows.append(row.model_copy(update={"bound": value, "passed": bool(row.mean - row.ci95 <= value)}))
    return summary.model_copy(update={"rows": rows})


def compare_bounds(
    Ts: Sequence[int],
    R: float,
    sigma: float,
    L: float,
    gamma: float,
    beta: float,
) -> List[Tuple[int, float, Optional[float]]]:
    """
    Side-by-side qc_bound and gower_constant_step_bound over T.

    Entries where the constant-step bound is outside its regime are None.
    No ordering between the two curves is asserted.
    """
    table = []
    for T in Ts:
        try:
            other: Optional[float] = gower_constant_step_bound(T, R, sigma, gamma, L, beta)
        except QuasarBenchError:
            other = None
        table.append((int(T), qc_bound(T, R, sigma, L, gamma), other))
    return table


# Rates


def rate_fit(points: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Ordinary least squares of log(value) against log(T).

    Args:
        points: (T, value) pairs with distinct T and value > 0

    Returns:
        RateFit; r_squared is 1 for a constant series
    """
    if len(points) < 2:
        raise DomainError(f"need at least 2 points to fit a rate, got {len(points)}")
    Ts = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    if np.any(values <= 0.0) or np.any(Ts <= 0.0):
        raise DomainError("rate fits need T > 0 and value > 0")
    if len(np.unique(Ts)) != len(Ts):
        raise DomainError(f"T values must be distinct, got {Ts.tolist()}")

    x, y = np.log(Ts), np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(residual**2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if ss_tot == 0.0:
        slope = 0.0
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        T_min=float(Ts.min()),
        T_max=float(Ts.max()),
        n_points=len(points),
    )


def predicted_exponent(schedule_kind: str, sigma: float) -> Tuple[float, float]:
    """
    Predicted log-log slope and tolerance for a schedule.

    The log-scaled strongly-quasar rates carry log factors, hence the wider tolerance.
    """
    if schedule_kind == "qc_constant":
        return (-0.5, 0.15) if sigma > 0.0 else (-1.0, 0.15)
    if schedule_kind in ("sqc_log", "gower_log"):
        return -1.0, 0.2
    if schedule_kind == "nonsmooth_constant":
        return -0.5, 0.15
    if schedule_kind == "nonsmooth_harmonic":
        return -1.0, 0.15
    raise ConfigurationError(f"no predicted exponent for schedule {schedule_kind!r}")


def regime_threshold(schedule_kind: str, cert: ConstantsCertificate, sigma: float) -> Optional[float]:
    """T above which the predicted term dominates (None when there is no threshold)."""
    if schedule_kind == "qc_constant" and sigma > 0.0 and cert.L is not None:
        return (cert.R * cert.L / sigma) ** 2
    if schedule_kind == "sqc_log" and sigma > 0.0 and cert.L is not None and cert.mu > 0.0:
        return float(sqc_threshold(cert.gamma, cert.mu, cert.L, cert.R, sigma))
    return None


def exponent_report(
    summary: SweepSummary,
    schedule_kind: str,
    sigma: float,
    regime_T: Optional[float] = None,
) -> ExponentReport:
    """
    Fit the sweep's rate and compare it with the predicted exponent.

    Returns an inconclusive verdict when the sweep has fewer than four
    positive points, spans less than two decades, or starts inside the
    pre-asymptotic regime.
    """
    predicted, tolerance = predicted_exponent(schedule_kind, sigma)
    points = [(row.T, row.mean) for row in summary.rows if row.mean > 0.0]
    if len(points) < MIN_FIT_POINTS:
        return ExponentReport(
            predicted=predicted, tolerance=tolerance, verdict="inconclusive",
            reason=f"{len(points)} positive points, need {MIN_FIT_POINTS}",
        )
    fit = rate_fit(points)
    if math.log10(fit.T_max / fit.T_min) < MIN_FIT_DECADES:
        return ExponentReport(
            fit=fit, predicted=predicted, tolerance=tolerance, verdict="inconclusive",
            reason=f"grid spans {math.log10(fit.T_max / fit.T_min):.2f} decades, need {MIN_FIT_DECADES}",
        )
    if regime_T is not None and fit.T_min <= regime_T:
        return ExponentReport(
            fit=fit, predicted=predicted, tolerance=tolerance, verdict="inconclusive",
            reason=f"T_min = {fit.T_min:g} does not exceed the regime threshold {regime_T:g}",
        )
    verdict = "pass" if abs(fit.slope - predicted) <= tolerance else "fail"
    return ExponentReport(fit=fit, predicted=predicted, tolerance=tolerance, verdict=verdict)


# Running


def run_single(config: ExperimentConfig, cert: ConstantsCertificate, T: Optional[int], run_index: int, digest: str = "") -> RunRecord:
    """Execute one seeded run of a configuration."""
    f = build_objective(config.problem)
    oracle = Oracle(f, config.oracle)
    start = config.problem.start
    if config.mode == "two-phase-det":
        return two_phase_det(f, get_stage_one(config.stage_one), config.epsilon, cert, start, oracle, run_index, digest)
    if config.mode == "two-phase-sto":
        return two_phase_sto(f, oracle, config.epsilon, config.variant, cert, start, run_index, digest)
    schedule = make_schedule(config.schedule, cert, oracle.sigma, T)
    return sgd_run(
        f, oracle, schedule, T, config.output_rule, run_index, start, cert, config.thinning, config_digest=digest
    )


def _run_task(args: Tuple[ExperimentConfig, ConstantsCertificate, Optional[int], int, str]) -> RunRecord:
    return run_single(*args)


def sweep_horizons(config: ExperimentConfig) -> List[Optional[int]]:
    """Horizons a configuration runs at; two-phase configs derive theirs from epsilon."""
    if config.mode != "sgd":
        if config.epsilon is None:
            raise ConfigurationError(f"mode {config.mode} needs epsilon")
        return [None]
    if config.T_grid:
        return list(config.T_grid)
    if config.T is None:
        raise ConfigurationError("sgd configs need T or T_grid")
    return [config.T]


def validate_regime(config: ExperimentConfig, cert: ConstantsCertificate) -> None:
    """Resolve every schedule of the sweep up front so regime errors surface before any run."""
    if config.mode != "sgd":
        return
    for T in sweep_horizons(config):
        make_schedule(config.schedule, cert, config.oracle.sigma, T)


class SweepResult(BaseModel):
    """Runs grouped by T, plus cells that failed without aborting the sweep."""

    records: Dict[int, List[RunRecord]] = Field(default_factory=dict)
    failures: List[Tuple[Optional[int], int, str]] = Field(default_factory=list)  # (T, seed, message)


def run_sweep(
    config: ExperimentConfig,
    cert: ConstantsCertificate,
    digest: str = "",
    jobs: int = 1,
    on_record: Optional[Callable[[RunRecord], None]] = None,
) -> SweepResult:
    """
    Run seeds x horizons, sequentially or over a process pool.

    Args:
        config: Experiment configuration
        cert: Certificate for schedules and bounds
        digest: Config digest stamped on records
        jobs: Worker processes (1 runs in-process)
        on_record: Called for each finished record in task order

    Returns:
        SweepResult; a stage failure is logged and recorded, other errors propagate
    """
    validate_regime(config, cert)
    tasks = [(config, cert, T, i, digest) for T in sweep_horizons(config) for i in range(config.seeds)]
    logger.info(f"Sweep {config.name or digest[:12]}: {len(tasks)} runs on {jobs} worker(s)")
    result = SweepResult()

    def collect(task, outcome) -> None:
        if isinstance(outcome, StageFailure):
            logger.error(f"Run {task[3]} at T={task[2]} failed: {outcome}")
            result.failures.append((task[2], task[3], str(outcome)))
            return
        result.records.setdefault(outcome.T, []).append(outcome)
        if on_record is not None:
            on_record(outcome)

    if jobs <= 1:
        for task in tasks:
            try:
                outcome = _run_task(task)
            except StageFailure as e:
                outcome = e
            collect(task, outcome)
        return result

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_task, task) for task in tasks]
        for task, future in zip(tasks, futures):
            try:
                outcome = future.result()
            except StageFailure as e:
                outcome = e
            collect(task, outcome)
    return result


def empirical_complexity(
    run: Callable[[int, int], RunRecord],
    criterion: str,
    epsilon: float,
    seeds: int,
    cap: int = 1 << 20,
) -> ComplexityEstimate:
    """
    Smallest T on the grid 1, 2, 4, ... whose mean criterion is <= epsilon.

    Args:
        run: Callable (T, run_index) -> RunRecord
        criterion: "subopt" (expected output f_gap) or "grad-norm" (expected output gradient norm)
        epsilon: Target
        seeds: Runs per grid point
        cap: Largest T tried

    Returns:
        ComplexityEstimate; confident when mean + ci95 <= 1.1 epsilon

    Raises:
        BudgetExhausted: If no grid T up to cap meets the target
    """
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if criterion not in ("subopt", "grad-norm"):
        raise ConfigurationError(f"criterion must be 'subopt' or 'grad-norm', got {criterion!r}")
    statistic = "output-subopt" if criterion == "subopt" else "output-grad-norm"
    T = 1
    while T <= cap:
        values = [statistic_value(run(T, i), statistic) for i in range(seeds)]
        mean = math.fsum(values) / len(values)
        hw = half_width(values)
        if mean <= epsilon:
            confident = mean + hw <= COMPLEXITY_SLACK * epsilon
            logger.info(f"Criterion {criterion} <= {epsilon} first met at T={T} (mean {mean:.6g} +/- {hw:.3g})")
            return ComplexityEstimate(criterion=criterion, epsilon=epsilon, T=T, mean=mean, ci95=hw, confident=confident)
        T *= 2
    raise BudgetExhausted(f"{criterion} <= {epsilon} not attained within budget T <= {cap}", cap)
