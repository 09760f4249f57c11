"""
SGD with output-selection rules, and the two-phase stationary-point drivers.

Algorithms see only oracle responses. The exact f and grad f carried by each
GradientSample are used for measurement and never enter an update.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from quasarbench.errors import ConfigurationError, DivergenceError, DomainError, StageFailure
from quasarbench.models import ConstantsCertificate, OracleConfig, OutputRule, RunRecord, ScheduleConfig
from quasarbench.oracles import Oracle, OracleStream, output_generator
from quasarbench.problems import Objective, as_point
from quasarbench.schedules import (
    StepSchedule,
    det_sqc_iterations,
    fixed_schedule,
    make_schedule,
    qc_iterations,
    split_det,
    split_sqc,
    split_sto,
    sqc_iterations,
)

logger = logging.getLogger(__name__)

THINNING_LIMIT = 100_000
THINNED_POINTS = 10_000
DIVERGENCE_FACTOR = 1e6
CONTRACTION_RTOL = 1e-12
STAGE_GAP_TOL = 1e-12


def default_thinning(T: int) -> int:
    """Store every iterate up to 1e5 steps, otherwise every ceil(T/1e4)-th."""
    return 1 if T <= THINNING_LIMIT else math.ceil(T / THINNED_POINTS)


# Output selection


def geometric_weights(T: int, rate: float) -> np.ndarray:
    """
    Closed-form weights w_t = q^(T-t-1)(1-q)/(1-q^T) over t = 0..T-1, q = 1 - rate.

    Args:
        T: Number of candidate iterates
        rate: gamma * mu * alpha, in [0, 1); 0 gives uniform weights

    Returns:
        Non-decreasing weights summing to 1
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    if not (0.0 <= rate < 1.0):
        raise ConfigurationError(f"geometric rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.full(T, 1.0 / T)
    log_q = math.log1p(-rate)
    exponents = np.arange(T - 1, -1, -1, dtype=float)
    weights = np.exp(exponents * log_q) * rate / -math.expm1(T * log_q)
    return weights / weights.sum()


def _tail_start(T: int) -> int:
    return math.ceil(T / 2)


def draw_output_index(rule: OutputRule, T: int, rng: np.random.Generator) -> Optional[int]:
    """
    Pre-draw the output index for rules that do not depend on the trajectory.

    Index conventions: uniform-random over 1..T, geometric-weighted over
    0..T-1, tail-uniform over ceil(T/2)..T, last-iterate T. best-gradient
    depends on the run and returns None.
    """
    if rule.kind == "uniform-random":
        return int(rng.integers(1, T + 1))
    if rule.kind == "geometric-weighted":
        if rule.rate is None:
            raise ConfigurationError("geometric-weighted output needs a rate")
        return int(rng.choice(T, p=geometric_weights(T, rule.rate)))
    if rule.kind == "tail-uniform":
        return int(rng.integers(_tail_start(T), T + 1))
    if rule.kind == "last-iterate":
        return T
    return None


def select_output(
    trajectory: np.ndarray,
    rule: OutputRule,
    rng: np.random.Generator,
    grad_norms: Optional[Sequence[float]] = None,
) -> Tuple[int, np.ndarray]:
    """
    Choose the output iterate from a stored trajectory x_0..x_T.

    Args:
        trajectory: Array of shape (T+1, n)
        rule: Output rule
        rng: Output generator of the run
        grad_norms: Measured gradient norms per iterate (best-gradient only)

    Returns:
        (index, point)
    """
    points = np.asarray(trajectory, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    T = len(points) - 1
    if T < 1:
        raise DomainError("trajectory needs at least x_0 and x_1")
    if rule.kind == "best-gradient":
        if grad_norms is None or len(grad_norms) != T + 1:
            raise ConfigurationError("best-gradient output needs one gradient norm per iterate")
        index = int(np.argmin(grad_norms))
    else:
        index = draw_output_index(rule, T, rng)
    return index, points[index].copy()


# SGD


class _Accumulator:
    """Running statistics over x_0..x_T, thinned storage plus exact sums."""

    def __init__(self, T: int, thinning: int, rule: OutputRule, output_index: Optional[int]):
        self.T = T
        self.thinning = thinning
        self.rule = rule
        self.output_index = output_index
        self.t, self.f_gap, self.grad_norm, self.dist_sq = [], [], [], []
        self.sum_tail = 0.0
        self.sum_head = 0.0
        self.sum_grad_tail = 0.0
        self.sum_grad_head = 0.0
        self.tail_f = 0.0
        self.tail_g = 0.0
        self.geo_f = 0.0
        self.geo_g = 0.0
        self.ratio = 1.0 - rule.rate if rule.kind == "geometric-weighted" and rule.rate else 1.0
        self.best = (math.inf, 0, 0.0, None, 0.0)  # grad, index, gap, point, dist
        self.output: Optional[Tuple[np.ndarray, float, float, float]] = None

    def add(self, index: int, x: np.ndarray, gap: float, gnorm: float, dist: float) -> None:
        if index % self.thinning == 0 or index == self.T:
            self.t.append(index)
            self.f_gap.append(gap)
            self.grad_norm.append(gnorm)
            self.dist_sq.append(dist)
        if index >= 1:
            self.sum_tail += gap
            self.sum_grad_tail += gnorm
        if index <= self.T - 1:
            self.sum_head += gap
            self.sum_grad_head += gnorm
            self.geo_f = self.ratio * self.geo_f + gap
            self.geo_g = self.ratio * self.geo_g + gnorm
        if index >= _tail_start(self.T):
            self.tail_f += gap
            self.tail_g += gnorm
        if gnorm < self.best[0]:
            self.best = (gnorm, index, gap, x.copy(), dist)
        if index == self.output_index:
            self.output = (x.copy(), gap, gnorm, dist)

    def expected_output(self, last: Tuple[float, float]) -> Tuple[float, float]:
        """Exact expectation of (f_gap, grad_norm) under the output distribution."""
        T = self.T
        kind = self.rule.kind
        if kind == "uniform-random":
            return self.sum_tail / T, self.sum_grad_tail / T
        if kind == "geometric-weighted":
            rate = self.rule.rate or 0.0
            if rate == 0.0:
                return self.sum_head / T, self.sum_grad_head / T
            norm = rate / -math.expm1(T * math.log1p(-rate))
            return self.geo_f * norm, self.geo_g * norm
        if kind == "tail-uniform":
            count = T - _tail_start(T) + 1
            return self.tail_f / count, self.tail_g / count
        if kind == "best-gradient":
            return self.best[2], self.best[0]
        return last


def sgd_run(
    f: Objective,
    oracle: Oracle,
    schedule: StepSchedule,
    T: int,
    rule: OutputRule,
    run_index: int = 0,
    start: Optional[Sequence[float]] = None,
    certificate: Optional[ConstantsCertificate] = None,
    thinning: Optional[int] = None,
    stream: Optional[OracleStream] = None,
    output_stage: int = 0,
    config_digest: str = "",
) -> RunRecord:
    """
    Run T steps of x_t = x_{t-1} - alpha_t g(x_{t-1}) and measure the trajectory.

    Args:
        f: Objective
        oracle: Oracle for f
        schedule: Resolved step schedule
        T: Number of oracle queries
        rule: Output rule; a geometric rule without a rate takes the schedule's gamma*mu*alpha
        run_index: Run number, selects the run seed
        start: x_0 (defaults to x* + 1 in every coordinate)
        certificate: Constants used for the divergence guard, box flag and contraction check
        thinning: Store every k-th iterate (default from T)
        stream: Continue an existing oracle stream (two-phase runs)
        output_stage: Stage number for the output generator
        config_digest: Digest stamped on the record

    Returns:
        RunRecord with thinned series, exact running sums and the selected output

    Raises:
        DivergenceError: On a non-finite iterate or ||x - x*|| > 1e6 max(R, 1)
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    x_star = f.minimizer
    x = as_point(start, f.dimension).copy() if start is not None else x_star + 1.0
    cert = certificate or f.declared
    R = cert.R if cert is not None and cert.R > 0.0 else float(np.linalg.norm(x - x_star))
    limit = DIVERGENCE_FACTOR * max(R, 1.0)

    if rule.kind == "geometric-weighted" and rule.rate is None:
        if schedule.rate is None:
            raise ConfigurationError("geometric-weighted output needs a rate; schedule has no gamma*mu*alpha")
        rule = OutputRule(kind=rule.kind, rate=schedule.rate)

    stream = stream or oracle.open_run(run_index)
    rng = output_generator(stream.seed, output_stage)
    thin = thinning or default_thinning(T)
    acc = _Accumulator(T, thin, rule, draw_output_index(rule, T, rng))

    check_contraction = (
        oracle.deterministic
        and cert is not None
        and cert.mu > 0.0
        and cert.L is not None
        and schedule.constant
        and schedule.alpha(1) <= cert.gamma / (2.0 * cert.L) * (1.0 + CONTRACTION_RTOL)
    )
    factor = 1.0 - cert.gamma * cert.mu * schedule.alpha(1) if check_contraction else 1.0
    violations = 0
    box_flagged = False
    f_star = f.min_value
    position = stream.next_position
    calls_before = stream.calls
    started = time.perf_counter()

    for t in range(1, T + 1):
        sample = stream.query(x, position)
        position += 1
        dist = float(np.dot(x - x_star, x - x_star))
        acc.add(t - 1, x, max(sample.f_exact - f_star, 0.0), float(np.linalg.norm(sample.grad_exact)), dist)

        x_next = x - schedule.alpha(t) * sample.g
        if not np.all(np.isfinite(x_next)):
            logger.warning(f"Run {run_index} diverged at step {t}: non-finite iterate")
            raise DivergenceError(f"non-finite iterate at step {t}", t, x.tolist())
        offset = np.linalg.norm(x_next - x_star)
        if offset > limit:
            logger.warning(f"Run {run_index} diverged at step {t}: ||x - x*|| = {offset:.3g}")
            raise DivergenceError(f"||x - x*|| = {offset:.3g} exceeds {limit:.3g} at step {t}", t, x.tolist())
        if check_contraction:
            dist_next = float(offset**2)
            if dist_next > factor * dist * (1.0 + CONTRACTION_RTOL) + 1e-300:
                violations += 1
                logger.warning(f"Run {run_index}: contraction violated at step {t} ({dist_next:.6g} > {factor * dist:.6g})")
        if not box_flagged and cert is not None and cert.box is not None and not cert.box.contains(x_next):
            box_flagged = True
            logger.warning(f"Run {run_index} left the certification box at step {t}")
        x = x_next

    final_gap = max(f.value(x) - f_star, 0.0)
    final_grad = float(np.linalg.norm(f.gradient(x)))
    final_dist = float(np.dot(x - x_star, x - x_star))
    acc.add(T, x, final_gap, final_grad, final_dist)

    if acc.output is None:
        _, index, gap, point, dist = acc.best
        acc.output_index = index
        acc.output = (point, gap, acc.best[0], dist)
    out_point, out_gap, out_grad, out_dist = acc.output
    expected_gap, expected_grad = acc.expected_output((final_gap, final_grad))

    averaging = schedule.averaging
    avg = (acc.sum_tail if averaging == "1..T" else acc.sum_head) / T
    record = RunRecord(
        config_digest=config_digest,
        run_index=run_index,
        seed=stream.seed,
        T=T,
        thinning=thin,
        t=acc.t,
        f_gap=acc.f_gap,
        grad_norm=acc.grad_norm,
        dist_sq=acc.dist_sq,
        averaging=averaging,
        avg_subopt=avg,
        sum_f_gap_tail=acc.sum_tail,
        sum_f_gap_head=acc.sum_head,
        output_rule=rule.kind,
        output_index=acc.output_index,
        output_point=out_point.tolist(),
        output_f_gap=out_gap,
        output_grad_norm=out_grad,
        output_dist_sq=out_dist,
        expected_output_f_gap=expected_gap,
        expected_output_grad_norm=expected_grad,
        final_f_gap=final_gap,
        final_grad_norm=final_grad,
        final_dist_sq=final_dist,
        min_grad_norm=acc.best[0],
        min_grad_index=acc.best[1],
        oracle_calls=stream.calls - calls_before,
        stage_calls=[stream.calls - calls_before],
        contraction_violations=violations,
        box_violation=box_flagged,
        wall_time=time.perf_counter() - started,
    )
    logger.debug(f"Run {run_index}: T={T}, avg_subopt={avg:.6g}, final_f_gap={final_gap:.6g}")
    return record


# Stage-one solvers


class StageOneResult(BaseModel):
    """Output point of a stage-one solver with the iterations it used."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    point: np.ndarray
    iterations: int
    record: RunRecord


class StageOneSolver(ABC):
    """Named strategy mapping (objective, oracle, epsilon1) to a point within a declared budget."""

    name = ""

    @abstractmethod
    def budget(self, epsilon1: float, cert: ConstantsCertificate, sigma: float) -> int:
        """Iterations this solver declares for reaching epsilon1."""

    @abstractmethod
    def solve(
        self,
        f: Objective,
        oracle: Oracle,
        cert: ConstantsCertificate,
        start: np.ndarray,
        T: int,
        stream: OracleStream,
    ) -> StageOneResult:
        """Run exactly T oracle queries from start."""


def _require_smooth(cert: ConstantsCertificate) -> float:
    if cert.L is None:
        raise ConfigurationError("stage-one solvers need a smooth certificate (L)")
    return cert.L


class SgdQc(StageOneSolver):
    """SGD with the two-regime constant step, budgeted by qc_iterations."""

    name = "sgd-qc"

    def budget(self, epsilon1: float, cert: ConstantsCertificate, sigma: float) -> int:
        return qc_iterations(epsilon1, cert.R, sigma, _require_smooth(cert), cert.gamma)

    def solve(self, f, oracle, cert, start, T, stream) -> StageOneResult:
        schedule = make_schedule(ScheduleConfig(name="qc_constant"), cert, oracle.sigma, T)
        # Noiseless descent with alpha <= 1/L is monotone, so the last iterate beats the average
        rule = OutputRule(kind="last-iterate" if oracle.deterministic else "uniform-random")
        record = sgd_run(f, oracle, schedule, T, rule, stream.run_index, start, cert, stream=stream)
        return StageOneResult(point=np.asarray(record.output_point), iterations=T, record=record)


class SgdSqc(StageOneSolver):
    """SGD with the log-scaled step and geometric output; fixed step gamma/(2L) when noiseless."""

    name = "sgd-sqc"

    def budget(self, epsilon1: float, cert: ConstantsCertificate, sigma: float) -> int:
        L = _require_smooth(cert)
        if not cert.mu > 0.0:
            raise ConfigurationError("sgd-sqc needs mu > 0")
        if sigma > 0.0:
            return sqc_iterations(epsilon1, cert.gamma, cert.mu, L, cert.R, sigma)
        return det_sqc_iterations(epsilon1, cert.gamma, cert.mu, L, cert.R, cert.gamma / (2.0 * L))

    def solve(self, f, oracle, cert, start, T, stream) -> StageOneResult:
        L = _require_smooth(cert)
        if oracle.deterministic:
            schedule = fixed_schedule(cert.gamma / (2.0 * L), T, cert)
            rule = OutputRule(kind="last-iterate")
        else:
            schedule = make_schedule(ScheduleConfig(name="sqc_log"), cert, oracle.sigma, T)
            rule = OutputRule(kind="geometric-weighted", rate=schedule.rate)
        record = sgd_run(f, oracle, schedule, T, rule, stream.run_index, start, cert, stream=stream)
        return StageOneResult(point=np.asarray(record.output_point), iterations=T, record=record)


_STAGE_ONE: Dict[str, StageOneSolver] = {}


def register_stage_one(name: str, solver: StageOneSolver) -> None:
    """Register a stage-one strategy under name (replaces an existing entry)."""
    _STAGE_ONE[name] = solver
    logger.debug(f"Registered stage-one solver {name}")


def get_stage_one(name: str) -> StageOneSolver:
    try:
        return _STAGE_ONE[name]
    except KeyError:
        raise ConfigurationError(f"unknown stage-one solver {name!r}; known: {sorted(_STAGE_ONE)}") from None


register_stage_one(SgdQc.name, SgdQc())
register_stage_one(SgdSqc.name, SgdSqc())


# Two-phase drivers


def _merge(stage1: RunRecord, stage2: RunRecord, stage1_met: bool, config_digest: str) -> RunRecord:
    """
    One record for both stages: stage-one series up to (not including) step n1,
    then the stage-two series shifted by n1. Index n1 holds the stage-two start
    point, which is the stage-one output.
    """
    n1 = stage1.oracle_calls
    head = [i for i, t in enumerate(stage1.t) if t < n1]

    def joined(name: str) -> list:
        return [getattr(stage1, name)[i] for i in head] + list(getattr(stage2, name))

    merged = stage2.model_copy(
        update={
            "config_digest": config_digest,
            "T": n1 + stage2.T,
            "t": [stage1.t[i] for i in head] + [n1 + i for i in stage2.t],
            "f_gap": joined("f_gap"),
            "grad_norm": joined("grad_norm"),
            "dist_sq": joined("dist_sq"),
            "output_index": n1 + stage2.output_index,
            "min_grad_index": n1 + stage2.min_grad_index,
            "oracle_calls": n1 + stage2.oracle_calls,
            "stage_calls": [n1, stage2.oracle_calls],
            "stage1_met": stage1_met,
            "contraction_violations": stage1.contraction_violations + stage2.contraction_violations,
            "box_violation": stage1.box_violation or stage2.box_violation,
            "wall_time": stage1.wall_time + stage2.wall_time,
        }
    )
    return merged


def two_phase_det(
    f: Objective,
    stage1: StageOneSolver,
    epsilon: float,
    cert: ConstantsCertificate,
    start: Optional[Sequence[float]] = None,
    oracle: Optional[Oracle] = None,
    run_index: int = 0,
    config_digest: str = "",
) -> RunRecord:
    """
    Drive the gradient norm below epsilon: stage one to epsilon1, then GD with step 1/L.

    Args:
        f: Smooth objective
        stage1: Stage-one strategy
        epsilon: Target gradient norm
        cert: Certificate with gamma, L, R
        start: x_0
        oracle: Deterministic oracle (built when omitted)
        run_index: Run number
        config_digest: Digest stamped on the record

    Returns:
        RunRecord whose output is the stage-two iterate with minimal measured gradient norm

    Raises:
        StageFailure: If stage one ends above epsilon1 (checked with exact f)
    """
    L = _require_smooth(cert)
    oracle = oracle or Oracle(f, OracleConfig())
    if not oracle.deterministic:
        raise ConfigurationError("two_phase_det needs a deterministic oracle")
    plan = split_det(epsilon, cert.gamma, cert.R, L, stage1_budget=lambda e1: stage1.budget(e1, cert, 0.0))
    x0 = as_point(start, f.dimension) if start is not None else f.minimizer + 1.0
    stream = oracle.open_run(run_index)
    logger.info(
        f"Two-phase (deterministic): eps={epsilon}, eps1={plan.epsilon1:.6g}, "
        f"stages={plan.stage1_iters}/{plan.stage2_iters}"
    )

    first = stage1.solve(f, oracle, cert, x0, plan.stage1_iters, stream)
    gap = f.value(first.point) - f.min_value
    if gap > plan.epsilon1 * (1.0 + STAGE_GAP_TOL):
        raise StageFailure(f"stage one ended at f_gap {gap:.6g} > eps1 {plan.epsilon1:.6g} after {first.iterations} steps")

    schedule = fixed_schedule(plan.stage2_alpha, plan.stage2_iters, cert)
    second = sgd_run(
        f,
        oracle,
        schedule,
        plan.stage2_iters,
        OutputRule(kind="best-gradient"),
        run_index,
        first.point,
        cert,
        stream=stream,
        output_stage=1,
    )
    return _merge(first.record, second, True, config_digest)


def two_phase_sto(
    f: Objective,
    oracle: Oracle,
    epsilon: float,
    variant: str,
    cert: ConstantsCertificate,
    start: Optional[Sequence[float]] = None,
    run_index: int = 0,
    config_digest: str = "",
) -> RunRecord:
    """
    Stochastic two-phase method: SGD to epsilon1, then nonconvex SGD with a uniformly drawn output.

    Args:
        f: Smooth objective
        oracle: Stochastic oracle; sigma = 0 reduces to two_phase_det
        epsilon: Target expected gradient norm
        variant: "qc" (split_sto with sgd-qc) or "sqc" (split_sqc with sgd-sqc)
        cert: Certificate; the sqc variant needs mu > 0
        start: x_0
        run_index: Run number
        config_digest: Digest stamped on the record

    Returns:
        RunRecord; expected_output_grad_norm is the per-seed expectation over the output draw
    """
    L = _require_smooth(cert)
    if variant not in ("qc", "sqc"):
        raise ConfigurationError(f"variant must be 'qc' or 'sqc', got {variant!r}")
    solver = get_stage_one("sgd-qc" if variant == "qc" else "sgd-sqc")
    if oracle.deterministic:
        return two_phase_det(f, solver, epsilon, cert, start, oracle, run_index, config_digest)

    sigma = oracle.sigma
    if variant == "qc":
        plan = split_sto(epsilon, cert.gamma, cert.R, L, sigma)
    else:
        if not cert.mu > 0.0:
            raise ConfigurationError("the sqc variant needs a certificate with mu > 0")
        plan = split_sqc(epsilon, cert.gamma, cert.mu, L, sigma, cert.R)
    x0 = as_point(start, f.dimension) if start is not None else f.minimizer + 1.0
    stream = oracle.open_run(run_index)

    first = solver.solve(f, oracle, cert, x0, plan.stage1_iters, stream)
    gap = f.value(first.point) - f.min_value
    met = bool(gap <= plan.epsilon1 * (1.0 + STAGE_GAP_TOL))
    if not met:
        logger.debug(f"Run {run_index}: stage one ended at f_gap {gap:.6g} > eps1 {plan.epsilon1:.6g}")

    schedule = fixed_schedule(plan.stage2_alpha, plan.stage2_iters, cert)
    second = sgd_run(
        f,
        oracle,
        schedule,
        plan.stage2_iters,
        OutputRule(kind="uniform-random"),
        run_index,
        first.point,
        cert,
        stream=stream,
        output_stage=1,
    )
    return _merge(first.record, second, met, config_digest)
