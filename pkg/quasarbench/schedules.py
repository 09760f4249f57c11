"""
Step-size schedules, phase splits, iteration counts and bound evaluators.

Everything here is a pure function of the certified constants. Hidden
constants of O(.) statements are explicit module constants so runs are
reproducible.
"""

import math
from typing import Callable, Dict, Optional, Sequence

from pydantic import BaseModel, Field, model_validator

from quasarbench.errors import ConfigurationError, DomainError, RegimeError
from quasarbench.models import ConstantsCertificate, ScheduleConfig, ScheduleName
from quasarbench.oracles import effective_G

QC_BOUND_CONSTANT = 4.0
STAGE2_DESCENT_CONSTANT = 2.0
STAGE2_SGD_CONSTANT = 16.0
SQC_THRESHOLD_NOISE = 3.0
SQC_THRESHOLD_SMOOTH = 6.0
_CEIL_GUARD = 1e-12
_MAX_T = 1 << 62


def _ceil(x: float) -> int:
    """Ceiling that ignores round-off just above an integer."""
    return int(math.ceil(x - _CEIL_GUARD * max(1.0, abs(x))))


def _smallest_T(predicate: Callable[[int], bool], lower: int = 1) -> int:
    """Smallest integer T >= lower with predicate(T), for predicates monotone in T."""
    if predicate(lower):
        return lower
    lo, hi = lower, max(lower + 1, 2 * lower)
    while not predicate(hi):
        lo, hi = hi, 2 * hi
        if hi > _MAX_T:
            raise RegimeError("no admissible iteration count below 2^62")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _positive(**values: float) -> None:
    for name, value in values.items():
        if value is None or not (value > 0.0) or not math.isfinite(value):
            raise DomainError(f"{name} must be finite and > 0, got {value}")


# Smooth quasar-convex SGD


def qc_constant_alpha(R: float, sigma: float, L: float, T: int) -> float:
    """
    Constant step of the two-regime rule: R/(2 sigma sqrt T) once T > R^2 L^2 / sigma^2, else 1/(2L).

    Args:
        R: Bound on ||x0 - x*||
        sigma: Noise level (0 selects the noiseless rule)
        L: Gradient Lipschitz constant
        T: Iteration count

    Returns:
        Step size, never above 1/(2L)
    """
    _positive(R=R, L=L)
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    if sigma > 0.0 and T > (R * L / sigma) ** 2:
        return min(R / (2.0 * sigma * math.sqrt(T)), 1.0 / (2.0 * L))
    return 1.0 / (2.0 * L)


def qc_bound(T: int, R: float, sigma: float, L: float, gamma: float) -> float:
    """4(R sigma/(gamma sqrt T) + R^2 L/(gamma T)), the bound on the averaged suboptimality."""
    _positive(gamma=gamma)
    return QC_BOUND_CONSTANT * (R * sigma / (gamma * math.sqrt(T)) + R**2 * L / (gamma * T))


def qc_sum_delta_bound(T: int, alpha: float, R: float, sigma: float, L: float, gamma: float) -> float:
    """
    Averaged-suboptimality bound for an explicit constant step.

    R^2/(2 gamma alpha T) + sigma^2 alpha/(2 gamma (1 - alpha L gamma))
    + (1/gamma - 1) L alpha^2 sigma^2 + (1/gamma - 1) L R^2 / T
    """
    _positive(alpha=alpha, gamma=gamma)
    if alpha * L * gamma >= 1.0:
        raise RegimeError(f"alpha * L * gamma must be < 1, got {alpha * L * gamma}")
    excess = 1.0 / gamma - 1.0
    return (
        R**2 / (2.0 * gamma * alpha * T)
        + sigma**2 * alpha / (2.0 * gamma * (1.0 - alpha * L * gamma))
        + excess * L * alpha**2 * sigma**2
        + excess * L * R**2 / T
    )


def qc_iterations(epsilon: float, R: float, sigma: float, L: float, gamma: float) -> int:
    """Smallest T with qc_bound(T) <= epsilon."""
    _positive(epsilon=epsilon)
    return _smallest_T(lambda T: qc_bound(T, R, sigma, L, gamma) <= epsilon)


# Strongly-quasar-convex SGD


def sqc_threshold(gamma: float, mu: float, L: float, R: float, sigma: float) -> int:
    """
    Minimal admissible T for the log-scaled schedule.

    T must exceed max{3 sigma^2/(gamma^2 mu^2 R^2), (6L/(gamma^2 mu))(log(2 L mu R^2/sigma^2) + 1)}.
    """
    _positive(gamma=gamma, mu=mu, L=L, R=R)
    if not sigma > 0.0:
        raise ConfigurationError("the log-scaled schedule needs sigma > 0; use a fixed step when noiseless")
    noise_term = SQC_THRESHOLD_NOISE * sigma**2 / (gamma**2 * mu**2 * R**2)
    smooth_term = SQC_THRESHOLD_SMOOTH * L / (gamma**2 * mu) * (math.log(2.0 * L * mu * R**2 / sigma**2) + 1.0)
    return int(math.floor(max(noise_term, smooth_term))) + 1


def sqc_log_alpha(gamma: float, mu: float, R: float, sigma: float, T: int, L: Optional[float] = None) -> float:
    """
    log(gamma^2 mu^2 T R^2 / sigma^2) / (gamma mu T).

    Raises:
        RegimeError: If T is below the admissible threshold (checked in full when L is given);
            carries the minimal admissible T
    """
    _positive(gamma=gamma, mu=mu, R=R)
    if not sigma > 0.0:
        raise ConfigurationError("the log-scaled schedule needs sigma > 0; use a fixed step when noiseless")
    if L is not None:
        minimal = sqc_threshold(gamma, mu, L, R, sigma)
    else:
        minimal = int(math.floor(SQC_THRESHOLD_NOISE * sigma**2 / (gamma**2 * mu**2 * R**2))) + 1
    if T < minimal:
        raise RegimeError(f"T = {T} is below the log-schedule threshold; minimal admissible T = {minimal}", minimal)
    return math.log(gamma**2 * mu**2 * T * R**2 / sigma**2) / (gamma * mu * T)


def sqc_bound(
    T: int,
    gamma: float,
    mu: float,
    L: float,
    R: float,
    sigma: float,
    alpha: Optional[float] = None,
) -> float:
    """
    Bound on E[f(X) - f*] for the geometric-weighted output.

    [alpha sigma^2/(2(gamma - alpha L)) + gamma mu q^T R^2/(2(gamma - alpha L))] / (1 - q^T),
    q = 1 - gamma mu alpha; alpha defaults to sqc_log_alpha.
    """
    if alpha is None:
        alpha = sqc_log_alpha(gamma, mu, R, sigma, T, L)
    _positive(alpha=alpha, L=L)
    slack = gamma - alpha * L
    if slack <= 0.0:
        raise RegimeError(f"gamma - alpha L must be > 0, got {slack}")
    rate = gamma * mu * alpha
    if not (0.0 < rate < 1.0):
        raise RegimeError(f"gamma mu alpha must lie in (0, 1), got {rate}")
    decay = (1.0 - rate) ** T
    numerator = alpha * sigma**2 / (2.0 * slack) + gamma * mu * decay * R**2 / (2.0 * slack)
    return numerator / (1.0 - decay)


def sqc_iterations(epsilon: float, gamma: float, mu: float, L: float, R: float, sigma: float) -> int:
    """Smallest admissible T whose sqc_bound is <= epsilon."""
    _positive(epsilon=epsilon)
    start = sqc_threshold(gamma, mu, L, R, sigma)

    def meets(T: int) -> bool:
        try:
            return sqc_bound(T, gamma, mu, L, R, sigma) <= epsilon
        except RegimeError:
            return False

    return _smallest_T(meets, start)


def det_sqc_iterations(epsilon: float, gamma: float, mu: float, L: float, R: float, alpha: float) -> int:
    """
    Noiseless budget from the contraction ||x_T - x*||^2 <= (1 - gamma mu alpha)^T R^2.

    Returns the smallest T with (L/2)(1 - gamma mu alpha)^T R^2 <= epsilon.
    """
    _positive(epsilon=epsilon, gamma=gamma, mu=mu, L=L, alpha=alpha)
    rate = gamma * mu * alpha
    if not (0.0 < rate < 1.0):
        raise RegimeError(f"gamma mu alpha must lie in (0, 1), got {rate}")
    ratio = L * R**2 / (2.0 * epsilon)
    if ratio <= 1.0:
        return 1
    return max(1, _ceil(math.log(ratio) / -math.log1p(-rate)))


def gower_alpha(gamma: float, mu: float, R: float, sigma: float, T: int) -> float:
    """
    log(mu^2 gamma^2 R^2 T/(2 sigma^2)) / (mu gamma T).

    Raises:
        RegimeError: If the log argument is <= 1
    """
    _positive(gamma=gamma, mu=mu, R=R)
    if not sigma > 0.0:
        raise ConfigurationError("the distance-optimal schedule needs sigma > 0")
    argument = mu**2 * gamma**2 * R**2 * T / (2.0 * sigma**2)
    if argument <= 1.0:
        minimal = int(math.floor(2.0 * sigma**2 / (mu**2 * gamma**2 * R**2))) + 1
        raise RegimeError(f"log argument {argument} <= 1; minimal admissible T = {minimal}", minimal)
    return math.log(argument) / (mu * gamma * T)


def gower_distance_bound(T: int, gamma: float, mu: float, R: float, sigma: float, alpha: float) -> float:
    """exp(-alpha mu gamma T) R^2 + 2 alpha sigma^2/(mu gamma), the bound on E||x_T - x*||^2."""
    _positive(alpha=alpha, gamma=gamma, mu=mu)
    return math.exp(-alpha * mu * gamma * T) * R**2 + 2.0 * alpha * sigma**2 / (mu * gamma)


def gower_function_bound(T: int, gamma: float, mu: float, R: float, sigma: float, alpha: float, L: float) -> float:
    """Function-value version of gower_distance_bound via f(x) - f* <= (L/2)||x - x*||^2."""
    return 0.5 * L * gower_distance_bound(T, gamma, mu, R, sigma, alpha)


def gower_varying_bound(alphas: Sequence[float], R: float, sigma: float, gamma: float, L: float) -> float:
    """
    Bound for an arbitrary step sequence.

    R^2/(2 sum a_t(gamma - L a_t)) + sigma^2 sum a_t^2 / sum a_t(gamma - L a_t)
    """
    if not alphas:
        raise DomainError("need at least one step size")
    if any(a <= 0.0 or gamma - L * a <= 0.0 for a in alphas):
        raise RegimeError("every step must satisfy 0 < alpha_t < gamma / L")
    weight = math.fsum(a * (gamma - L * a) for a in alphas)
    return R**2 / (2.0 * weight) + sigma**2 * math.fsum(a * a for a in alphas) / weight


def gower_constant_step_bound(T: int, R: float, sigma: float, gamma: float, L: float, beta: float) -> float:
    """
    Constant-step bound with alpha = beta/sqrt(T).

    R^2/(2 T alpha (gamma - L alpha)) + alpha sigma^2/(gamma - L alpha)

    Raises:
        RegimeError: If gamma <= L alpha
    """
    _positive(beta=beta, gamma=gamma, L=L)
    alpha = beta / math.sqrt(T)
    slack = gamma - L * alpha
    if slack <= 0.0:
        minimal = int(math.floor((beta * L / gamma) ** 2)) + 1
        raise RegimeError(f"gamma - L alpha = {slack} <= 0; minimal admissible T = {minimal}", minimal)
    return R**2 / (2.0 * T * alpha * slack) + alpha * sigma**2 / slack


# Non-smooth


def nonsmooth_alpha(R: float, G: float, T: int) -> float:
    """R/(G sqrt T)."""
    _positive(R=R, G=G)
    return R / (G * math.sqrt(T))


def nonsmooth_harmonic_alpha(gamma: float, mu: float, t: int) -> float:
    """1/(gamma mu t); lambda of the harmonic rule is taken as gamma*mu."""
    _positive(gamma=gamma, mu=mu)
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    return 1.0 / (gamma * mu * t)


def nonsmooth_bound(T: int, R: float, G: float, gamma: float) -> float:
    """RG/(gamma sqrt T)."""
    _positive(gamma=gamma)
    return R * G / (gamma * math.sqrt(T))


def nonsmooth_harmonic_distance_bound(t: int, G: float, gamma: float, mu: float) -> float:
    """G^2/(gamma^2 mu^2 t), the bound on E||x_t - x*||^2 under the harmonic rule."""
    _positive(gamma=gamma, mu=mu)
    return G**2 / (gamma**2 * mu**2 * t)


# Two-phase splits


class PhasePlan(BaseModel):
    """Intermediate target and per-stage budgets of a two-phase method."""

    epsilon: float
    epsilon1: float
    stage1_iters: int
    stage2_iters: int
    stage2_alpha: float
    stage1_leading: float = 0.0  # leading-order terms before named constants
    stage2_leading: float = 0.0
    constants: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_counts(self) -> "PhasePlan":
        if self.stage1_iters < 1 or self.stage2_iters < 1:
            raise ValueError(f"stage budgets must be >= 1, got {self.stage1_iters}, {self.stage2_iters}")
        return self

    @property
    def total_iters(self) -> int:
        return self.stage1_iters + self.stage2_iters


def split_det(
    epsilon: float,
    gamma: float,
    R: float,
    L: float,
    stage1_budget: Optional[Callable[[float], int]] = None,
) -> PhasePlan:
    """
    Deterministic split: epsilon1 = (R^2 epsilon^4/gamma)^(1/3), then GD with step 1/L.

    Args:
        epsilon: Target gradient norm
        gamma, R, L: Certified constants
        stage1_budget: Budget of the chosen stage-one solver as a function of epsilon1;
            defaults to noiseless SGD (qc_iterations with sigma = 0)

    Returns:
        PhasePlan with stage2_iters = ceil(2 L epsilon1/epsilon^2)
    """
    _positive(epsilon=epsilon, gamma=gamma, R=R, L=L)
    epsilon1 = (R**2 * epsilon**4 / gamma) ** (1.0 / 3.0)
    budget = stage1_budget or (lambda e1: qc_iterations(e1, R, 0.0, L, gamma))
    return PhasePlan(
        epsilon=epsilon,
        epsilon1=epsilon1,
        stage1_iters=max(1, int(budget(epsilon1))),
        stage2_iters=max(1, _ceil(STAGE2_DESCENT_CONSTANT * L * epsilon1 / epsilon**2)),
        stage2_alpha=1.0 / L,
        stage1_leading=math.sqrt(L * R**2 / (gamma * epsilon1)),
        stage2_leading=L * epsilon1 / epsilon**2,
        constants={"stage2_descent": STAGE2_DESCENT_CONSTANT},
    )


def stage2_sgd_alpha(epsilon1: float, L: float, sigma: float, K: int) -> float:
    """Nonconvex-SGD step min{1/(2L), sqrt(epsilon1/(L sigma^2 K))}."""
    if sigma == 0.0:
        return 1.0 / (2.0 * L)
    return min(1.0 / (2.0 * L), math.sqrt(epsilon1 / (L * sigma**2 * K)))


def split_sto(epsilon: float, gamma: float, R: float, L: float, sigma: float) -> PhasePlan:
    """
    Stochastic quasar split: epsilon1 = (R^2 epsilon^4/(gamma^2 L))^(1/3).

    This balances R^2 sigma^2/(gamma^2 epsilon1^2) against L epsilon1 sigma^2/epsilon^4.
    Stage one runs qc_iterations(epsilon1) SGD steps, stage two
    ceil(16 L epsilon1 sigma^2/epsilon^4) nonconvex-SGD steps. Falls back to
    split_det when sigma = 0.
    """
    if sigma == 0.0:
        return split_det(epsilon, gamma, R, L)
    _positive(epsilon=epsilon, gamma=gamma, R=R, L=L, sigma=sigma)
    epsilon1 = (R**2 * epsilon**4 / (gamma**2 * L)) ** (1.0 / 3.0)
    stage2_leading = L * epsilon1 * sigma**2 / epsilon**4
    K = max(1, _ceil(STAGE2_SGD_CONSTANT * stage2_leading))
    return PhasePlan(
        epsilon=epsilon,
        epsilon1=epsilon1,
        stage1_iters=qc_iterations(epsilon1, R, sigma, L, gamma),
        stage2_iters=K,
        stage2_alpha=stage2_sgd_alpha(epsilon1, L, sigma, K),
        stage1_leading=R**2 * sigma**2 / (gamma**2 * epsilon1**2),
        stage2_leading=stage2_leading,
        constants={"stage1_bound": QC_BOUND_CONSTANT, "stage2_sgd": STAGE2_SGD_CONSTANT},
    )


def split_sqc(
    epsilon: float,
    gamma: float,
    mu: float,
    L: float,
    sigma: float,
    R: Optional[float] = None,
) -> PhasePlan:
    """
    Strongly-quasar split: epsilon1 = epsilon^2/(gamma sqrt(L mu)).

    This balances sigma^2/(gamma^2 mu epsilon1) against L sigma^2 epsilon1/epsilon^4.
    Stage one uses sqc_iterations(epsilon1) when R is known, otherwise the
    leading term; stage two ceil(16 L sigma^2 epsilon1/epsilon^4).
    """
    _positive(epsilon=epsilon, gamma=gamma, mu=mu, L=L, sigma=sigma)
    epsilon1 = epsilon**2 / (gamma * math.sqrt(L * mu))
    stage1_leading = sigma**2 / (gamma**2 * mu * epsilon1)
    stage2_leading = L * sigma**2 * epsilon1 / epsilon**4
    if R is not None and R > 0.0:
        stage1 = sqc_iterations(epsilon1, gamma, mu, L, R, sigma)
    else:
        stage1 = max(1, _ceil(stage1_leading))
    K = max(1, _ceil(STAGE2_SGD_CONSTANT * stage2_leading))
    return PhasePlan(
        epsilon=epsilon,
        epsilon1=epsilon1,
        stage1_iters=stage1,
        stage2_iters=K,
        stage2_alpha=stage2_sgd_alpha(epsilon1, L, sigma, K),
        stage1_leading=stage1_leading,
        stage2_leading=stage2_leading,
        constants={"stage2_sgd": STAGE2_SGD_CONSTANT},
    )


def grad_from_subopt(epsilon_grad: float, L: float) -> float:
    """Suboptimality target epsilon_grad^2/(2L) that guarantees ||grad f|| <= epsilon_grad."""
    _positive(epsilon_grad=epsilon_grad, L=L)
    return epsilon_grad**2 / (2.0 * L)


def det_stationary_total(epsilon: float, gamma: float, R: float, L: float) -> float:
    """Leading-order total of the deterministic two-phase method."""
    plan = split_det(epsilon, gamma, R, L)
    return plan.stage1_leading + plan.stage2_leading


def sto_stationary_total(epsilon: float, gamma: float, R: float, L: float, sigma: float) -> float:
    """R^2 sigma^2/(gamma^2 e1^2) + R^2 L/(gamma e1) + L e1 sigma^2/epsilon^4 at the balanced e1."""
    plan = split_sto(epsilon, gamma, R, L, sigma)
    e1 = plan.epsilon1
    return plan.stage1_leading + R**2 * L / (gamma * e1) + plan.stage2_leading


def sqc_stationary_total(epsilon: float, gamma: float, mu: float, L: float, sigma: float) -> float:
    """Leading-order total of the strongly-quasar two-phase method, 2 sqrt(L/mu) sigma^2/(gamma epsilon^2)."""
    plan = split_sqc(epsilon, gamma, mu, L, sigma)
    return plan.stage1_leading + plan.stage2_leading


# Resolved schedules


class StepSchedule(BaseModel):
    """A named rule producing alpha_t for 1 <= t <= T."""

    kind: ScheduleName
    params: Dict[str, float] = Field(default_factory=dict)

    @property
    def T(self) -> int:
        return int(self.params["T"])

    @property
    def constant(self) -> bool:
        return self.kind != "nonsmooth_harmonic"

    @property
    def averaging(self) -> str:
        """Index range of the averaged suboptimality the matching bound controls."""
        return "0..T-1" if self.kind.startswith("nonsmooth") else "1..T"

    @property
    def rate(self) -> Optional[float]:
        """gamma * mu * alpha for constant schedules, when mu is known."""
        mu = self.params.get("mu", 0.0)
        if not self.constant or mu <= 0.0:
            return None
        return self.params.get("gamma", 1.0) * mu * self.params["alpha"]

    def alpha(self, t: int) -> float:
        """Step size at iteration t (1-based)."""
        if self.kind == "nonsmooth_harmonic":
            return nonsmooth_harmonic_alpha(self.params["gamma"], self.params["mu"], t)
        return self.params["alpha"]


def _require(params: Dict[str, float], name: str, *keys: str) -> None:
    missing = [k for k in keys if params.get(k) is None]
    if missing:
        raise ConfigurationError(f"schedule {name} needs {missing}; certify the problem or pass overrides")


def make_schedule(config: ScheduleConfig, cert: ConstantsCertificate, sigma: float, T: int) -> StepSchedule:
    """
    Resolve a named schedule against certified constants.

    Args:
        config: Schedule name and overrides
        cert: Certificate supplying gamma, mu, L, G, R
        sigma: Oracle noise level
        T: Iteration count

    Returns:
        StepSchedule with alpha resolved (for constant rules)

    Raises:
        RegimeError: If T is outside the schedule's admissible regime
        ConfigurationError: If a needed constant is missing
    """
    params: Dict[str, float] = {
        "R": cert.R,
        "sigma": sigma,
        "L": cert.L,
        "gamma": cert.gamma,
        "mu": cert.mu,
        "G": cert.G,
        "T": float(T),
    }
    params.update(config.overrides)
    name = config.name

    if name == "qc_constant":
        _require(params, name, "L")
        params["alpha"] = qc_constant_alpha(params["R"], params["sigma"], params["L"], T)
    elif name == "sqc_log":
        _require(params, name, "L")
        params["alpha"] = sqc_log_alpha(params["gamma"], params["mu"], params["R"], params["sigma"], T, params["L"])
    elif name == "gower_log":
        params["alpha"] = gower_alpha(params["gamma"], params["mu"], params["R"], params["sigma"], T)
    elif name == "nonsmooth_constant":
        _require(params, name, "G")
        G = effective_G(params["G"], params["sigma"])
        params["G_eff"] = G
        params["alpha"] = nonsmooth_alpha(params["R"], G, T)
    elif name == "nonsmooth_harmonic":
        if not params["mu"] > 0.0:
            raise ConfigurationError("nonsmooth_harmonic needs mu > 0")
    elif name == "fixed":
        if "alpha" not in config.overrides:
            raise ConfigurationError("fixed schedule needs an 'alpha' override")

    if name != "nonsmooth_harmonic" and not params["alpha"] > 0.0:
        raise ConfigurationError(f"schedule {name} produced a nonpositive step {params['alpha']}")
    return StepSchedule(kind=name, params={k: float(v) for k, v in params.items() if v is not None})


def fixed_schedule(alpha: float, T: int, cert: Optional[ConstantsCertificate] = None) -> StepSchedule:
    """Constant step alpha, carrying gamma/mu from cert for the geometric rate."""
    _positive(alpha=alpha)
    params = {"alpha": alpha, "T": float(T)}
    if cert is not None:
        params.update(gamma=cert.gamma, mu=cert.mu)
        if cert.L is not None:
            params["L"] = cert.L
    return StepSchedule(kind="fixed", params=params)
