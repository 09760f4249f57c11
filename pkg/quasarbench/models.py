"""
Pydantic data models for quasarbench.

Typed documents for everything that crosses an I/O boundary: problem and
certificate files, run configurations, run records and sweep summaries.
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MAX_SEED = 2**64 - 1

ProblemFamily = Literal["quadratic", "sine_bump", "plateau", "abs_quadratic", "strong_variant"]
ScheduleName = Literal["qc_constant", "sqc_log", "gower_log", "nonsmooth_constant", "nonsmooth_harmonic", "fixed"]
OutputRuleKind = Literal["uniform-random", "geometric-weighted", "tail-uniform", "last-iterate", "best-gradient"]
StatisticKind = Literal["avg-subopt", "output-subopt", "output-grad-norm", "dist-sq"]


def _finite_vector(v: List[float], field_name: str) -> List[float]:
    if len(v) < 1:
        raise ValueError(f"{field_name} must have dimension >= 1")
    if not all(np.isfinite(v)):
        raise ValueError(f"{field_name} must have finite entries, got {v}")
    return [float(c) for c in v]


class Box(BaseModel):
    """Axis-aligned certification region."""

    lower: List[float]
    upper: List[float]

    @model_validator(mode="after")
    def check_bounds(self) -> "Box":
        _finite_vector(self.lower, "lower")
        _finite_vector(self.upper, "upper")
        if len(self.lower) != len(self.upper):
            raise ValueError(f"Box bounds differ in dimension: {len(self.lower)} vs {len(self.upper)}")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"Box lower bounds must be below upper bounds: {self.lower} / {self.upper}")
        return self

    @classmethod
    def cube(cls, radius: float, dimension: int, center: Optional[List[float]] = None) -> "Box":
        """Cube of half-width radius, centred on center (origin by default)."""
        c = center if center is not None else [0.0] * dimension
        return cls(lower=[ci - radius for ci in c], upper=[ci + radius for ci in c])

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def contains(self, x: Any, tol: float = 0.0) -> bool:
        """True when every coordinate of x lies in the box (up to tol)."""
        arr = np.asarray(x, dtype=float)
        return bool(np.all(arr >= np.asarray(self.lower) - tol) and np.all(arr <= np.asarray(self.upper) + tol))


class ConstantsCertificate(BaseModel):
    """Structural constants (gamma, mu, L, G, R) with provenance."""

    model_config = ConfigDict(extra="ignore")

    gamma: float
    mu: float = 0.0
    L: Optional[float] = None  # None for non-smooth members, which advertise G instead
    G: Optional[float] = None  # None until certified on a box
    R: float = 0.0
    box: Optional[Box] = None
    grid_points: int = 0
    provenance: Literal["analytic", "grid-certified"] = "analytic"

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        if not (0.0 < v <= 1.0):
            raise ValueError(f"gamma must lie in (0, 1], got {v}")
        return v

    @field_validator("mu", "R")
    @classmethod
    def validate_nonnegative(cls, v: float) -> float:
        if not (v >= 0.0 and np.isfinite(v)):
            raise ValueError(f"constant must be finite and >= 0, got {v}")
        return v

    @field_validator("G")
    @classmethod
    def validate_G(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not (v > 0.0 and np.isfinite(v)):
            raise ValueError(f"G must be finite and > 0, got {v}")
        return v

    @field_validator("L")
    @classmethod
    def validate_L(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not (v > 0.0 and np.isfinite(v)):
            raise ValueError(f"L must be finite and > 0, got {v}")
        return v

    @property
    def strongly_quasar(self) -> bool:
        return self.mu > 0.0

    @property
    def smooth(self) -> bool:
        return self.L is not None


class CertificationReport(BaseModel):
    """Result of a certification sweep."""

    certificate: ConstantsCertificate
    worst_point_gamma: List[float]
    worst_point_mu: Optional[List[float]] = None
    min_gap: float
    function_class: str = ""


class ProblemSpec(BaseModel):
    """Serializable problem document: {family, params, dimension, minimizer, certificate}."""

    model_config = ConfigDict(extra="ignore")

    family: ProblemFamily
    params: Dict[str, Any] = Field(default_factory=dict)
    dimension: int = 1
    minimizer: Optional[List[float]] = None
    start: Optional[List[float]] = None  # x0 for runs
    certificate: Optional[ConstantsCertificate] = None

    @field_validator("dimension")
    @classmethod
    def validate_dimension(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"dimension must be >= 1, got {v}")
        return v

    @model_validator(mode="after")
    def check_vectors(self) -> "ProblemSpec":
        for name in ("minimizer", "start"):
            value = getattr(self, name)
            if value is None:
                continue
            _finite_vector(value, name)
            if len(value) != self.dimension:
                raise ValueError(f"{name} has dimension {len(value)}, expected {self.dimension}")
        return self


class OracleConfig(BaseModel):
    """Deterministic oracle D(f) or stochastic oracle S(f, sigma)."""

    model_config = ConfigDict(extra="ignore")

    kind: Literal["deterministic", "stochastic"] = "deterministic"
    sigma: float = 0.0
    noise_model: Literal["gaussian", "sphere"] = "gaussian"
    master_seed: int = 0

    @field_validator("sigma")
    @classmethod
    def validate_sigma(cls, v: float) -> float:
        if not (v >= 0.0 and np.isfinite(v)):
            raise ValueError(f"sigma must be finite and >= 0, got {v}")
        return v

    @field_validator("master_seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if not (0 <= v <= MAX_SEED):
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {v}")
        return v

    @model_validator(mode="after")
    def check_kind(self) -> "OracleConfig":
        if self.kind == "deterministic" and self.sigma != 0.0:
            raise ValueError("deterministic oracles must have sigma = 0")
        return self


class ScheduleConfig(BaseModel):
    """Schedule name plus overrides of the certified constants (R, sigma, L, gamma, mu, G, alpha, beta)."""

    name: ScheduleName = "qc_constant"
    overrides: Dict[str, float] = Field(default_factory=dict)


class OutputRule(BaseModel):
    """Output selection rule; rate is gamma*mu*alpha for the geometric rule."""

    kind: OutputRuleKind = "uniform-random"
    rate: Optional[float] = None

    @model_validator(mode="after")
    def check_rate(self) -> "OutputRule":
        if self.kind == "geometric-weighted" and self.rate is not None and not (0.0 <= self.rate < 1.0):
            raise ValueError(f"geometric-weighted rule requires rate in [0, 1), got {self.rate}")
        return self


class CertifyConfig(BaseModel):
    """Certification parameters."""

    box: Optional[Box] = None
    grid_points: int = 100_000
    samples: int = 10_000


class ExperimentConfig(BaseModel):
    """A run or sweep configuration document."""

    model_config = ConfigDict(extra="ignore")

    name: str = ""
    claim: Optional[str] = None
    problem: ProblemSpec
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    mode: Literal["sgd", "two-phase-det", "two-phase-sto"] = "sgd"
    variant: Literal["qc", "sqc"] = "qc"
    stage_one: str = "sgd-qc"
    T: Optional[int] = None
    T_grid: Optional[List[int]] = None
    epsilon: Optional[float] = None
    output_rule: OutputRule = Field(default_factory=OutputRule)
    seeds: int = 1
    criterion: StatisticKind = "avg-subopt"
    thinning: Optional[int] = None
    bound: Optional[str] = None
    bound_slack: float = 1.0
    compare_gower_beta: Optional[float] = None
    certify: CertifyConfig = Field(default_factory=CertifyConfig)

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"seeds must be >= 1, got {v}")
        return v

    @field_validator("T")
    @classmethod
    def validate_T(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"T must be >= 1, got {v}")
        return v

    @field_validator("T_grid")
    @classmethod
    def validate_grid(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is None:
            return v
        if not v or any(t < 1 for t in v):
            raise ValueError(f"T_grid must be non-empty with every T >= 1, got {v}")
        if len(set(v)) != len(v):
            raise ValueError(f"T_grid entries must be distinct, got {v}")
        return sorted(v)


class RunRecord(BaseModel):
    """Seeded trajectory statistics plus the selected output iterate."""

    config_digest: str = ""
    run_index: int = 0
    seed: int = 0
    T: int
    thinning: int = 1
    t: List[int] = Field(default_factory=list)
    f_gap: List[float] = Field(default_factory=list)
    grad_norm: List[float] = Field(default_factory=list)
    dist_sq: List[float] = Field(default_factory=list)

    averaging: Literal["1..T", "0..T-1"] = "1..T"
    avg_subopt: float = 0.0
    sum_f_gap_tail: float = 0.0  # sum over t = 1..T
    sum_f_gap_head: float = 0.0  # sum over t = 0..T-1

    output_rule: OutputRuleKind = "uniform-random"
    output_index: int = 0
    output_point: List[float] = Field(default_factory=list)
    output_f_gap: float = 0.0
    output_grad_norm: float = 0.0
    output_dist_sq: float = 0.0
    expected_output_f_gap: float = 0.0
    expected_output_grad_norm: float = 0.0

    final_f_gap: float = 0.0
    final_grad_norm: float = 0.0
    final_dist_sq: float = 0.0
    min_grad_norm: float = 0.0
    min_grad_index: int = 0

    oracle_calls: int = 0
    stage_calls: List[int] = Field(default_factory=list)
    stage1_met: Optional[bool] = None
    contraction_violations: int = 0
    box_violation: bool = False
    wall_time: float = 0.0

    @field_validator("f_gap")
    @classmethod
    def validate_f_gap(cls, v: List[float]) -> List[float]:
        if v and min(v) < -1e-12:
            raise ValueError(f"f_gap must be >= -1e-12, got minimum {min(v)}")
        return v

    @model_validator(mode="after")
    def check_series(self) -> "RunRecord":
        n = len(self.t)
        if not (len(self.f_gap) == len(self.grad_norm) == len(self.dist_sq) == n):
            raise ValueError("trajectory series lengths disagree")
        return self


class RunManifest(BaseModel):
    """Completion marker of a run set; written only after every cell has finished."""

    config_digest: str
    runs: int
    failures: int = 0


class SummaryRow(BaseModel):
    """One (T, statistic) cell of a sweep."""

    config_digest: str = ""
    T: int
    statistic: StatisticKind
    mean: float
    ci95: float
    seeds: int
    bound: Optional[float] = None
    passed: Optional[bool] = None


class SweepSummary(BaseModel):
    """Aggregated sweep over a T grid for one problem/algorithm pair."""

    statistic: StatisticKind
    label: str = ""
    rows: List[SummaryRow] = Field(default_factory=list)

    @property
    def verdict(self) -> Optional[bool]:
        """All rows pass; None when no row carries a verdict."""
        verdicts = [row.passed for row in self.rows if row.passed is not None]
        return all(verdicts) if verdicts else None


class RateFit(BaseModel):
    """Log-log least-squares fit."""

    slope: float
    intercept: float
    r_squared: float
    T_min: float
    T_max: float
    n_points: int

    @field_validator("r_squared")
    @classmethod
    def clip_r_squared(cls, v: float) -> float:
        return min(1.0, max(0.0, v))


class ExponentReport(BaseModel):
    """Fitted rate compared with the predicted exponent."""

    fit: Optional[RateFit] = None
    predicted: float
    tolerance: float
    verdict: Literal["pass", "fail", "inconclusive"]
    reason: str = ""


class ComplexityEstimate(BaseModel):
    """Smallest grid T meeting a criterion."""

    criterion: Literal["subopt", "grad-norm"]
    epsilon: float
    T: int
    mean: float
    ci95: float
    confident: bool
