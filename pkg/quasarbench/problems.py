"""
Test-objective library and numerical certification of structural constants.

Every objective has a declared minimizer x* and hand-coded (sub)gradients. The
certification sweeps estimate gamma, mu, L and G on a compact box; schedules
consume the resulting ConstantsCertificate.
"""

import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from quasarbench.errors import CertificationError, ConfigurationError, DomainError, EvaluationError
from quasarbench.models import Box, CertificationReport, ConstantsCertificate, ProblemSpec

logger = logging.getLogger(__name__)

SAFETY_MARGIN = 0.05
MIN_GRID_POINTS = 1_000
CHUNK_SIZE = 1 << 16
MU_EXCLUSION_RADIUS = 1e-6
GAP_FLOOR = 1e-12


def as_point(x: Sequence[float], dimension: Optional[int] = None) -> np.ndarray:
    """
    Convert x to a finite float vector.

    Args:
        x: Coordinates
        dimension: Expected dimension, if known

    Returns:
        1-D float64 array

    Raises:
        DomainError: If x is empty, non-finite or of the wrong dimension
    """
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size < 1:
        raise DomainError("points must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"points must be finite, got {arr.tolist()}")
    if dimension is not None and arr.size != dimension:
        raise DomainError(f"expected a point of dimension {dimension}, got {arr.size}")
    return arr


class Objective(ABC):
    """
    Evaluatable function with a known minimizer.

    Subclasses implement _value and _gradient on arrays of shape (..., n);
    the public methods add finiteness checks. Instances are immutable and
    safe to share between threads.
    """

    family = "objective"
    smooth = True

    def __init__(self, minimizer: Sequence[float], declared: Optional[ConstantsCertificate] = None):
        x_star = as_point(minimizer).copy()
        x_star.setflags(write=False)
        self._minimizer = x_star
        self._declared = declared
        self._min_value = float(self._value(x_star))

    @property
    def dimension(self) -> int:
        return int(self._minimizer.size)

    @property
    def minimizer(self) -> np.ndarray:
        return self._minimizer

    @property
    def min_value(self) -> float:
        return self._min_value

    @property
    def declared(self) -> Optional[ConstantsCertificate]:
        return self._declared

    @abstractmethod
    def _value(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _gradient(self, x: np.ndarray) -> np.ndarray:
        ...

    def value(self, x: np.ndarray) -> float:
        """f(x) at a single point."""
        out = float(self._value(np.asarray(x, dtype=float)))
        if not math.isfinite(out):
            raise EvaluationError(f"{self.family}: non-finite value at {np.asarray(x).tolist()}")
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient (or the deterministic subgradient selection) at a single point."""
        out = self._gradient(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.family}: non-finite gradient at {np.asarray(x).tolist()}")
        return out

    def values(self, points: np.ndarray) -> np.ndarray:
        """Batch f over rows of points."""
        out = self._value(np.asarray(points, dtype=float))
        if not np.all(np.isfinite(out)):
            bad = int(np.argmin(np.isfinite(out)))
            raise EvaluationError(f"{self.family}: non-finite value at {np.asarray(points)[bad].tolist()}")
        return out

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Batch gradients over rows of points."""
        out = self._gradient(np.asarray(points, dtype=float))
        if not np.all(np.isfinite(out)):
            bad = int(np.argmin(np.all(np.isfinite(out), axis=-1)))
            raise EvaluationError(f"{self.family}: non-finite gradient at {np.asarray(points)[bad].tolist()}")
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dimension={self.dimension})"


class Quadratic(Objective):
    """f(x) = 1/2 (x - x*)^T A (x - x*) with A symmetric positive semidefinite."""

    family = "quadratic"

    def __init__(self, A: Sequence[Sequence[float]], minimizer: Optional[Sequence[float]] = None):
        matrix = np.atleast_2d(np.asarray(A, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError(f"A must be square, got shape {matrix.shape}")
        if not np.allclose(matrix, matrix.T):
            raise ConfigurationError("A must be symmetric")
        eigenvalues = np.linalg.eigvalsh(matrix)
        if eigenvalues[0] < -1e-12 or eigenvalues[-1] <= 0.0:
            raise ConfigurationError(f"A must be PSD and nonzero, eigenvalues {eigenvalues.tolist()}")
        matrix.setflags(write=False)
        self._A = matrix
        self.lambda_min = max(0.0, float(eigenvalues[0]))
        self.lambda_max = float(eigenvalues[-1])
        x_star = minimizer if minimizer is not None else [0.0] * matrix.shape[0]
        declared = ConstantsCertificate(gamma=1.0, mu=self.lambda_min, L=self.lambda_max)
        super().__init__(x_star, declared)

    def _value(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        return 0.5 * np.einsum("...i,ij,...j->...", d, self._A, d)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        return (x - self._minimizer) @ self._A


class SineBump(Objective):
    """Separable sum of d_i^2 + a*sin^2(b*d_i), d = x - x*; nonconvex but L-smooth with L = 2 + 2ab^2."""

    family = "sine_bump"

    def __init__(self, a: float = 0.1, b: float = 5.0, minimizer: Optional[Sequence[float]] = None, dimension: int = 1):
        if a < 0 or b <= 0:
            raise ConfigurationError(f"sine_bump needs a >= 0 and b > 0, got a={a}, b={b}")
        self.a = float(a)
        self.b = float(b)
        self.analytic_L = 2.0 + 2.0 * self.a * self.b**2
        x_star = minimizer if minimizer is not None else [0.0] * dimension
        # gamma is only known from the grid oracle
        super().__init__(x_star, None)

    def _value(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        return np.sum(d**2 + self.a * np.sin(self.b * d) ** 2, axis=-1)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        return 2.0 * d + self.a * self.b * np.sin(2.0 * self.b * d)


class Plateau(Objective):
    """
    Radial piecewise-linear profile phi(r), r = ||x - x*||.

    phi(r) = r for r <= 1 and 1 + 0.5(r - 1) beyond; non-smooth, nonconvex,
    1/2-quasar-convex with subgradient norm at most 1.
    """

    family = "plateau"
    smooth = False

    def __init__(self, minimizer: Optional[Sequence[float]] = None, dimension: int = 1):
        x_star = minimizer if minimizer is not None else [0.0] * dimension
        super().__init__(x_star, ConstantsCertificate(gamma=0.5, mu=0.0, L=None, G=1.0))

    def _value(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x - self._minimizer, axis=-1)
        return np.where(r <= 1.0, r, 1.0 + 0.5 * (r - 1.0))

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        slope = np.where(r <= 1.0, 1.0, 0.5)
        # subgradient 0 at the kink x = x*
        safe_r = np.where(r > 0.0, r, 1.0)
        return np.where(r > 0.0, slope * d / safe_r, 0.0)


class AbsQuadratic(Objective):
    """f(x) = sum |d_i| + c ||d||^2; convex, non-smooth, (1, 2c)-strongly-quasar-convex."""

    family = "abs_quadratic"
    smooth = False

    def __init__(self, c: float = 0.0, minimizer: Optional[Sequence[float]] = None, dimension: int = 1):
        if c < 0:
            raise ConfigurationError(f"abs_quadratic needs c >= 0, got {c}")
        self.c = float(c)
        x_star = minimizer if minimizer is not None else [0.0] * dimension
        super().__init__(x_star, ConstantsCertificate(gamma=1.0, mu=2.0 * self.c, L=None))

    def _value(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        return np.sum(np.abs(d), axis=-1) + self.c * np.sum(d**2, axis=-1)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        d = x - self._minimizer
        return np.sign(d) + 2.0 * self.c * d


class StrongVariant(Objective):
    """
    g(x) = f(x) + (mu_add/2)||x - x*||^2, which keeps the minimizer of f.

    A (gamma, mu0)-strongly-quasar-convex base becomes
    (gamma, mu0 + mu_add(2/gamma - 1))-strongly-quasar-convex, and L grows by mu_add.
    """

    def __init__(self, base: Objective, mu_add: float):
        if mu_add < 0:
            raise ConfigurationError(f"mu_add must be >= 0, got {mu_add}")
        self.base = base
        self.mu_add = float(mu_add)
        self.family = f"strong_variant({base.family})"
        self.smooth = base.smooth
        declared = None
        if base.declared is not None:
            b = base.declared
            declared = ConstantsCertificate(
                gamma=b.gamma,
                mu=b.mu + self.mu_add * (2.0 / b.gamma - 1.0),
                L=(b.L + self.mu_add) if b.L is not None else None,
                # subgradients grow without bound on R^n; G comes from certify on a box
            )
        super().__init__(base.minimizer, declared)

    def _value(self, x: np.ndarray) -> np.ndarray:
        d = x - self.base.minimizer
        return self.base._value(x) + 0.5 * self.mu_add * np.sum(d**2, axis=-1)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        return self.base._gradient(x) + self.mu_add * (x - self.base.minimizer)


# Built-in family constructors


def quadratic(A: Sequence[Sequence[float]], minimizer: Optional[Sequence[float]] = None) -> Quadratic:
    return Quadratic(A, minimizer)


def sine_bump(a: float = 0.1, b: float = 5.0, minimizer: Optional[Sequence[float]] = None, dimension: int = 1) -> SineBump:
    return SineBump(a, b, minimizer, dimension)


def plateau(minimizer: Optional[Sequence[float]] = None, dimension: int = 1) -> Plateau:
    return Plateau(minimizer, dimension)


def abs_quadratic(c: float = 0.0, minimizer: Optional[Sequence[float]] = None, dimension: int = 1) -> AbsQuadratic:
    return AbsQuadratic(c, minimizer, dimension)


def strong_variant(f: Objective, mu_add: float) -> StrongVariant:
    return StrongVariant(f, mu_add)


def build_objective(spec: ProblemSpec) -> Objective:
    """
    Construct an Objective from its JSON problem document.

    Args:
        spec: Validated problem specification

    Returns:
        Objective instance

    Raises:
        ConfigurationError: If params do not fit the family
    """
    params = dict(spec.params)
    x_star = spec.minimizer
    n = spec.dimension
    try:
        if spec.family == "quadratic":
            if "A" in params:
                A = params["A"]
            else:
                A = np.diag(params.get("diag", [1.0] * n)).tolist()
            objective: Objective = Quadratic(A, x_star)
        elif spec.family == "sine_bump":
            objective = SineBump(params.get("a", 0.1), params.get("b", 5.0), x_star, n)
        elif spec.family == "plateau":
            objective = Plateau(x_star, n)
        elif spec.family == "abs_quadratic":
            objective = AbsQuadratic(params.get("c", 0.0), x_star, n)
        else:
            base_spec = ProblemSpec.model_validate(params["base"])
            objective = StrongVariant(build_objective(base_spec), float(params["mu_add"]))
    except KeyError as e:
        raise ConfigurationError(f"{spec.family}: missing parameter {e}") from e

    if objective.dimension != n:
        raise ConfigurationError(f"{spec.family}: built dimension {objective.dimension}, spec says {n}")
    return objective


# Gap predicates


def quasar_gap(f: Objective, x: np.ndarray, gamma: float) -> np.ndarray:
    """
    f(x*) - f(x) - (1/gamma) <grad f(x), x* - x>; nonnegative iff the quasar inequality holds at x.

    Args:
        f: Objective
        x: A point, or an array of points (rows)
        gamma: Quasar parameter in (0, 1]

    Returns:
        Gap (float for a single point, array for a batch)
    """
    if not (0.0 < gamma <= 1.0):
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    values = f.values(pts)
    grads = f.gradients(pts)
    inner = np.sum(grads * (f.minimizer - pts), axis=-1)
    gap = f.min_value - values - inner / gamma
    return float(gap) if np.ndim(gap) == 0 else gap


def strong_quasar_gap(f: Objective, x: np.ndarray, gamma: float, mu: float) -> np.ndarray:
    """quasar_gap minus (mu/2)||x - x*||^2."""
    if mu < 0:
        raise DomainError(f"mu must be >= 0, got {mu}")
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    dist_sq = np.sum((pts - f.minimizer) ** 2, axis=-1)
    gap = quasar_gap(f, pts, gamma) - 0.5 * mu * dist_sq
    return float(gap) if np.ndim(gap) == 0 else gap


# Grid sweeps


def _axis_count(grid_points: int, dimension: int) -> int:
    return max(2, int(math.ceil(grid_points ** (1.0 / dimension) - 1e-9)))


def _grid_chunks(box: Box, grid_points: int) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (chunk index, points) covering a tensor grid of about grid_points points."""
    n = box.dimension
    m = _axis_count(grid_points, n)
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(box.lower, box.upper)]
    total = m**n
    for index, start in enumerate(range(0, total, CHUNK_SIZE)):
        flat = np.arange(start, min(start + CHUNK_SIZE, total))
        coords = np.unravel_index(flat, (m,) * n)
        yield index, np.stack([axes[k][coords[k]] for k in range(n)], axis=-1)


def _sweep(box: Box, grid_points: int, kernel, jobs: int) -> List[Tuple[int, float, Optional[np.ndarray]]]:
    """Apply kernel to every grid chunk; results sorted by chunk index."""
    chunks = list(_grid_chunks(box, grid_points))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda item: (item[0],) + kernel(item[1]), chunks))
    else:
        results = [(index, *kernel(points)) for index, points in chunks]
    return sorted(results, key=lambda r: r[0])


def _check_box(f: Objective, box: Box) -> None:
    if box.dimension != f.dimension:
        raise ConfigurationError(f"box dimension {box.dimension} != objective dimension {f.dimension}")
    if not box.contains(f.minimizer):
        raise ConfigurationError(f"certification box must contain the minimizer {f.minimizer.tolist()}")


def _gamma_scan(f: Objective, box: Box, grid_points: int, jobs: int = 1) -> Tuple[float, np.ndarray]:
    """Infimum of <grad f(x), x - x*>/(f(x) - f*) over the grid and where it is attained."""
    _check_box(f, box)
    if grid_points < MIN_GRID_POINTS:
        raise ConfigurationError(f"grid_points must be >= {MIN_GRID_POINTS}, got {grid_points}")

    def kernel(points: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
        excess = f.values(points) - f.min_value
        inner = np.sum(f.gradients(points) * (points - f.minimizer), axis=-1)
        active = excess > GAP_FLOOR
        if not np.any(active):
            return math.inf, None
        bad = active & (inner <= 0.0)
        if np.any(bad):
            witness = points[int(np.argmax(bad))]
            raise CertificationError(
                f"{f.family} is not quasar-convex on the box: <grad f(x), x - x*> <= 0 at {witness.tolist()}",
                witness=witness.tolist(),
            )
        ratios = np.where(active, inner / np.where(active, excess, 1.0), math.inf)
        k = int(np.argmin(ratios))
        return float(ratios[k]), points[k]

    best, worst = math.inf, f.minimizer
    for _, ratio, point in _sweep(box, grid_points, kernel, jobs):
        if ratio < best:
            best, worst = ratio, point
    return best, np.asarray(worst)


def certify_gamma(f: Objective, box: Box, grid_points: int, jobs: int = 1) -> float:
    """
    Grid estimate of the quasar-convexity parameter, capped at 1.

    Args:
        f: Objective
        box: Certification box (must contain x*)
        grid_points: Total number of grid points (>= 1000)
        jobs: Worker threads for the chunked sweep

    Returns:
        gamma_hat in (0, 1]; 1 when f is constant on the box

    Raises:
        CertificationError: If some grid point has f(x) > f* but <grad f(x), x - x*> <= 0
    """
    ratio, _ = _gamma_scan(f, box, grid_points, jobs)
    return min(1.0, ratio)


def _mu_scan(f: Objective, gamma: float, box: Box, grid_points: int, jobs: int = 1) -> Tuple[float, np.ndarray]:
    _check_box(f, box)
    if not (0.0 < gamma <= 1.0):
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")

    def kernel(points: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
        d = points - f.minimizer
        dist_sq = np.sum(d**2, axis=-1)
        keep = dist_sq > MU_EXCLUSION_RADIUS**2
        if not np.any(keep):
            return math.inf, None
        excess = f.values(points) - f.min_value
        inner = np.sum(f.gradients(points) * d, axis=-1)
        ratios = np.where(keep, 2.0 * (inner / gamma - excess) / np.where(keep, dist_sq, 1.0), math.inf)
        k = int(np.argmin(ratios))
        return float(ratios[k]), points[k]

    best, worst = math.inf, f.minimizer
    for _, ratio, point in _sweep(box, grid_points, kernel, jobs):
        if ratio < best:
            best, worst = ratio, point
    return best, np.asarray(worst)


def certify_mu(f: Objective, gamma: float, box: Box, grid_points: int, jobs: int = 1) -> float:
    """
    Grid estimate of the strong-quasar parameter for a certified gamma.

    Points within 1e-6 of x* are excluded. Returns 0 when the infimum is <= 0.
    """
    ratio, _ = _mu_scan(f, gamma, box, grid_points, jobs)
    return max(0.0, ratio) if math.isfinite(ratio) else 0.0


def _uniform(box: Box, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(box.lower, box.upper, size=(count, box.dimension))


def certify_L(f: Objective, box: Box, samples: int = 10_000, seed: int = 0) -> float:
    """
    Sampled gradient-Lipschitz estimate times (1 + 0.05).

    Half the pairs are independent uniform pairs; the rest are near-coincident
    finite-difference probes along random and coordinate directions.

    Raises:
        ConfigurationError: For non-smooth objectives (certify G instead)
    """
    if not f.smooth:
        raise ConfigurationError(f"{f.family} is non-smooth; certify G instead of L")
    _check_box(f, box)
    rng = np.random.default_rng(seed)
    n = f.dimension
    diameter = float(np.linalg.norm(np.subtract(box.upper, box.lower)))
    h = 1e-6 * max(1.0, diameter)

    far = samples // 2
    near_random = samples // 4
    near_axis = max(1, samples - far - near_random)

    x = _uniform(box, far, rng)
    y = _uniform(box, far, rng)

    base = _uniform(box, near_random + near_axis, rng)
    directions = rng.standard_normal((near_random, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    axis_dirs = np.eye(n)[np.arange(near_axis) % n]
    probes = base + h * np.vstack([directions, axis_dirs])

    xs = np.vstack([x, base])
    ys = np.vstack([y, probes])
    step = np.linalg.norm(xs - ys, axis=1)
    keep = step > 0.0
    quotient = np.linalg.norm(f.gradients(xs) - f.gradients(ys), axis=1)[keep] / step[keep]
    L_hat = float(np.max(quotient))
    logger.debug(f"{f.family}: sampled L = {L_hat:.6g} over {int(keep.sum())} pairs")
    return L_hat * (1.0 + SAFETY_MARGIN)


def certify_G(f: Objective, box: Box, samples: int = 10_000, seed: int = 0) -> float:
    """Largest sampled (sub)gradient norm over the box and its vertices, times (1 + 0.05)."""
    _check_box(f, box)
    rng = np.random.default_rng(seed)
    points = [_uniform(box, samples, rng), f.minimizer[None, :]]
    if box.dimension <= 10:
        corners = np.array(np.meshgrid(*zip(box.lower, box.upper), indexing="ij")).reshape(box.dimension, -1).T
        points.append(corners)
    norms = np.linalg.norm(f.gradients(np.vstack(points)), axis=1)
    return float(np.max(norms)) * (1.0 + SAFETY_MARGIN)


def function_class(cert: ConstantsCertificate) -> str:
    """Name of the function class a certificate places the objective in."""
    if cert.smooth:
        return "F_sc" if cert.strongly_quasar else "F_c"
    return "nonsmooth-sqc" if cert.strongly_quasar else "nonsmooth-qc"


def certify(
    f: Objective,
    box: Box,
    grid_points: int = 100_000,
    samples: int = 10_000,
    start: Optional[Sequence[float]] = None,
    jobs: int = 1,
) -> CertificationReport:
    """
    Certify gamma, mu and L (smooth) or G (non-smooth) on a box.

    Args:
        f: Objective
        box: Certification box containing x*
        grid_points: Grid size for the gamma and mu sweeps
        samples: Pair/point samples for L or G
        start: Optional x0; sets R = ||x0 - x*|| and must lie in the box
        jobs: Worker threads for the grid sweeps

    Returns:
        CertificationReport with a grid-certified certificate

    Raises:
        CertificationError: If the objective is not quasar-convex on the box
    """
    logger.info(f"Certifying {f.family} (n={f.dimension}) on {grid_points} grid points")
    try:
        ratio, worst_gamma = _gamma_scan(f, box, grid_points, jobs)
    except CertificationError as e:
        logger.error(f"Certification failed: {e} (witness {e.witness})")
        raise
    gamma = min(1.0, ratio)
    mu_ratio, worst_mu = _mu_scan(f, gamma, box, grid_points, jobs)
    mu = max(0.0, mu_ratio) if math.isfinite(mu_ratio) else 0.0

    R = 0.0
    if start is not None:
        x0 = as_point(start, f.dimension)
        if not box.contains(x0):
            raise ConfigurationError(f"start point {x0.tolist()} lies outside the certification box")
        R = float(np.linalg.norm(x0 - f.minimizer))

    L = certify_L(f, box, samples) if f.smooth else None
    G = certify_G(f, box, samples)
    certificate = ConstantsCertificate(
        gamma=gamma,
        mu=mu,
        L=L,
        G=G,
        R=R,
        box=box,
        grid_points=_axis_count(grid_points, f.dimension) ** f.dimension,
        provenance="grid-certified",
    )

    # smallest gap under the certified constants, evaluated on the binding points
    probes = np.vstack([worst_gamma, worst_mu])
    min_gap = float(np.min(strong_quasar_gap(f, probes, gamma, mu)))
    report = CertificationReport(
        certificate=certificate,
        worst_point_gamma=np.asarray(worst_gamma).tolist(),
        worst_point_mu=np.asarray(worst_mu).tolist(),
        min_gap=min_gap,
        function_class=function_class(certificate),
    )
    logger.info(
        f"Certified {f.family}: gamma={gamma:.6g}, mu={mu:.6g}, L={L}, G={G:.6g}, "
        f"worst gamma point {report.worst_point_gamma}"
    )
    return report


def check_gradient(f: Objective, points: np.ndarray, h: float = 1e-5) -> float:
    """
    Largest relative error between the gradient and central differences of the value.

    Args:
        f: Smooth objective
        points: Array of points (rows)
        h: Difference step

    Returns:
        max ||g_fd - g|| / max(1, ||g||)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    fd = np.empty_like(pts)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        fd[:, k] = (f.values(pts + e) - f.values(pts - e)) / (2.0 * h)
    g = f.gradients(pts)
    err = np.linalg.norm(fd - g, axis=1) / np.maximum(1.0, np.linalg.norm(g, axis=1))
    return float(np.max(err))
