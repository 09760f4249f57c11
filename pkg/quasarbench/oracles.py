"""
Deterministic and stochastic first-order oracles with seedable noise.

The stochastic oracle returns grad f(x) + xi with E[xi] = 0 and
E||xi||^2 = sigma^2. Noise for a stream position is drawn from a
counter-based Philox generator keyed by the run seed, in fixed-size blocks,
so it depends only on (master_seed, run_index, stream_position).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from quasarbench.errors import DeterminismError, DomainError
from quasarbench.models import MAX_SEED, OracleConfig
from quasarbench.problems import Objective

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024
NOISE_STREAM = 0
OUTPUT_STREAM = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """
    Seed of run `run_index` under `master_seed`.

    SplitMix64 stream: mix(master + (run_index + 1) * golden) mod 2^64. The
    golden increment is odd and the mixer is bijective, so the map is
    injective in run_index for a fixed master seed. The construction is part
    of the stored-results contract and must not change.

    Args:
        master_seed: 64-bit master seed
        run_index: Run number (>= 0)

    Returns:
        64-bit run seed
    """
    if run_index < 0:
        raise DomainError(f"run_index must be >= 0, got {run_index}")
    if not (0 <= master_seed <= MAX_SEED):
        raise DomainError(f"master_seed must be a 64-bit unsigned integer, got {master_seed}")
    return _mix64((master_seed + (run_index + 1) * _GOLDEN) & _MASK64)


def counter_generator(run_seed: int, block: int, stream: int) -> np.random.Generator:
    """Philox generator for one (run, stream, block) cell."""
    return np.random.Generator(np.random.Philox(key=run_seed, counter=[0, 0, block, stream]))


def effective_G(G_hat: float, sigma: float) -> float:
    """Bound on sqrt(E||g||^2) for noisy subgradients: G_hat + sigma."""
    return G_hat + sigma


@dataclass(frozen=True)
class GradientSample:
    """One oracle response; f_exact and grad_exact are for measurement only."""

    g: np.ndarray
    f_exact: float
    grad_exact: np.ndarray


class Oracle:
    """D(f) when sigma = 0, S(f, sigma) otherwise. Immutable; open one stream per run."""

    def __init__(self, f: Objective, config: OracleConfig):
        self.f = f
        self.config = config
        if config.kind == "stochastic":
            logger.debug("Stochastic oracle is unbiased for the gradient: E[g(x)] = grad f(x)")

    @property
    def sigma(self) -> float:
        return self.config.sigma

    @property
    def deterministic(self) -> bool:
        return self.config.sigma == 0.0

    def run_seed(self, run_index: int) -> int:
        return derive_run_seed(self.config.master_seed, run_index)

    def open_run(self, run_index: int) -> "OracleStream":
        """Stream handle for run `run_index`."""
        return OracleStream(self, run_index)


class OracleStream:
    """Per-run oracle handle enforcing strictly increasing stream positions."""

    def __init__(self, oracle: Oracle, run_index: int):
        self.oracle = oracle
        self.run_index = run_index
        self.seed = oracle.run_seed(run_index)
        self.calls = 0
        self._last_position: Optional[int] = None
        self._block_index = -1
        self._block: Optional[np.ndarray] = None

    @property
    def next_position(self) -> int:
        return 0 if self._last_position is None else self._last_position + 1

    def _noise(self, position: int) -> np.ndarray:
        block, offset = divmod(position, BLOCK_SIZE)
        if block != self._block_index:
            n = self.oracle.f.dimension
            rng = counter_generator(self.seed, block, NOISE_STREAM)
            z = rng.standard_normal((BLOCK_SIZE, n))
            sigma = self.oracle.sigma
            if self.oracle.config.noise_model == "gaussian":
                self._block = z * (sigma / math.sqrt(n))
            else:
                self._block = z * (sigma / np.linalg.norm(z, axis=1, keepdims=True))
            self._block_index = block
        return self._block[offset]

    def query(self, x: np.ndarray, stream_position: int) -> GradientSample:
        """
        Respond to a query at x.

        Args:
            x: Query point
            stream_position: Position in this run's noise stream

        Returns:
            GradientSample with g = grad f(x) + xi

        Raises:
            DeterminismError: If stream_position does not increase
        """
        if self._last_position is not None and stream_position <= self._last_position:
            raise DeterminismError(
                f"run {self.run_index}: stream position {stream_position} reused (last {self._last_position})"
            )
        self._last_position = stream_position
        self.calls += 1
        f = self.oracle.f
        grad = f.gradient(x)
        value = f.value(x)
        if self.oracle.deterministic:
            return GradientSample(g=grad.copy(), f_exact=value, grad_exact=grad)
        return GradientSample(g=grad + self._noise(stream_position), f_exact=value, grad_exact=grad)


def query(stream: OracleStream, x: np.ndarray, stream_position: int) -> GradientSample:
    """Functional form of OracleStream.query."""
    return stream.query(x, stream_position)


def output_generator(run_seed: int, stage: int = 0) -> np.random.Generator:
    """Generator for output selection, disjoint from the noise stream."""
    return counter_generator(run_seed, stage, OUTPUT_STREAM)
