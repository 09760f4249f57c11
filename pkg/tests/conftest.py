"""
Shared fixtures: built-in problems, certificates, oracles and a temporary result store.
"""

import pytest

from quasarbench.models import ConstantsCertificate, OracleConfig
from quasarbench.oracles import Oracle
from quasarbench.problems import plateau, quadratic, sine_bump
from quasarbench.store import ResultStore


@pytest.fixture
def half_square():
    """f(x) = x^2 / 2 in one dimension, x* = 0."""
    return quadratic([[1.0]])


@pytest.fixture
def square():
    """f(x) = x^2 in one dimension, x* = 0."""
    return quadratic([[2.0]])


@pytest.fixture
def sine():
    return sine_bump()


@pytest.fixture
def kinked():
    return plateau()


@pytest.fixture
def unit_cert():
    """gamma = mu = L = R = 1."""
    return ConstantsCertificate(gamma=1.0, mu=1.0, L=1.0, R=1.0)


@pytest.fixture
def exact_oracle(half_square):
    return Oracle(half_square, OracleConfig())


@pytest.fixture
def noisy_oracle(half_square):
    return Oracle(half_square, OracleConfig(kind="stochastic", sigma=1.0, master_seed=7))


@pytest.fixture
def result_store(tmp_path, monkeypatch):
    """ResultStore rooted in a temporary QB_RESULT_DIR."""
    root = tmp_path / "results"
    monkeypatch.setenv("QB_RESULT_DIR", str(root))
    return ResultStore()
