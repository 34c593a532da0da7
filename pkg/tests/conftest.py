import numpy as np
import pytest

from src.config import Config
from src.model.targets import make_gaussian


@pytest.fixture
def settings(tmp_path):
    return Config(output_dir=tmp_path / "outputs", log_path=tmp_path / "logs" / "run_log.jsonl")


@pytest.fixture
def std_normal():
    return make_gaussian([0.0], [1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def ar1_chains(rng, rho, chains, length):
    """Stationary AR(1) chains with unit marginal variance, shape (chains, length)."""
    noise = rng.standard_normal((chains, length)) * np.sqrt(1.0 - rho * rho)
    x = np.empty((chains, length))
    x[:, 0] = rng.standard_normal(chains)
    for n in range(1, length):
        x[:, n] = rho * x[:, n - 1] + noise[:, n]
    return x
