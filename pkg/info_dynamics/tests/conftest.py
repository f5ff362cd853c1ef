import numpy as np
import pandas as pd
import pytest

from src.kernels_utils import RngHandle
from src.series_utils import TimeSeries


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Ejecuta las pruebas marcadas como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="requiere --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return RngHandle(1234)


def coupled_values(n, coupling=0.8, seed=7, lag=1):
    """X ruido blanco, Y_t = coupling·X_{t-lag} + ruido."""
    gen = np.random.default_rng(seed)
    x = gen.standard_normal(n + lag)
    y = coupling * x[:-lag] + gen.standard_normal(n)
    return x[lag:], y


@pytest.fixture
def coupled_pair():
    x, y = coupled_values(1500)
    return TimeSeries(x, label="X"), TimeSeries(y, label="Y")


@pytest.fixture
def noise_series():
    return TimeSeries(np.random.default_rng(99).standard_normal(1500), label="ruido")


def write_series(path, values, start=0, period=60_000):
    df = pd.DataFrame({"timestamp_ms": start + np.arange(len(values)) * period, "value": values})
    df.to_csv(path, index=False)
    return str(path)
