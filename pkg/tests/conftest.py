import numpy as np
import pytest

from rbnet.data import ReturnsPanel


def rand_pd(rng, n, scale=1.0):
    """Random positive-definite matrix with eigenvalues in [0.1, 2.1]*scale."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = rng.uniform(0.1, 2.1, n) * scale
    return (q * eigs) @ q.T


def rand_budget(rng, n):
    b = rng.uniform(0.05, 1.0, n)
    return b / b.sum()


def make_panel(returns):
    returns = np.atleast_2d(np.asarray(returns, dtype=float))
    T, n = returns.shape
    dates = np.datetime64("2020-01-01") + np.arange(T)
    return ReturnsPanel(dates, [f"A{i}" for i in range(n)], returns)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
