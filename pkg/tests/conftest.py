import numpy as np
import pytest

from cellreg.engine import CellRegProblem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_problem(rng, n=6, p=3, sigma=1.3, eta=0.8, theta=0.9, beta_scale=1.0,
                   contaminate=False):
    """Small random instance for engine-level checks; optionally plants a few
    gross cells and response outliers."""
    x = rng.normal(size=(n, p))
    beta = rng.normal(scale=beta_scale, size=p)
    y = x @ beta + rng.normal(scale=sigma, size=n)
    if contaminate:
        i = rng.integers(n)
        j = rng.integers(p)
        x[i, j] += rng.choice((-8.0, 8.0))
        y[rng.integers(n)] += rng.choice((-8.0, 8.0))
    return CellRegProblem(x, y, beta, sigma, eta, theta)
