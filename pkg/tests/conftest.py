import numpy as np
import pytest

from hjlab import Grid, Path, TimeDensity


@pytest.fixture
def unit_grid():
    # [-1, 1] with dt = 1/4
    return Grid(h=1.0, T=1.0, dt=0.25)


@pytest.fixture
def fine_grid():
    return Grid(h=0.5, T=1.0, dt=1.0 / 16)


def random_path(grid, n=1, seed=0, scale=1.0, start=None):
    """Seeded piecewise-linear path built from cumulative random slopes."""
    rng = np.random.default_rng(seed)
    if start is None:
        start = rng.normal(size=n)
    slopes = rng.uniform(-1.0, 1.0, size=(grid.n_nodes - 1, n)) * scale
    vals = np.vstack([np.atleast_1d(start), np.atleast_1d(start) + np.cumsum(slopes * grid.dt, axis=0)])
    return Path(grid, vals)


def ramp_path(grid, slope=1.0):
    return Path(grid, np.outer(grid.node_times, np.atleast_1d(slope)))
