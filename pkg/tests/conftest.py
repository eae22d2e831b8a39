import numpy as np
import pytest

from harmonize.config import RunConfig
from harmonize.geomcore import AreaUnit, GridFieldSnapshot
from harmonize.tuning import TuningConfig
from harmonize.variogram import VariogramSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_square():
    return AreaUnit.rectangle("A", 0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def exp_spec():
    return VariogramSpec("exponential", nugget=0.0, psill=1.0, range=2.0)


def grid_coords(n_side, spacing=1.0, origin=0.5):
    c = origin + spacing * np.arange(n_side)
    gx, gy = np.meshgrid(c, c, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


@pytest.fixture
def grid6(rng):
    """6x6 lattice of unit cells with a smooth signal plus small noise."""
    xy = grid_coords(6)
    z = np.sin(xy[:, 0] / 2.0) + 0.5 * np.cos(xy[:, 1] / 3.0) + 0.05 * rng.normal(size=len(xy))
    return GridFieldSnapshot("z", 2020, xy, z)


@pytest.fixture
def four_blocks():
    return [AreaUnit.rectangle("B1", 0, 0, 3, 3), AreaUnit.rectangle("B2", 3, 0, 6, 3),
            AreaUnit.rectangle("B3", 0, 3, 3, 6), AreaUnit.rectangle("B4", 3, 3, 6, 6)]


@pytest.fixture
def fast_tuning():
    return TuningConfig(families=("exponential", "spherical"), nmax_grid=(8, 16), folds=5, seed=3)


@pytest.fixture
def run_config():
    return RunConfig(seed=11)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
