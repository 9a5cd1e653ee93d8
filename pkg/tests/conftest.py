import logging

import numpy as np
import pytest

from slowenv.noise import PotentialSample
from slowenv.propagator import Scheme, SchemeConfig
from slowenv.torus_grid import TorusGrid


@pytest.fixture
def grid64() -> TorusGrid:
    return TorusGrid(64)


@pytest.fixture
def grid256() -> TorusGrid:
    return TorusGrid(256)


def cos_sample(grid: TorusGrid, amplitude: float = 1.0) -> PotentialSample:
    return PotentialSample.from_values(grid, amplitude * np.cos(2.0 * np.pi * grid.nodes), kind="cos")


def constant_sample(grid: TorusGrid, value: float) -> PotentialSample:
    return PotentialSample.from_values(grid, np.full(grid.n, value), kind="constant")


@pytest.fixture
def eigen_cfg() -> SchemeConfig:
    return SchemeConfig(scheme=Scheme.EIGEN, kappa=1.0)


@pytest.fixture
def strang_cfg() -> SchemeConfig:
    return SchemeConfig(scheme=Scheme.STRANG, dt_max=1e-3, kappa=1.0)


@pytest.fixture
def warnings_log(caplog, monkeypatch):
    """caplog that still sees package warnings after the CLI attached its own handler."""
    monkeypatch.setattr(logging.getLogger("slowenv"), "propagate", True)
    caplog.set_level(logging.WARNING, logger="slowenv")
    return caplog
