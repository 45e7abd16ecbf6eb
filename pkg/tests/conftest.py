"""Shared test fixtures and configuration."""

from concurrent.futures import ThreadPoolExecutor

import pytest
from typer.testing import CliRunner

from app.main import app
from app.models.configuration import Window
from app.models.params import DensityProfile, KernelSpec, PolyParams, TestFunction


@pytest.fixture
def nn1():
    """Nearest-neighbour walk on Z."""
    return KernelSpec.nearest_neighbor(1)


@pytest.fixture
def nn2():
    """Nearest-neighbour walk on Z^2."""
    return KernelSpec.nearest_neighbor(2)


@pytest.fixture
def rho1():
    """Unit homogeneous density."""
    return PolyParams(rho=1.0)


@pytest.fixture
def bump1():
    """Unit bump test function on R."""
    return TestFunction(center=(0.0,), radius=1.0, amplitude=1.0)


@pytest.fixture
def profile1():
    """rho(u) = 1 + 0.5 bump(u) on R."""
    return DensityProfile(base=1.0, amplitude=0.5, center=(0.0,), radius=1.0)


@pytest.fixture
def window1():
    """Periodic window of 21 sites on Z."""
    return Window(21, 1)


@pytest.fixture
def runner():
    """CLI test runner."""
    return CliRunner()


@pytest.fixture
def invoke(runner, tmp_path):
    """Run the CLI with outputs under a temporary directory."""

    def _invoke(*args, out=None):
        target = out if out is not None else tmp_path / "out"
        return runner.invoke(app, ["--out", str(target), *args])

    return _invoke


@pytest.fixture
def thread_pool(mocker):
    """Run replica chunks in threads instead of processes."""
    return mocker.patch("app.engine.sampler.ProcessPoolExecutor", side_effect=ThreadPoolExecutor)
