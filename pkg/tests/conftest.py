"""
Shared fixtures: seeded generators, small spaces and the kernels most tests use.
"""

import numpy as np
import pytest

from potential_bounds.core.config import RunConfig
from potential_bounds.measure_kernel import (
    Kernel,
    MeasureSpace,
    radial_kernel,
    volterra_kernel,
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def grid3() -> MeasureSpace:
    return MeasureSpace.uniform_grid(3)


@pytest.fixture
def single_point() -> MeasureSpace:
    return MeasureSpace(np.array([1.0]))


@pytest.fixture
def volterra_grid():
    space = MeasureSpace.uniform_grid(401, 0.0, 1.0)
    return space, volterra_kernel(space)


def exp_profile(r):
    return np.exp(-np.asarray(r, dtype=float) / 0.5)


@pytest.fixture
def radial_cloud(rng):
    """Eight points in the unit square with an exponential convolution kernel."""
    space = MeasureSpace.random_cloud(8, 2, rng)
    return space, radial_kernel(space, exp_profile, name="radial(exponential)")


@pytest.fixture
def power_distance_kernel():
    """K = |x - y|^(-s) on a five-point grid containing its midpoints."""

    def build(s: float) -> Kernel:
        x = np.linspace(0.0, 1.0, 5)
        return Kernel.from_distance(np.abs(x[:, None] - x[None, :]) ** s, name=f"dist^{s:g}")

    return build


@pytest.fixture
def run_config(tmp_path) -> RunConfig:
    """A small radial instance that every experiment can run quickly."""
    return RunConfig.model_validate({
        "name": "test",
        "seed": 7,
        "instances": 2,
        "space": {"kind": "random", "n": 6, "dim": 2},
        "kernel": {"family": "radial", "profile": "exponential", "length_scale": 0.5, "scale": 0.2},
        "nonlinearity": {"kind": "power", "q": 2.0},
        "solver": {"lemma_depth": 3, "layer_cake_trials": 6, "grid_size": 2048},
        "output": {"out_dir": str(tmp_path / "out")},
    })
