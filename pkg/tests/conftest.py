import numpy as np
import pytest

from superfractal.model import (Grid1D, LebesgueMeasure, ModelParams,
                                RunConfig, SimOptions, default_gamma,
                                derive_exponents)
from superfractal.simulate import simulate_measure_path

HEADLINE = dict(alpha=1.6, beta=0.4, a=0.0, b=1.0)


def headline_params(t=0.6, a=0.0, b=1.0):
    return ModelParams(alpha=1.6, beta=0.4, a=a, b=b, t=t,
                       mu=LebesgueMeasure(0.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def small_run():
    """One moderate replica shared by diagnostics/census/mfa tests."""
    params = headline_params(t=0.6)
    st = derive_exponents(params)
    grid = Grid1D(0.0, 1.0, 4096)
    rc = RunConfig(seed=20240, n_replicas=1, time_steps=48, r_min=1e-3,
                   gamma=default_gamma(st))
    sim = SimOptions(r_scale=2.0 ** -8, steps_per_octave=6)
    path, jumps = simulate_measure_path(params, grid, rc, sim, seed=123)
    return {"params": params, "st": st, "grid": grid, "rc": rc, "sim": sim,
            "path": path, "jumps": jumps}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(987654321)
