"""
Shared fixtures: canned parameters, initial profiles and a few precomputed runs.
"""
import math

import numpy as np
import pytest

from core.model import MassProfile, Params, RadialProfile, build_params, mass_profile_from_density
from core.solver import Grid, StepControls, Trajectory, simulate


def radial_samples(R, values_fn, nodes=401):
    r = np.linspace(0.0, R, nodes)
    r[-1] = R
    return RadialProfile(r, values_fn(r))


def prepared(n, R, beta, alpha, values_fn, N, q=2.0, nodes=None):
    """Params, mesh and w0 for sampled initial data."""
    u0 = radial_samples(R, values_fn, nodes or 2 * N + 1)
    p = build_params(n, R, beta, alpha, u0)
    grid = Grid.graded(p, N, q, 0.0)
    return p, u0, grid, mass_profile_from_density(u0, p, grid)


@pytest.fixture
def disk_params():
    """n=2, R=1, beta=1, alpha=1 with the mass of u = 1 (m = pi, mu = 1)."""
    return Params.create(2, 1.0, 1.0, 1.0, math.pi)


@pytest.fixture(scope="session")
def make_setup():
    return prepared


@pytest.fixture
def make_trajectory():
    def build(p, profiles, epsilon=0.0, t_end=None, termination="horizon_reached"):
        t_end = profiles[-1].time if t_end is None else t_end
        return Trajectory(params=p, epsilon=epsilon, controls=StepControls(t_end=t_end),
                          snapshots=list(profiles), termination=termination)
    return build


@pytest.fixture
def linear_profile():
    def build(p, N=101, time=0.0):
        s = Grid.graded(p, N, 2.0).s_nodes
        return MassProfile(s, p.boundary_value * s / p.s_max, time)
    return build


@pytest.fixture(scope="session")
def steady_run():
    """u0 = 1 on the unit disk, N=400, integrated to t=1."""
    p, _, _, w0 = prepared(2, 1.0, 1.0, 1.0, np.ones_like, 400)
    return simulate(p, w0, 0.0, StepControls(t_end=1.0, dt_out=0.1))


@pytest.fixture(scope="session")
def short_steady_run():
    """u0 = 1 on the unit disk, N=101, integrated to half the barrier blow-up time."""
    p, _, _, w0 = prepared(2, 1.0, 1.0, 1.0, np.ones_like, 101)
    return simulate(p, w0, 0.0, StepControls(t_end=0.5, dt_out=0.05))


@pytest.fixture(scope="session")
def quadratic_run():
    """u0 = 2 - 2r^2, n=2, beta=1, alpha=1, N=200, up to t=0.25 (half the barrier blow-up time)."""
    p, _, _, w0 = prepared(2, 1.0, 1.0, 1.0, lambda r: 2.0 - 2.0 * r ** 2, 200)
    return simulate(p, w0, 0.0, StepControls(t_end=0.25, dt_out=0.025))
