"""
Initial-data families and the per-run setup (parameters, mesh, initial profile).
"""
from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from core.errors import ConfigError
from core.model import Params, RadialProfile, build_params, mass_profile_from_density
from core.solver import Grid, rescale_initial

logger = logging.getLogger(__name__)


def hermite_decay(x):
    """C1 step from 1 at x=0 to 0 at x=1 with zero end slopes, (1-x)^2 (1+2x)."""
    x = np.clip(x, 0.0, 1.0)
    return (1.0 - x) ** 2 * (1.0 + 2.0 * x)


class RunSetup(NamedTuple):
    params: Params
    u0: RadialProfile | None
    grid: Grid | None
    w0: object
    w0_full: object


class InitialDataService:
    """Samples initial densities and prepares runs from a configuration."""

    @staticmethod
    def density(family, options, r, R):
        """
        Evaluate a canned density family at radii r.

        Args:
            family (str): constant, quadratic or plateau
            options (dict): Family parameters
            r (ndarray): Radii in [0, R]
            R (float): Ball radius

        Returns:
            ndarray: u0(r)
        """
        if family == "constant":
            return np.full_like(r, float(options.get("value", 1.0)))
        if family == "quadratic":
            return 2.0 * (1.0 - (r / R) ** 2) * float(options.get("scale", 1.0))
        if family == "plateau":
            amplitude, radius, tail = (float(options[k]) for k in ("amplitude", "radius", "tail"))
            if radius + tail > R * (1.0 + 1e-12):
                raise ConfigError(f"plateau radius + tail = {radius + tail} exceeds R={R}")
            return amplitude * hermite_decay((r - radius) / tail)
        raise ConfigError(f"family '{family}' has no closed form")

    @staticmethod
    def sample(spec, R, N):
        """
        Sample the configured initial density.

        Canned families are sampled on nodes radii uniform in [0, R], default 2N+1;
        the csv family is read as given.

        Args:
            spec (InitialDataSpec): Initial-data block
            R (float): Ball radius
            N (int): Mesh size of the run

        Returns:
            RadialProfile: Sampled density
        """
        if spec.family == "csv":
            u0 = RadialProfile.from_csv(spec.options["path"])
        else:
            nodes = spec.nodes or 2 * N + 1
            r = np.linspace(0.0, R, nodes)
            r[-1] = R
            u0 = RadialProfile(r, InitialDataService.density(spec.family, spec.options, r, R))
        if np.any(u0.values < 0.0):
            raise ConfigError("initial density has a negative node")
        logger.debug("sampled %s initial data on %d radii", spec.family, u0.r_nodes.size)
        return u0

    @staticmethod
    def prepare(config, epsilon=None):
        """
        Build parameters, the mesh and the initial profile of a run.

        Without initial data only the parameters are built (params.m required).

        Args:
            config (RunConfig): Parsed configuration
            epsilon (float, optional): Override of grid.epsilon

        Returns:
            RunSetup: Parameters, density, mesh, initial profile on the mesh and on [0, R^n]
        """
        block = config.params
        if config.initial_data is None:
            if "m" not in block:
                raise ConfigError("params.m is required when no initial_data is given")
            params = Params.create(block["n"], block["R"], block["beta"], block["alpha"], block["m"])
            return RunSetup(params, None, None, None, None)

        u0 = InitialDataService.sample(config.initial_data, block["R"], config.grid.N)
        params = build_params(block["n"], block["R"], block["beta"], block["alpha"], u0)
        eps = config.grid.epsilon if epsilon is None else epsilon
        base = Grid.graded(params, config.grid.N, config.grid.q, 0.0)
        w0_full = mass_profile_from_density(u0, params, base)
        if eps > 0.0:
            grid = Grid.graded(params, config.grid.N, config.grid.q, eps)
            w0 = rescale_initial(w0_full, eps, grid)
        else:
            grid, w0 = base, w0_full
        logger.info("prepared run: n=%d R=%g beta=%g alpha=%g m=%.6g N=%d eps=%g",
                    params.n, params.R, params.beta, params.alpha, params.m, grid.N, eps)
        return RunSetup(params, u0, grid, w0, w0_full)
