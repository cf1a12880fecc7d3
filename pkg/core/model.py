"""
Problem parameters and the exact transforms between the radial density u,
the mass accumulation function w and the signal gradient v_r.

Volume coordinate: s = r**n, so that w(s) = integral_0^{s^(1/n)} rho^(n-1) u(rho) drho
and u(r) = n * w_s(r**n).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import gamma as gamma_fn

from config import CSV_FLOAT_FORMAT
from core.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


def unit_sphere_area(n):
    """Surface area of the unit sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / float(gamma_fn(n / 2.0))


def _frozen_array(values, name):
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise PreconditionError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_increasing(nodes, name):
    if nodes.size > 1 and np.any(np.diff(nodes) <= 0.0):
        raise PreconditionError(f"{name} must be strictly increasing")


@dataclass(frozen=True)
class Params:
    """Problem data of the radial system on the ball B_R(0) in R^n."""

    n: int
    R: float
    beta: float
    alpha: float
    m: float
    omega_n: float
    mu: float

    @classmethod
    def create(cls, n, R, beta, alpha, m):
        """
        Build parameters from the total mass.

        Args:
            n (int): Spatial dimension, n >= 2
            R (float): Ball radius
            beta (float): Diffusion exponent, beta > 0
            alpha (float): Sensitivity exponent, alpha >= 1
            m (float): Total mass

        Returns:
            Params: Validated parameters with omega_n and mu filled in

        Raises:
            ConfigError: If any parameter is out of range
        """
        if isinstance(n, bool) or int(n) != n or n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {n}")
        if not R > 0:
            raise ConfigError(f"R must be positive, got {R}")
        if not beta > 0:
            raise ConfigError(f"beta must be positive, got {beta}")
        if not alpha >= 1:
            raise ConfigError(f"alpha must be >= 1, got {alpha}")
        if not (m > 0 and math.isfinite(m)):
            raise ConfigError(f"total mass must be positive, got {m}")
        n = int(n)
        omega_n = unit_sphere_area(n)
        mu = n * m / (omega_n * R ** n)
        return cls(n=n, R=float(R), beta=float(beta), alpha=float(alpha),
                   m=float(m), omega_n=omega_n, mu=mu)

    @property
    def s_max(self):
        return self.R ** self.n

    @property
    def boundary_value(self):
        """Dirichlet value w(R^n) = m / omega_n."""
        return self.m / self.omega_n

    @property
    def theta(self):
        """Exponent of the degenerate diffusion coefficient n^2 s^theta."""
        return (2 * self.n - 2 + self.beta) / self.n

    @property
    def volume(self):
        return self.omega_n * self.R ** self.n / self.n

    def to_dict(self):
        return {"n": self.n, "R": self.R, "beta": self.beta, "alpha": self.alpha,
                "m": self.m, "omega_n": self.omega_n, "mu": self.mu}

    @classmethod
    def from_dict(cls, data):
        return cls.create(data["n"], data["R"], data["beta"], data["alpha"], data["m"])


@dataclass(frozen=True)
class RadialProfile:
    """Radial density samples u(r) on strictly increasing radii ending at R."""

    r_nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = _frozen_array(self.r_nodes, "r_nodes")
        u = _frozen_array(self.values, "values")
        if r.size != u.size:
            raise PreconditionError("r_nodes and values differ in length")
        if r.size < 2:
            raise PreconditionError("a radial profile needs at least two nodes")
        if r[0] < 0.0:
            raise PreconditionError("radii must be nonnegative")
        _check_increasing(r, "r_nodes")
        object.__setattr__(self, "r_nodes", r)
        object.__setattr__(self, "values", u)

    def to_csv(self, path):
        frame = pd.DataFrame({"r": self.r_nodes, "u": self.values})
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        missing = {"r", "u"} - set(frame.columns)
        if missing:
            raise PreconditionError(f"{path}: missing columns {sorted(missing)}")
        return cls(frame["r"].to_numpy(dtype=float), frame["u"].to_numpy(dtype=float))


@dataclass(frozen=True)
class MassProfile:
    """Discrete mass accumulation function w(., t) on an s-grid."""

    s_nodes: np.ndarray
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        s = _frozen_array(self.s_nodes, "s_nodes")
        w = _frozen_array(self.values, "values")
        if s.size != w.size:
            raise PreconditionError("s_nodes and values differ in length")
        if s.size < 2:
            raise PreconditionError("a mass profile needs at least two nodes")
        if s[0] < 0.0:
            raise PreconditionError("volume coordinates must be nonnegative")
        if not (self.time >= 0.0 and math.isfinite(self.time)):
            raise PreconditionError(f"time must be finite and >= 0, got {self.time}")
        _check_increasing(s, "s_nodes")
        object.__setattr__(self, "s_nodes", s)
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "time", float(self.time))

    @property
    def size(self):
        return self.s_nodes.size

    def with_values(self, values, time):
        return MassProfile(self.s_nodes, values, time)

    def at(self, s):
        """Piecewise-linear interpolation of w; constant extension outside the grid."""
        return np.interp(s, self.s_nodes, self.values)

    def slopes(self):
        """Forward cell slopes (w_{i+1} - w_i) / (s_{i+1} - s_i)."""
        return np.diff(self.values) / np.diff(self.s_nodes)

    def nodal_slopes(self):
        """w_s at the nodes, second order (one-sided at the ends)."""
        if self.size < 3:
            raise PreconditionError("slopes need at least three nodes")
        return np.gradient(self.values, self.s_nodes, edge_order=2)

    def second_differences(self):
        """Nonuniform three-point w_ss at the interior nodes."""
        h = np.diff(self.s_nodes)
        return 2.0 * np.diff(self.slopes()) / (h[:-1] + h[1:])

    def to_csv(self, path):
        frame = pd.DataFrame({"s": self.s_nodes, "w": self.values,
                              "t": np.full(self.size, self.time)})
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        missing = {"s", "w"} - set(frame.columns)
        if missing:
            raise PreconditionError(f"{path}: missing columns {sorted(missing)}")
        time = float(frame["t"].iloc[0]) if "t" in frame.columns else 0.0
        return cls(frame["s"].to_numpy(dtype=float), frame["w"].to_numpy(dtype=float), time)


class BoundsReport(NamedTuple):
    excess: float
    deficit: float
    min_slope: float


def _moment_integrand(u0, n):
    """Nodes and values of rho^(n-1) u0(rho), with the origin prepended."""
    r = u0.r_nodes
    f = r ** (n - 1) * u0.values
    if r[0] > 0.0:
        r = np.concatenate(([0.0], r))
        f = np.concatenate(([0.0], f))
    return r, f


def build_params(n, R, beta, alpha, u0):
    """
    Build problem parameters from sampled initial data.

    The mass is omega_n times the composite trapezoid of rho^(n-1) u0(rho)
    over the sample radii (the segment from the origin included).

    Args:
        n (int): Spatial dimension
        R (float): Ball radius; must equal the last sample radius
        beta (float): Diffusion exponent
        alpha (float): Sensitivity exponent
        u0 (RadialProfile): Nonnegative initial density

    Returns:
        Params: Parameters with m, omega_n and mu filled in

    Raises:
        ConfigError: On out-of-range exponents, negative samples or zero mass
    """
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise ConfigError(f"n must be an integer >= 2, got {n}")
    if np.any(u0.values < 0.0):
        raise ConfigError("initial density has a negative node")
    if not math.isclose(u0.r_nodes[-1], R, rel_tol=1e-12):
        raise ConfigError(f"last sample radius {u0.r_nodes[-1]} does not match R={R}")
    r, f = _moment_integrand(u0, int(n))
    mass = unit_sphere_area(int(n)) * float(trapezoid(f, r))
    if not mass > 0.0:
        raise ConfigError("initial density carries zero mass")
    return Params.create(n, R, beta, alpha, mass)


def _grid_nodes(grid):
    return np.asarray(getattr(grid, "s_nodes", grid), dtype=float)


def mass_profile_from_density(u0, p, grid):
    """
    Mass accumulation function of sampled initial data, w0(s) = int_0^{s^(1/n)} rho^(n-1) u0.

    The integrand rho^(n-1) u0 is interpolated linearly between sample radii and
    integrated exactly over whole and partial cells.

    Args:
        u0 (RadialProfile): Initial density sampled on (0, R]
        p (Params): Problem parameters
        grid: Grid or array of volume coordinates in [0, R^n]

    Returns:
        MassProfile: w0 at the grid nodes at time 0
    """
    s = _grid_nodes(grid)
    if s.ndim != 1 or s.size < 2:
        raise PreconditionError("grid must be a one-dimensional array of nodes")
    if np.any(np.diff(s) <= 0.0):
        raise PreconditionError("grid must be strictly increasing")
    if s[0] < 0.0 or s[-1] > p.s_max * (1.0 + 1e-12):
        raise PreconditionError("grid must lie inside [0, R^n]")
    if not math.isclose(u0.r_nodes[-1], p.R, rel_tol=1e-12):
        raise PreconditionError("initial density nodes do not end at R")

    r, f = _moment_integrand(u0, p.n)
    cumulative = cumulative_trapezoid(f, r, initial=0.0)
    rho = np.minimum(s ** (1.0 / p.n), r[-1])
    cell = np.clip(np.searchsorted(r, rho, side="right") - 1, 0, r.size - 2)
    x = rho - r[cell]
    k = (f[cell + 1] - f[cell]) / (r[cell + 1] - r[cell])
    w = cumulative[cell] + f[cell] * x + 0.5 * k * x * x
    if math.isclose(s[-1], p.s_max, rel_tol=1e-12):
        w[-1] = p.boundary_value
    return MassProfile(s, w, 0.0)


def density_from_mass_profile(w, p):
    """
    Reconstruct u(r) = n w_s(r^n) at the nodes of a mass profile.

    Args:
        w (MassProfile): Profile with at least three nodes
        p (Params): Problem parameters

    Returns:
        RadialProfile: Density at r = s^(1/n)

    Raises:
        PreconditionError: If the grid is too coarse
    """
    if w.size < 3:
        raise PreconditionError("grid too coarse: need at least three nodes")
    u = p.n * w.nodal_slopes()
    r = w.s_nodes ** (1.0 / p.n)
    if math.isclose(w.s_nodes[-1], p.s_max, rel_tol=1e-12):
        r[-1] = p.R
    return RadialProfile(r, u)


def _sup_density(w, p):
    """Largest reconstructed density over nodes and cells."""
    return p.n * max(float(np.max(w.nodal_slopes())), float(np.max(w.slopes())))


def signal_gradient(w, p, r):
    """
    v_r(r) = (mu r^n / n - w(r^n)) / r^(n-1).

    mu r^n / n is evaluated as (m / omega_n) (r / R)^n so that v_r(R) = 0 exactly
    whenever w(R^n) is pinned to m / omega_n.

    Args:
        w (MassProfile): Mass profile
        p (Params): Problem parameters
        r (float or array): Radii in (0, R]

    Returns:
        float or ndarray: Signal gradient at r
    """
    radii = np.asarray(r, dtype=float)
    if np.any(radii <= 0.0) or np.any(radii > p.R * (1.0 + 1e-12)):
        raise PreconditionError(f"radii must lie in (0, R={p.R}]")
    radii = np.minimum(radii, p.R)
    s = np.minimum(radii ** p.n, p.s_max)
    mean_part = p.boundary_value * (radii / p.R) ** p.n
    v = (mean_part - w.at(s)) / radii ** (p.n - 1)
    return float(v) if v.ndim == 0 else v


def signal_gradient_bound(w, p, r=None):
    """
    Worst margin |v_r| - (2/n) sup(u) r over the sampled radii; <= 0 when the bound holds.
    """
    if r is None:
        r = w.s_nodes[w.s_nodes > 0.0] ** (1.0 / p.n)
    radii = np.asarray(r, dtype=float)
    v = np.abs(np.atleast_1d(signal_gradient(w, p, radii)))
    bound = (2.0 / p.n) * _sup_density(w, p) * np.atleast_1d(radii)
    return float(np.max(v - bound))


def enclosed_mass(w, p):
    """int_0^R rho^(n-1) u drho with u reconstructed from w, integrated in s."""
    u = density_from_mass_profile(w, p)
    return float(trapezoid(u.values, w.s_nodes)) / p.n


def check_mass_conservation(traj, p):
    """
    Maximum relative drift of the reconstructed mass over a trajectory.

    Args:
        traj (Trajectory): Nonempty trajectory
        p (Params): Problem parameters

    Returns:
        float: max_t |int rho^(n-1) u - m/omega_n| * omega_n / m
    """
    drift = 0.0
    for snap in traj.snapshots:
        mass = enclosed_mass(snap, p)
        drift = max(drift, abs(mass - p.boundary_value) / p.boundary_value)
    logger.debug("mass drift over %d snapshots: %.3e", len(traj.snapshots), drift)
    return drift


def check_bounds(w, p):
    """
    Violations of 0 <= w <= m/omega_n and of monotonicity for one profile.

    Returns:
        BoundsReport: (max of w - m/omega_n, max of -w, min forward slope)
    """
    excess = float(np.max(w.values - p.boundary_value))
    deficit = float(np.max(-w.values))
    return BoundsReport(excess, deficit, float(np.min(w.slopes())))
