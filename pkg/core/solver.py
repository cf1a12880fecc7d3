"""
Finite-difference integration of the regularized mass accumulation problem

    w_t = n^2 s^theta w_ss + n^alpha w w_s^alpha - n^(alpha-1) mu (s - eps) w_s^alpha

on [eps, R^n] with w(eps) = 0 and w(R^n) = m / omega_n.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, solve_banded

from config import (
    BOUND_SLACK,
    DEFAULT_CFL,
    DEFAULT_DT_GROWTH,
    DEFAULT_DT_INIT,
    DEFAULT_DT_MAX,
    DEFAULT_DT_MIN,
    DEFAULT_GRADING,
    DEFAULT_MAX_STEPS,
    DEFAULT_SNAPSHOTS,
    DEFAULT_TOL_MONO,
    DEFAULT_U_CAP,
    EPSILON_MONOTONE_TOL,
)
from core.errors import ConfigError, KSFlowError, PreconditionError, StepRejected
from core.model import MassProfile, Params

logger = logging.getLogger(__name__)

HORIZON_REACHED = "horizon_reached"
BLOWUP_DECLARED = "blowup_declared"
STEP_COLLAPSE = "step_collapse"
MONOTONICITY_FAILURE = "monotonicity_failure"
TERMINATIONS = (HORIZON_REACHED, BLOWUP_DECLARED, STEP_COLLAPSE, MONOTONICITY_FAILURE)


@dataclass(frozen=True)
class Grid:
    """Graded volume-coordinate mesh s_i = eps + (R^n - eps) (i/(N-1))^q."""

    s_nodes: np.ndarray
    q: float
    epsilon: float

    def __post_init__(self):
        s = np.array(self.s_nodes, dtype=float)
        if s.ndim != 1 or s.size < 3:
            raise ConfigError("a grid needs at least three nodes")
        if np.any(np.diff(s) <= 0.0):
            raise ConfigError("grid nodes must be strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "s_nodes", s)

    @property
    def N(self):
        return self.s_nodes.size

    @property
    def min_spacing(self):
        return float(np.min(np.diff(self.s_nodes)))

    @classmethod
    def graded(cls, p, N, q=DEFAULT_GRADING, epsilon=0.0):
        """
        Build the graded mesh on [epsilon, R^n].

        Args:
            p (Params): Problem parameters
            N (int): Node count, at least 3
            q (float): Grading exponent, q >= 1
            epsilon (float): Left end, 0 <= epsilon < R^n

        Returns:
            Grid: Mesh with s_0 = epsilon and s_{N-1} = R^n exactly
        """
        if isinstance(N, bool) or int(N) != N or N < 3:
            raise ConfigError(f"N must be an integer >= 3, got {N}")
        if not q >= 1.0:
            raise ConfigError(f"grading exponent must be >= 1, got {q}")
        if not 0.0 <= epsilon < p.s_max:
            raise ConfigError(f"epsilon must lie in [0, R^n), got {epsilon}")
        x = np.linspace(0.0, 1.0, int(N)) ** q
        s = epsilon + (p.s_max - epsilon) * x
        s[0], s[-1] = epsilon, p.s_max
        return cls(s, float(q), float(epsilon))

    @classmethod
    def nested(cls, p, N, q, eps_list):
        """
        Meshes for a continuation in epsilon that share their nodes above each epsilon.

        One graded base mesh is built on [min(eps_list), R^n]; the mesh for each
        epsilon keeps the base nodes to its right, drops the first of them if it
        sits closer than half the local spacing, and prepends epsilon.

        Returns:
            list[Grid]: One mesh per epsilon, in the order given
        """
        base = cls.graded(p, N, q, min(eps_list))
        grids = []
        for eps in eps_list:
            nodes = base.s_nodes[base.s_nodes > eps]
            if nodes.size > 1 and nodes[0] - eps < 0.5 * (nodes[1] - nodes[0]):
                nodes = nodes[1:]
            grids.append(cls(np.concatenate(([eps], nodes)), float(q), float(eps)))
        return grids


@dataclass(frozen=True)
class StepControls:
    """Time-step policy of `simulate`."""

    t_end: float
    cfl: float = DEFAULT_CFL
    dt_init: float = DEFAULT_DT_INIT
    dt_min: float = DEFAULT_DT_MIN
    dt_max: float = DEFAULT_DT_MAX
    u_cap: float = DEFAULT_U_CAP
    tol_mono: float = DEFAULT_TOL_MONO
    dt_out: float | None = None
    growth: float = DEFAULT_DT_GROWTH
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be finite and >= 0, got {self.t_end}")
        if not self.cfl > 0.0:
            raise ConfigError(f"cfl must be positive, got {self.cfl}")
        if not (0.0 < self.dt_min < self.dt_init <= self.dt_max):
            raise ConfigError("step bounds must satisfy 0 < dt_min < dt_init <= dt_max")
        if not self.u_cap > 0.0:
            raise ConfigError(f"u_cap must be positive, got {self.u_cap}")
        if not self.tol_mono >= 0.0:
            raise ConfigError(f"tol_mono must be >= 0, got {self.tol_mono}")
        if self.dt_out is not None and not self.dt_out > 0.0:
            raise ConfigError(f"dt_out must be positive, got {self.dt_out}")
        if not self.growth >= 1.0:
            raise ConfigError(f"growth must be >= 1, got {self.growth}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    @property
    def output_interval(self):
        if self.dt_out is not None:
            return self.dt_out
        return self.t_end / DEFAULT_SNAPSHOTS if self.t_end > 0 else math.inf

    def output_times(self, t0=0.0):
        """Snapshot times after t0, ending exactly at t_end."""
        if self.t_end <= t0:
            return np.array([])
        interval = self.output_interval
        count = int(math.floor((self.t_end - t0) / interval * (1.0 + 1e-12)))
        times = t0 + interval * np.arange(1, count + 1)
        times = times[times < self.t_end - 1e-12 * max(1.0, self.t_end)]
        return np.append(times, self.t_end)

    def to_dict(self):
        return {"t_end": self.t_end, "cfl": self.cfl, "dt_init": self.dt_init,
                "dt_min": self.dt_min, "dt_max": self.dt_max, "u_cap": self.u_cap,
                "tol_mono": self.tol_mono, "dt_out": self.dt_out,
                "growth": self.growth, "max_steps": self.max_steps}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class StepRecord(NamedTuple):
    t: float
    dt: float
    sup_u: float
    min_second_diff: float
    max_second_diff: float


@dataclass
class Trajectory:
    """Snapshots of one run, its step diagnostics and why it stopped."""

    params: Params
    epsilon: float
    controls: StepControls
    snapshots: list = field(default_factory=list)
    termination: str | None = None
    records: list = field(default_factory=list)
    rejected_steps: int = 0

    @property
    def times(self):
        return np.array([snap.time for snap in self.snapshots])

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def t_final(self):
        return self.snapshots[-1].time

    def sup_density(self, index=-1):
        return sup_density(self.snapshots[index], self.params)

    def diagnostics(self):
        """Per-step diagnostics as a DataFrame (t, dt, sup_u, min/max second difference)."""
        return pd.DataFrame.from_records(self.records, columns=StepRecord._fields)

    def snapshot_at(self, t, rtol=1e-12):
        """Snapshot whose time matches t, or None."""
        for snap in self.snapshots:
            if math.isclose(snap.time, t, rel_tol=rtol, abs_tol=1e-15):
                return snap
        return None


def sup_density(w, p):
    """n times the largest forward slope of w."""
    return p.n * float(np.max(w.slopes()))


def existence_time_estimate(p, C_m):
    """
    Local existence time from the fixed-point construction,
    1 / (2 (n^2 R^(2n-2+beta) + n^alpha C_m^alpha + n^(alpha-1) mu R^n C_m^(alpha-1))).

    Reported only; step control never uses it.
    """
    if not C_m > 0:
        raise PreconditionError(f"C_m must be positive, got {C_m}")
    total = (p.n ** 2 * p.R ** (2 * p.n - 2 + p.beta)
             + p.n ** p.alpha * C_m ** p.alpha
             + p.n ** (p.alpha - 1) * p.mu * p.s_max * C_m ** (p.alpha - 1))
    return 1.0 / (2.0 * total)


def rescale_initial(w0, epsilon, grid=None):
    """
    Rescaled initial data w0_eps(s) = w0(R^n (s - eps) / (R^n - eps)) on [eps, R^n].

    Without a grid the nodes of w0 are mapped affinely onto [eps, R^n] and the
    values are carried over unchanged; with a grid w0 is interpolated at the
    preimages of its nodes.

    Args:
        w0 (MassProfile): Profile on [0, R^n]
        epsilon (float): 0 <= epsilon < R^n
        grid (Grid, optional): Target mesh on [epsilon, R^n]

    Returns:
        MassProfile: Rescaled profile at the time of w0
    """
    s_max = float(w0.s_nodes[-1])
    if not 0.0 <= epsilon < s_max:
        raise PreconditionError(f"epsilon must lie in [0, R^n={s_max}), got {epsilon}")
    if w0.s_nodes[0] != 0.0:
        raise PreconditionError("initial profile must start at s = 0")
    if grid is None:
        s = epsilon + (s_max - epsilon) * (w0.s_nodes / s_max)
        s[0], s[-1] = epsilon, s_max
        return MassProfile(s, w0.values, w0.time)
    s = np.asarray(getattr(grid, "s_nodes", grid), dtype=float)
    if not (math.isclose(s[0], epsilon, rel_tol=0.0, abs_tol=1e-15 * s_max)
            and math.isclose(s[-1], s_max, rel_tol=1e-12)):
        raise PreconditionError("target grid must span [epsilon, R^n]")
    preimage = np.clip(s_max * (s - epsilon) / (s_max - epsilon), 0.0, s_max)
    values = w0.at(preimage)
    values[0], values[-1] = w0.values[0], w0.values[-1]
    return MassProfile(s, values, w0.time)


def _diffusion_matrix(s, p, dt):
    """Banded form of I - dt n^2 s^theta d2/ds2 with identity boundary rows."""
    h = np.diff(s)
    hl, hr = h[:-1], h[1:]
    coeff = dt * p.n ** 2 * s[1:-1] ** p.theta
    lower = -2.0 * coeff / (hl * (hl + hr))
    upper = -2.0 * coeff / (hr * (hl + hr))
    ab = np.zeros((3, s.size))
    ab[1] = 1.0
    ab[1, 1:-1] = 1.0 - lower - upper
    ab[0, 2:] = upper
    ab[2, :-2] = lower
    return ab


def _transport(w, s, p, epsilon, tol_mono):
    """
    Advection speed a, upwinded slope and explicit rate a w_s^alpha at interior nodes.

    The slope is the forward difference where a > 0 and the backward one otherwise.
    """
    slopes = np.diff(w) / np.diff(s)
    a = p.n ** p.alpha * w[1:-1] - p.n ** (p.alpha - 1) * p.mu * (s[1:-1] - epsilon)
    upwind = np.where(a > 0.0, slopes[1:], slopes[:-1])
    if float(p.alpha).is_integer():
        power = upwind ** int(p.alpha)
    else:
        worst = float(np.min(upwind))
        if worst < -tol_mono:
            raise StepRejected("monotonicity", f"negative slope {worst:.3e} under a fractional power")
        power = np.maximum(upwind, 0.0) ** p.alpha
    return a, upwind, a * power


def max_speed(w, p, epsilon):
    """Largest |a| alpha w_s^(alpha-1) over interior nodes."""
    a, upwind, _ = _transport(w.values, w.s_nodes, p, epsilon, math.inf)
    speed = np.abs(a) * p.alpha * np.maximum(upwind, 0.0) ** (p.alpha - 1.0)
    return float(np.max(speed)) if speed.size else 0.0


def step(state, p, epsilon, dt, tol_mono=DEFAULT_TOL_MONO, transport=True):
    """
    Advance one IMEX step: explicit upwind transport, then implicit diffusion.

    Args:
        state (MassProfile): Current profile with pinned boundary values
        p (Params): Problem parameters
        epsilon (float): Left end of the mesh
        dt (float): Step size
        tol_mono (float): Slope slack before a step counts as non-monotone
        transport (bool): False drops the alpha terms (pure diffusion)

    Returns:
        MassProfile: Profile at state.time + dt

    Raises:
        StepRejected: Singular system, non-finite values, bound or monotonicity violation
    """
    if not dt > 0.0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    s, w = state.s_nodes, state.values
    rhs = w.copy()
    if transport:
        _, _, rate = _transport(w, s, p, epsilon, tol_mono)
        rhs[1:-1] += dt * rate
    try:
        new = solve_banded((1, 1), _diffusion_matrix(s, p, dt), rhs)
    except (LinAlgError, ValueError) as exc:
        raise StepRejected("singular", f"tridiagonal solve failed: {exc}") from exc
    if not np.all(np.isfinite(new)):
        raise StepRejected("nonfinite", "step produced non-finite values")
    new[0], new[-1] = w[0], w[-1]

    slack = BOUND_SLACK * max(1.0, p.boundary_value)
    if np.min(new) < -slack or np.max(new) > p.boundary_value + slack:
        raise StepRejected("bounds", "step left [0, m/omega_n]")
    steps_s = np.diff(s)
    was_monotone = np.all(np.diff(w) >= -tol_mono * steps_s - slack)
    if was_monotone and np.any(np.diff(new) < -tol_mono * steps_s - slack):
        raise StepRejected("monotonicity", "step broke monotonicity")
    return state.with_values(new, state.time + dt)


def _pin(w0, p, epsilon):
    s, w = w0.s_nodes, np.array(w0.values)
    if w0.size < 3:
        raise PreconditionError("grid too coarse: need at least three nodes")
    if not math.isclose(s[0], epsilon, rel_tol=0.0, abs_tol=1e-15 * p.s_max):
        raise PreconditionError(f"profile starts at {s[0]}, expected epsilon={epsilon}")
    if not math.isclose(s[-1], p.s_max, rel_tol=1e-12):
        raise PreconditionError("profile must end at R^n")
    slack = BOUND_SLACK * max(1.0, p.boundary_value)
    if abs(w[0]) > slack or abs(w[-1] - p.boundary_value) > slack:
        raise PreconditionError("boundary values must be 0 and m/omega_n")
    w[0], w[-1] = 0.0, p.boundary_value
    return MassProfile(s, w, w0.time)


def _record(w, p, dt):
    second = w.second_differences()
    return StepRecord(w.time, dt, sup_density(w, p), float(np.min(second)), float(np.max(second)))


def simulate(p, w0, epsilon, controls, transport=True):
    """
    Integrate from w0 until t_end, numerical blow-up or step collapse.

    dt is the smallest of the CFL bound cfl * min(ds) / max speed, growth times
    the last accepted step and dt_max; it is shortened to land on snapshot times
    and halved after every rejected step.

    Args:
        p (Params): Problem parameters
        w0 (MassProfile): Initial profile on [epsilon, R^n]
        epsilon (float): Regularization parameter
        controls (StepControls): Time-step policy
        transport (bool): False integrates the pure diffusion part

    Returns:
        Trajectory: Snapshots at the output times plus the final state
    """
    state = _pin(w0, p, epsilon)
    traj = Trajectory(params=p, epsilon=float(epsilon), controls=controls, snapshots=[state])
    outputs = controls.output_times(state.time)
    min_ds = float(np.min(np.diff(state.s_nodes)))
    dt_trial = controls.dt_init
    next_out = 0

    if sup_density(state, p) >= controls.u_cap:
        traj.termination = BLOWUP_DECLARED
    while traj.termination is None and next_out < outputs.size:
        if len(traj.records) >= controls.max_steps:
            logger.warning("step budget of %d exhausted at t=%.6g", controls.max_steps, state.time)
            traj.termination = STEP_COLLAPSE
            break
        speed = max_speed(state, p, epsilon) if transport else 0.0
        dt_cfl = controls.cfl * min_ds / speed if speed > 0.0 else math.inf
        dt = min(dt_trial, dt_cfl, controls.dt_max)
        if dt < controls.dt_min:
            logger.debug("CFL step %.3e below dt_min at t=%.6g", dt_cfl, state.time)
            traj.termination = STEP_COLLAPSE
            break
        dt_trial = dt

        new = None
        while new is None:
            remaining = outputs[next_out] - state.time
            hit = remaining <= dt * (1.0 + 1e-12)
            taken = remaining if hit else (0.5 * remaining if remaining < 2.0 * dt else dt)
            try:
                new = step(state, p, epsilon, taken, controls.tol_mono, transport)
            except StepRejected as exc:
                traj.rejected_steps += 1
                dt *= 0.5
                logger.debug("rejected step at t=%.6g (%s); dt -> %.3e", state.time, exc.reason, dt)
                if dt < controls.dt_min:
                    traj.termination = (MONOTONICITY_FAILURE if exc.reason == "monotonicity"
                                        else STEP_COLLAPSE)
                    break
                dt_trial = dt
        if new is None:
            break

        if hit:
            new = new.with_values(new.values, float(outputs[next_out]))
        state = new
        traj.records.append(_record(state, p, taken))
        dt_trial = min(dt_trial * controls.growth, controls.dt_max)
        if traj.records[-1].sup_u >= controls.u_cap:
            traj.termination = BLOWUP_DECLARED
        elif hit:
            traj.snapshots.append(state)
            next_out += 1

    if traj.termination is None:
        traj.termination = HORIZON_REACHED
    if state.time > traj.snapshots[-1].time:
        traj.snapshots.append(state)
    logger.info("run eps=%.3g ended: %s at t=%.6g after %d steps (%d rejected)",
                epsilon, traj.termination, state.time, len(traj.records), traj.rejected_steps)
    return traj


class ContinuationResult(NamedTuple):
    trajectories: list
    table: pd.DataFrame

    @property
    def min_margin(self):
        """Smallest w_{eps'} - w_eps over all pairs, nodes and common times."""
        if self.table.empty:
            return math.inf
        return float(self.table["min_margin"].min())

    def is_monotone(self, tol=EPSILON_MONOTONE_TOL):
        return self.min_margin >= -tol


def _run_member(args):
    p, w0, grid, controls = args
    return simulate(p, rescale_initial(w0, grid.epsilon, grid), grid.epsilon, controls)


def _compare(coarse, fine):
    """Ordering margin and sup distance of two runs on their shared nodes and times."""
    common_s, ic, jf = np.intersect1d(coarse.final.s_nodes, fine.final.s_nodes,
                                      assume_unique=True, return_indices=True)
    margin, distance, times = math.inf, 0.0, 0
    if common_s.size == 0:
        return margin, math.nan, 0
    for snap in coarse.snapshots:
        other = fine.snapshot_at(snap.time)
        if other is None:
            continue
        diff = other.values[jf] - snap.values[ic]
        margin = min(margin, float(np.min(diff)))
        distance = max(distance, float(np.max(np.abs(diff))))
        times += 1
    return margin, distance, times


def epsilon_continuation(p, w0, eps_list, controls, N=None, q=DEFAULT_GRADING, workers=1):
    """
    Run the regularized problem for decreasing epsilon and compare neighbours.

    Every run uses a mesh from `Grid.nested`, so consecutive runs share their
    nodes above the larger epsilon and are compared without interpolation.

    Args:
        p (Params): Problem parameters
        w0 (MassProfile): Initial profile on [0, R^n]
        eps_list (list[float]): Strictly decreasing values in (0, R^n)
        controls (StepControls): Shared time-step policy (common snapshot times)
        N (int, optional): Base mesh size, default the size of w0
        q (float): Grading exponent
        workers (int): Process count for the member runs

    Returns:
        ContinuationResult: Trajectories and the pairwise table with columns
        eps_coarse, eps_fine, min_margin, sup_distance, common_times
    """
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ConfigError("eps_list is empty")
    if any(not 0.0 < e < p.s_max for e in eps):
        raise ConfigError("every epsilon must lie in (0, R^n)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    grids = Grid.nested(p, N or w0.size, q, eps)
    jobs = [(p, w0, grid, controls) for grid in grids]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run_member, jobs))
    else:
        trajectories = [_run_member(job) for job in jobs]

    first_output = min(controls.output_interval, controls.t_end)
    for e, traj in zip(eps, trajectories):
        if traj.termination != HORIZON_REACHED and traj.t_final < first_output:
            raise KSFlowError(f"run eps={e:g} ended ({traj.termination}) before the first comparison time")

    rows = []
    for (e_c, coarse), (e_f, fine) in zip(zip(eps, trajectories), zip(eps[1:], trajectories[1:])):
        margin, distance, times = _compare(coarse, fine)
        rows.append({"eps_coarse": e_c, "eps_fine": e_f, "min_margin": margin,
                     "sup_distance": distance, "common_times": times})
        logger.info("eps %.3g -> %.3g: min margin %.3e, sup distance %.3e over %d times",
                    e_c, e_f, margin, distance, times)
    table = pd.DataFrame(rows, columns=["eps_coarse", "eps_fine", "min_margin",
                                        "sup_distance", "common_times"])
    return ContinuationResult(trajectories, table)
