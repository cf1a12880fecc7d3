"""
Barrier functions and certified checks on trajectories.

The barrier ODE y' = n^alpha y^(alpha+1) bounds the slope of w, so that y(t) (s - eps)
is a supersolution of the regularized problem; the remaining checks cover concavity,
the slope bound and a discrete comparison principle between two trajectories.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from config import (
    COMPARISON_ABS_TOL,
    COMPARISON_TRUNCATION_FACTOR,
    CONCAVITY_TOL,
)
from core.errors import PreconditionError
from core.model import MassProfile
from core.solver import Trajectory

logger = logging.getLogger(__name__)


def barrier_blowup_time(y0, n, alpha):
    """
    Blow-up time t* = 1 / (alpha n^alpha y0^alpha) of the barrier ODE.

    Raises:
        PreconditionError: If y0 <= 0
    """
    if not y0 > 0.0:
        raise PreconditionError(f"y0 must be positive, got {y0}")
    return 1.0 / (alpha * n ** alpha * y0 ** alpha)


def barrier_ode_solution(y0, n, alpha, t):
    """
    Closed-form solution y0 (1 - alpha n^alpha y0^alpha t)^(-1/alpha) of y' = n^alpha y^(alpha+1).

    Args:
        y0 (float): Initial value, > 0
        n (int): Spatial dimension
        alpha (float): Sensitivity exponent
        t (float or array): Times in [0, t*)

    Returns:
        float or ndarray: y(t)
    """
    t_star = barrier_blowup_time(y0, n, alpha)
    times = np.asarray(t, dtype=float)
    if np.any(times < 0.0) or np.any(times >= t_star):
        raise PreconditionError(f"t must lie in [0, t*={t_star:.6g})")
    y = y0 * (1.0 - times / t_star) ** (-1.0 / alpha)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class BarrierState:
    """Slope barrier started from y0 = sup w0_s."""

    y0: float
    n: int
    alpha: float
    t_star: float

    @classmethod
    def create(cls, y0, n, alpha):
        return cls(float(y0), int(n), float(alpha), barrier_blowup_time(y0, n, alpha))

    @classmethod
    def from_profile(cls, w0, p):
        """Barrier from the largest forward slope of a discrete initial profile."""
        y0 = float(np.max(w0.slopes()))
        if y0 < p.mu / p.n * (1.0 - 1e-12):
            raise PreconditionError(f"sup slope {y0:.6g} is below mu/n={p.mu / p.n:.6g}")
        return cls.create(y0, p.n, p.alpha)

    def y(self, t):
        return barrier_ode_solution(self.y0, self.n, self.alpha, t)


def _barrier_for(traj):
    state = BarrierState.from_profile(traj.snapshots[0], traj.params)
    if traj.t_final >= state.t_star:
        raise PreconditionError(
            f"trajectory reaches t={traj.t_final:.6g} beyond the barrier blow-up time {state.t_star:.6g}")
    return state


def check_linear_barrier(traj, p):
    """
    Largest w(s, t) - y(t) (s - eps) over snapshots and nodes.

    y starts from the trajectory's own discrete sup w0_s.

    Returns:
        float: Worst violation; <= 0 when the barrier holds
    """
    state = _barrier_for(traj)
    worst = -math.inf
    for snap in traj.snapshots:
        barrier = state.y(snap.time) * (snap.s_nodes - traj.epsilon)
        worst = max(worst, float(np.max(snap.values - barrier)))
    logger.debug("linear barrier: worst violation %.3e (y0=%.6g)", worst, state.y0)
    return worst


def barrier_trajectory(traj, p):
    """The supersolution y(t) (s - eps) sampled on the grid and snapshot times of traj."""
    state = _barrier_for(traj)
    snapshots = [MassProfile(snap.s_nodes, state.y(snap.time) * (snap.s_nodes - traj.epsilon), snap.time)
                 for snap in traj.snapshots]
    return Trajectory(params=p, epsilon=traj.epsilon, controls=traj.controls,
                      snapshots=snapshots, termination=traj.termination)


def concavity_measure(w, p):
    """
    Largest increase between consecutive cell slopes, relative to (m/omega_n)/R^n.

    Equals the nonuniform second difference times the local half-width.
    """
    scale = p.boundary_value / p.s_max
    rises = np.diff(w.slopes())
    return float(np.max(rises)) / scale if rises.size else 0.0


def _require_concave(traj, tol):
    initial = concavity_measure(traj.snapshots[0], traj.params)
    if initial > tol:
        raise PreconditionError(f"initial profile is not concave (slope rise {initial:.3e})")


def check_concavity(traj, tol=CONCAVITY_TOL):
    """
    Worst slope rise over all snapshots of a trajectory started from concave data.

    Raises:
        PreconditionError: If the initial profile is not concave within tol
    """
    _require_concave(traj, tol)
    worst = max(concavity_measure(snap, traj.params) for snap in traj.snapshots)
    logger.debug("concavity: worst scaled slope rise %.3e", worst)
    return worst


def check_slope_bound(traj, tol=CONCAVITY_TOL):
    """
    Per-time sup w_s against the barrier y(t).

    Returns:
        pandas.DataFrame: columns t, sup_slope, argmax (cell index of the sup),
        barrier (y(t), NaN from t* on) and excess (sup_slope - barrier)
    """
    _require_concave(traj, tol)
    p = traj.params
    state = BarrierState.from_profile(traj.snapshots[0], p)
    rows = []
    for snap in traj.snapshots:
        slopes = snap.slopes()
        barrier = state.y(snap.time) if snap.time < state.t_star else math.nan
        sup = float(np.max(slopes))
        rows.append({"t": snap.time, "sup_slope": sup, "argmax": int(np.argmax(slopes)),
                     "barrier": barrier, "excess": sup - barrier})
    return pd.DataFrame(rows, columns=["t", "sup_slope", "argmax", "barrier", "excess"])


@dataclass(frozen=True)
class ComparisonCoefficients:
    """Coefficients of a s^theta W_ss + b s^gamma W W_s^alpha + c s^delta W_s^alpha + d W_s^alpha."""

    a: float
    theta: float
    b: float
    gamma: float
    c: float
    delta: float
    d: float
    alpha: float = 1.0

    @classmethod
    def for_problem(cls, p, epsilon=0.0):
        """Coefficients of the regularized problem on [epsilon, R^n]."""
        return cls(a=p.n ** 2, theta=p.theta, b=p.n ** p.alpha, gamma=0.0,
                   c=-p.n ** (p.alpha - 1) * p.mu, delta=1.0,
                   d=p.n ** (p.alpha - 1) * p.mu * epsilon, alpha=p.alpha)

    def operator(self, s, w):
        """Operator at the interior nodes; W_s is upwinded by the sign of its coefficient."""
        h = np.diff(s)
        slopes = np.diff(w) / h
        inner = s[1:-1]
        second = 2.0 * np.diff(slopes) / (h[:-1] + h[1:])
        speed = self.b * inner ** self.gamma * w[1:-1] + self.c * inner ** self.delta + self.d
        upwind = np.where(speed > 0.0, slopes[1:], slopes[:-1])
        if float(self.alpha).is_integer():
            power = upwind ** int(self.alpha)
        else:
            power = np.maximum(upwind, 0.0) ** self.alpha
        return self.a * inner ** self.theta * second + speed * power


@dataclass
class ComparisonReport:
    """Outcome of a discrete comparison between a lower and an upper trajectory."""

    max_order_violation: float
    residual_lower: float
    residual_upper: float
    coefficients: ComparisonCoefficients
    probe_nodes: int
    probe_times: int
    hypotheses: dict = field(default_factory=dict)
    tol: float = COMPARISON_ABS_TOL

    @property
    def failed_hypotheses(self):
        return [name for name, held in self.hypotheses.items() if not held]

    @property
    def asserted(self):
        """Ordering is asserted only when every hypothesis held."""
        return not self.failed_hypotheses

    @property
    def ordering_holds(self):
        return self.max_order_violation <= self.tol

    @property
    def passed(self):
        return not self.asserted or self.ordering_holds

    def to_dict(self):
        return {"max_order_violation": self.max_order_violation,
                "residual_lower": self.residual_lower,
                "residual_upper": self.residual_upper,
                "coefficients": asdict(self.coefficients),
                "probe_nodes": self.probe_nodes, "probe_times": self.probe_times,
                "hypotheses": dict(self.hypotheses),
                "failed_hypotheses": self.failed_hypotheses,
                "asserted": self.asserted, "passed": self.passed}


def _common_times(lower, upper):
    times = []
    for snap in lower.snapshots:
        if upper.snapshot_at(snap.time) is not None:
            times.append(snap.time)
    return times


def _residuals(traj, times, coeffs, span):
    """
    Worst signed residual and worst tolerance excess on one trajectory.

    The residual is the forward time difference minus the operator at the earlier
    time. The nodewise tolerance doubles the spread between evaluating the operator
    at either end of the interval and between spacing h and 2h.

    Returns:
        tuple: (max residual, min residual, max of R - tol, max of -R - tol)
    """
    r_max, r_min = -math.inf, math.inf
    over, under = -math.inf, -math.inf
    for t1, t2 in zip(times, times[1:]):
        w1, w2 = traj.snapshot_at(t1), traj.snapshot_at(t2)
        s = w1.s_nodes
        rate = (w2.values - w1.values)[1:-1] / (t2 - t1)
        forward = rate - coeffs.operator(s, w1.values)
        backward = rate - coeffs.operator(s, w2.values)
        coarse_s = s[::2]
        coarse = ((w2.values[::2] - w1.values[::2])[1:-1] / (t2 - t1)
                  - coeffs.operator(coarse_s, w1.values[::2]))
        inner = s[1:-1]
        spatial = np.abs(forward - np.interp(inner, coarse_s[1:-1], coarse)) if coarse.size else 0.0
        tol = (COMPARISON_TRUNCATION_FACTOR * (np.abs(forward - backward) + spatial)
               + COMPARISON_ABS_TOL)
        inside = (inner >= span[0]) & (inner <= span[1])
        if not np.any(inside):
            continue
        r_max = max(r_max, float(np.max(forward[inside])))
        r_min = min(r_min, float(np.min(forward[inside])))
        over = max(over, float(np.max((forward - tol)[inside])))
        under = max(under, float(np.max((-forward - tol)[inside])))
    return r_max, r_min, over, under


def verify_comparison(lower, upper, coeffs, tol=COMPARISON_ABS_TOL):
    """
    Discrete comparison principle for a sub/supersolution pair.

    The probe lattice is the coarser of the two grids at the snapshot times both
    trajectories share; the finer input is interpolated linearly onto it.

    Args:
        lower (Trajectory): Candidate subsolution
        upper (Trajectory): Candidate supersolution
        coeffs (ComparisonCoefficients): Operator coefficients
        tol (float): Ordering tolerance

    Returns:
        ComparisonReport: Ordering margin, residuals and the hypotheses that held

    Raises:
        PreconditionError: If the inputs share no time or their grids do not overlap
    """
    times = _common_times(lower, upper)
    if not times:
        raise PreconditionError("trajectories share no snapshot time")
    s_low, s_up = lower.snapshots[0].s_nodes, upper.snapshots[0].s_nodes
    probe = s_low if s_low.size <= s_up.size else s_up
    for s in (s_low, s_up):
        if probe[0] < s[0] - 1e-14 * probe[-1] or probe[-1] > s[-1] * (1.0 + 1e-12):
            raise PreconditionError("probe lattice is not covered by both grids")

    violation, initial_gap, boundary_gap = -math.inf, -math.inf, -math.inf
    for k, t in enumerate(times):
        below = lower.snapshot_at(t).at(probe)
        above = upper.snapshot_at(t).at(probe)
        gap = below - above
        if k == 0:
            initial_gap = float(np.max(gap))
        boundary_gap = max(boundary_gap, float(gap[0]), float(gap[-1]))
        violation = max(violation, float(np.max(gap)))

    span = (probe[1], probe[-2]) if probe.size > 2 else (probe[0], probe[-1])
    low_max, _, low_over, _ = _residuals(lower, times, coeffs, span)
    _, up_min, _, up_under = _residuals(upper, times, coeffs, span)
    # w_s stays below the density cap u_cap / n on both inputs
    slope_cap = min(lower.controls.u_cap, upper.controls.u_cap) / lower.params.n
    sup_slope = max(float(np.max(traj.snapshot_at(t).slopes())) for t in times for traj in (lower, upper))
    hypotheses = {
        "initial_order": initial_gap <= tol,
        "boundary_order": boundary_gap <= tol,
        "lower_residual": low_over <= 0.0,
        "upper_residual": up_under <= 0.0,
        "bounded_slope": sup_slope < slope_cap,
    }
    report = ComparisonReport(max_order_violation=violation, residual_lower=low_max,
                              residual_upper=up_min, coefficients=coeffs,
                              probe_nodes=int(probe.size), probe_times=len(times),
                              hypotheses=hypotheses, tol=tol)
    if report.asserted:
        logger.info("comparison: ordering margin %.3e over %d times", violation, len(times))
    else:
        logger.info("comparison: hypotheses failed %s; ordering not asserted", report.failed_hypotheses)
    return report
