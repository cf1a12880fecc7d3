"""
Invariant check suites over a stored or freshly computed trajectory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from config import (
    BOUND_SLACK,
    BOUNDARY_GRADIENT_TOL,
    COMPARISON_ABS_TOL,
    CONCAVITY_TOL,
    EPSILON_MONOTONE_TOL,
    LINEAR_BARRIER_TOL,
    MASS_DRIFT_TOL,
    ODI_REL_TOL,
    SIGNAL_GRADIENT_TOL,
    SLOPE_BOUND_TOL,
)
from core.barriers import (
    BarrierState,
    ComparisonCoefficients,
    barrier_trajectory,
    check_concavity,
    check_linear_barrier,
    check_slope_bound,
    verify_comparison,
)
from core.blowup import build_certificate, default_c4, odi_residual
from core.errors import KSFlowError, PreconditionError
from core.model import (
    check_bounds,
    check_mass_conservation,
    density_from_mass_profile,
    signal_gradient,
    signal_gradient_bound,
)
from core.solver import epsilon_continuation
from utils.validators import SUITES

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "bounds": BOUND_SLACK,
    "mass_conservation": MASS_DRIFT_TOL,
    "signal_gradient": SIGNAL_GRADIENT_TOL,
    "linear_barrier": LINEAR_BARRIER_TOL,
    "concavity": CONCAVITY_TOL,
    "slope_bound": SLOPE_BOUND_TOL,
    "comparison": COMPARISON_ABS_TOL,
    "epsilon_monotonicity": EPSILON_MONOTONE_TOL,
    "odi": ODI_REL_TOL,
}


@dataclass
class CheckResult:
    """One suite outcome; only asserted results decide the exit code."""

    name: str
    value: float | None
    tol: float
    asserted: bool
    passed: bool
    detail: dict = field(default_factory=dict)

    @property
    def failed(self):
        return self.asserted and not self.passed

    def to_dict(self):
        return {"value": self.value, "tol": self.tol, "asserted": self.asserted,
                "passed": self.passed, "detail": self.detail}


def _skipped(name, tol, reason):
    return CheckResult(name, None, tol, asserted=False, passed=False, detail={"skipped": reason})


class VerifyService:
    """Runs the selected check suites against one trajectory."""

    def __init__(self, suites=SUITES, tolerances=None):
        self.suites = tuple(suites)
        self.tolerances = dict(DEFAULT_TOLERANCES)
        self.tolerances.update(tolerances or {})

    def run(self, traj, setup=None, config=None, workers=1):
        """
        Run every selected suite.

        Args:
            traj (Trajectory): Trajectory under test
            setup (RunSetup, optional): Initial data, needed for epsilon monotonicity
            config (RunConfig, optional): Source of eps_list, controls and the threshold block
            workers (int): Processes for the epsilon continuation

        Returns:
            dict: name -> CheckResult, in suite order
        """
        results = {}
        for name in self.suites:
            tol = self.tolerances[name]
            handler = getattr(self, f"_check_{name}")
            try:
                result = handler(traj, tol, setup, config, workers)
            except PreconditionError as err:
                result = _skipped(name, tol, str(err))
            results[name] = result
            level = logging.WARNING if result.failed else logging.INFO
            logger.log(level, "check %-20s value=%s asserted=%s passed=%s",
                       name, result.value, result.asserted, result.passed)
        return results

    @staticmethod
    def exit_ok(results):
        return not any(result.failed for result in results.values())

    @staticmethod
    def report(results):
        return {"passed": VerifyService.exit_ok(results),
                "checks": {name: result.to_dict() for name, result in results.items()}}

    def _check_bounds(self, traj, tol, setup, config, workers):
        p = traj.params
        slack = tol * max(1.0, p.boundary_value)
        excess = deficit = -math.inf
        min_slope = math.inf
        for snap in traj.snapshots:
            report = check_bounds(snap, p)
            excess = max(excess, report.excess)
            deficit = max(deficit, report.deficit)
            min_slope = min(min_slope, report.min_slope)
        tol_mono = traj.controls.tol_mono
        passed = excess <= slack and deficit <= slack and min_slope >= -tol_mono
        return CheckResult("bounds", max(excess, deficit), slack, True, passed,
                           {"excess": excess, "deficit": deficit, "min_slope": min_slope,
                            "tol_mono": tol_mono})

    def _check_mass_conservation(self, traj, tol, setup, config, workers):
        drift = check_mass_conservation(traj, traj.params)
        return CheckResult("mass_conservation", drift, tol, True, drift <= tol)

    def _check_signal_gradient(self, traj, tol, setup, config, workers):
        p = traj.params
        margin = max(signal_gradient_bound(snap, p) for snap in traj.snapshots)
        boundary = max(abs(signal_gradient(snap, p, p.R)) for snap in traj.snapshots)
        passed = margin <= tol and boundary <= BOUNDARY_GRADIENT_TOL
        return CheckResult("signal_gradient", margin, tol, True, passed,
                           {"boundary_value": boundary, "boundary_tol": BOUNDARY_GRADIENT_TOL})

    def _check_linear_barrier(self, traj, tol, setup, config, workers):
        scaled = tol * traj.params.boundary_value
        violation = check_linear_barrier(traj, traj.params)
        state = BarrierState.from_profile(traj.snapshots[0], traj.params)
        return CheckResult("linear_barrier", violation, scaled, True, violation <= scaled,
                           {"y0": state.y0, "t_star": state.t_star})

    def _check_concavity(self, traj, tol, setup, config, workers):
        worst = check_concavity(traj, tol)
        return CheckResult("concavity", worst, tol, True, worst <= tol)

    def _check_slope_bound(self, traj, tol, setup, config, workers):
        frame = check_slope_bound(traj, CONCAVITY_TOL)
        bounded = frame.dropna(subset=["barrier"])
        scaled = tol * max(1.0, float(bounded["barrier"].max())) if not bounded.empty else tol
        excess = float(bounded["excess"].max()) if not bounded.empty else -math.inf
        leftmost = bool((frame["argmax"] == 0).all())
        return CheckResult("slope_bound", excess, scaled, True, excess <= scaled,
                           {"sup_slope_final": float(frame["sup_slope"].iloc[-1]),
                            "sup_at_leftmost_cell": leftmost})

    def _check_comparison(self, traj, tol, setup, config, workers):
        upper = barrier_trajectory(traj, traj.params)
        coeffs = ComparisonCoefficients.for_problem(traj.params, traj.epsilon)
        report = verify_comparison(traj, upper, coeffs, tol)
        return CheckResult("comparison", report.max_order_violation, tol, report.asserted,
                           report.passed, report.to_dict())

    def _check_epsilon_monotonicity(self, traj, tol, setup, config, workers):
        if config is None or setup is None or setup.w0_full is None:
            raise PreconditionError("needs a configuration with initial data")
        if len(config.grid.eps_list) < 2:
            raise PreconditionError("needs grid.eps_list with at least two values")
        if config.controls is None:
            raise PreconditionError("needs a controls block")
        try:
            result = epsilon_continuation(setup.params, setup.w0_full, list(config.grid.eps_list),
                                          config.controls, N=config.grid.N, q=config.grid.q,
                                          workers=workers)
        except KSFlowError as err:
            return CheckResult("epsilon_monotonicity", None, tol, True, False, {"error": str(err)})
        margin = result.min_margin
        return CheckResult("epsilon_monotonicity", margin, tol, True, result.is_monotone(tol),
                           {"pairs": result.table.to_dict(orient="records")})

    def _check_odi(self, traj, tol, setup, config, workers):
        if config is None or config.threshold is None:
            raise PreconditionError("needs a threshold block")
        spec = config.threshold
        p = traj.params
        m0 = spec.m0 if spec.m0 is not None else spec.m0_fraction * p.m
        C4 = spec.C4
        if p.alpha > 1.0 and C4 is None:
            C4 = default_c4(p, density_from_mass_profile(traj.snapshots[0], p), spec.C4_mode)
        cert = build_certificate(p, m0, C4, spec.gamma, traj.snapshots[0])
        series = odi_residual(traj, cert, p, tol)
        # reported, never asserted
        return CheckResult("odi", series.min_residual, series.tol, False, series.holds,
                           {"certificate": cert.to_dict(), "times": len(series.times)})
