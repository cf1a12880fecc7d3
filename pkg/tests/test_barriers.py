import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from config import CONCAVITY_TOL
from core.barriers import (
    BarrierState,
    ComparisonCoefficients,
    barrier_blowup_time,
    barrier_ode_solution,
    barrier_trajectory,
    check_concavity,
    check_linear_barrier,
    check_slope_bound,
    concavity_measure,
    verify_comparison,
)
from core.errors import PreconditionError
from core.model import MassProfile
from core.solver import StepControls, Trajectory


class TestBarrierOde:
    def test_closed_form_values(self):
        assert barrier_ode_solution(1.0, 2, 1.0, 0.25) == pytest.approx(2.0, rel=1e-14)
        assert barrier_ode_solution(1.0, 2, 1.0, 0.0) == 1.0
        assert barrier_ode_solution(1.0, 2, 2.0, 0.1) == pytest.approx(0.2 ** -0.5, rel=1e-14)
        np.testing.assert_allclose(barrier_ode_solution(1.0, 2, 1.0, np.array([0.0, 0.25])), [1.0, 2.0])

    @pytest.mark.parametrize("y0, n, alpha, expected", [(1.0, 2, 1.0, 0.5), (0.5, 2, 1.0, 1.0),
                                                        (1.0, 2, 2.0, 0.125)])
    def test_blowup_times(self, y0, n, alpha, expected):
        assert barrier_blowup_time(y0, n, alpha) == pytest.approx(expected, rel=1e-15)

    def test_rejects_times_past_blowup(self):
        with pytest.raises(PreconditionError):
            barrier_ode_solution(1.0, 2, 1.0, 0.5)
        with pytest.raises(PreconditionError):
            barrier_blowup_time(0.0, 2, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(y0=st.floats(0.1, 2.0), n=st.integers(2, 4), alpha=st.floats(1.0, 3.0))
    def test_closed_form_matches_integration(self, y0, n, alpha):
        t_star = barrier_blowup_time(y0, n, alpha)
        t = 0.9 * t_star
        sol = solve_ivp(lambda _, y: n ** alpha * y ** (alpha + 1.0), (0.0, t), [y0],
                        method="DOP853", rtol=1e-12, atol=1e-14)
        assert sol.success
        assert sol.y[0, -1] == pytest.approx(barrier_ode_solution(y0, n, alpha, t), rel=1e-6)

    def test_state_from_profile(self, disk_params, linear_profile):
        state = BarrierState.from_profile(linear_profile(disk_params), disk_params)
        assert state.y0 == pytest.approx(0.5)
        assert state.t_star == pytest.approx(1.0)
        assert state.y(0.5) == pytest.approx(1.0)


class TestLinearBarrier:
    def test_steady_run_stays_below(self, short_steady_run):
        assert check_linear_barrier(short_steady_run, short_steady_run.params) <= 1e-14

    def test_decreasing_data_stays_below(self, quadratic_run):
        p = quadratic_run.params
        assert quadratic_run.termination == "horizon_reached"
        assert check_linear_barrier(quadratic_run, p) <= 1e-8 * p.boundary_value

    def test_run_past_blowup_time_is_rejected(self, steady_run):
        with pytest.raises(PreconditionError):
            check_linear_barrier(steady_run, steady_run.params)

    def test_barrier_trajectory_shape(self, quadratic_run):
        upper = barrier_trajectory(quadratic_run, quadratic_run.params)
        assert len(upper.snapshots) == len(quadratic_run.snapshots)
        np.testing.assert_array_equal(upper.times, quadratic_run.times)
        assert upper.snapshots[0].values[0] == 0.0
        np.testing.assert_allclose(np.diff(upper.final.slopes()), 0.0, atol=1e-9)


class TestConcavity:
    def test_linear_profile_stays_flat(self, short_steady_run):
        assert check_concavity(short_steady_run) <= 1e-8

    def test_concave_data_stays_nearly_concave(self, quadratic_run):
        assert concavity_measure(quadratic_run.snapshots[0], quadratic_run.params) <= 1e-8
        assert check_concavity(quadratic_run) <= CONCAVITY_TOL

    def test_convex_data_is_a_precondition_error(self, disk_params, make_trajectory):
        s = np.linspace(0.0, 1.0, 21)
        traj = make_trajectory(disk_params, [MassProfile(s, 0.5 * s ** 2)])
        with pytest.raises(PreconditionError):
            check_concavity(traj)


class TestSlopeBound:
    def test_steady_slope_is_constant(self, short_steady_run):
        frame = check_slope_bound(short_steady_run)
        np.testing.assert_allclose(frame["sup_slope"], 0.5, rtol=1e-8)
        assert (frame["excess"] <= 1e-12).all()

    def test_decreasing_data(self, quadratic_run):
        frame = check_slope_bound(quadratic_run)
        assert list(frame.columns) == ["t", "sup_slope", "argmax", "barrier", "excess"]
        assert frame["sup_slope"].iloc[0] == pytest.approx(1.0, abs=1e-2)
        assert frame["argmax"].iloc[0] == 0
        assert (frame["excess"] <= 1e-12).all()


class TestComparison:
    def test_coefficients_of_the_regularized_problem(self, disk_params):
        coeffs = ComparisonCoefficients.for_problem(disk_params, 0.1)
        assert (coeffs.a, coeffs.b, coeffs.gamma, coeffs.delta) == (4, 2.0, 0.0, 1.0)
        assert coeffs.theta == pytest.approx(1.5)
        assert coeffs.c == pytest.approx(-1.0)
        assert coeffs.d == pytest.approx(0.1)

    def test_operator_vanishes_on_steady_state(self, disk_params, linear_profile):
        w = linear_profile(disk_params)
        coeffs = ComparisonCoefficients.for_problem(disk_params)
        np.testing.assert_allclose(coeffs.operator(w.s_nodes, w.values), 0.0, atol=1e-10)

    def test_self_comparison_has_zero_margin(self, short_steady_run):
        coeffs = ComparisonCoefficients.for_problem(short_steady_run.params)
        report = verify_comparison(short_steady_run, short_steady_run, coeffs)
        assert report.max_order_violation == 0.0
        assert report.passed
        assert report.probe_times == len(short_steady_run.snapshots)

    def test_slope_above_the_density_cap_is_not_asserted(self, short_steady_run):
        capped = Trajectory(params=short_steady_run.params, epsilon=0.0,
                            controls=StepControls(t_end=0.5, dt_out=0.05, u_cap=0.5),
                            snapshots=short_steady_run.snapshots, termination=short_steady_run.termination)
        report = verify_comparison(capped, capped, ComparisonCoefficients.for_problem(capped.params))
        assert not report.hypotheses["bounded_slope"]
        assert not report.asserted
        assert report.passed

    def test_solver_run_is_below_the_barrier(self, quadratic_run):
        p = quadratic_run.params
        upper = barrier_trajectory(quadratic_run, p)
        report = verify_comparison(quadratic_run, upper, ComparisonCoefficients.for_problem(p))
        assert report.asserted
        assert report.hypotheses["bounded_slope"]
        assert report.hypotheses["initial_order"]
        assert report.hypotheses["boundary_order"]
        assert report.ordering_holds
        assert report.passed
        assert report.to_dict()["probe_nodes"] == quadratic_run.final.size

    def test_boundary_violation_is_reported_not_asserted(self, quadratic_run):
        p = quadratic_run.params
        upper = barrier_trajectory(quadratic_run, p)
        shifted = Trajectory(params=p, epsilon=0.0, controls=quadratic_run.controls,
                             snapshots=[s.with_values(s.values + 0.01, s.time)
                                        for s in quadratic_run.snapshots])
        report = verify_comparison(shifted, upper, ComparisonCoefficients.for_problem(p))
        assert not report.hypotheses["boundary_order"]
        assert "boundary_order" in report.failed_hypotheses
        assert not report.asserted
        assert report.passed

    def test_disjoint_times_are_rejected(self, quadratic_run, make_trajectory):
        p = quadratic_run.params
        other = make_trajectory(p, [quadratic_run.final.with_values(quadratic_run.final.values, 0.7)])
        with pytest.raises(PreconditionError):
            verify_comparison(quadratic_run, other, ComparisonCoefficients.for_problem(p))
