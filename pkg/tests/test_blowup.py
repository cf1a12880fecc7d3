import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from core.blowup import (
    build_certificate,
    check_concentration,
    concentration_threshold,
    constants,
    default_c4,
    moment,
    moment_lower_bound,
    odi_residual,
    riccati_blowup_time,
    riccati_roots,
    riccati_solution,
    select_gamma,
    subsolution_blowup_time,
    sufficiency_ratio,
)
from core.errors import ConfigError, PreconditionError
from core.model import MassProfile, Params, RadialProfile, build_params, mass_profile_from_density
from core.solver import BLOWUP_DECLARED, STEP_COLLAPSE, Grid, StepControls, simulate
from services.initial_data_service import InitialDataService
from threshold_oracle import reference


class TestGamma:
    @pytest.mark.parametrize("n, beta, expected", [(2, 1.0, 0.5), (2, 4.0, 0.9), (3, 0.3, 1.3 / 3.0)])
    def test_default_selection(self, n, beta, expected):
        assert select_gamma(n, beta) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("override", [0.0, 1.0, 0.6])
    def test_rejects_inadmissible_override(self, override):
        with pytest.raises(ConfigError):
            select_gamma(2, 1.0, override)

    def test_accepts_admissible_override(self):
        assert select_gamma(2, 1.0, 0.25) == 0.25


class TestConstants:
    def test_reference_values(self, disk_params):
        c1, c2, c3 = constants(disk_params, 0.5, 1.0)
        assert c1 == pytest.approx(128.0 / 3.0, rel=1e-14)
        assert c2 == pytest.approx(0.040528, rel=1e-4)
        assert c3 == pytest.approx(0.024641, rel=1e-4)
        assert c3 * disk_params.omega_n == pytest.approx(0.154822, rel=1e-5)

    def test_threshold_matches_independent_evaluation(self, disk_params):
        expected = reference()
        cert = build_certificate(disk_params, math.pi, C4=1.0)
        for key in ("gamma", "c1", "c2", "c3", "s1", "r0"):
            assert getattr(cert, key) == pytest.approx(expected[key], rel=1e-10), key
        assert cert.s1 == pytest.approx(1.17e-5, rel=1e-2)
        assert cert.s0 == pytest.approx(cert.s1 / 2.0)
        assert cert.r0 == pytest.approx(2.42e-3, rel=1e-2)

    def test_threshold_with_alpha_above_one_matches_oracle(self):
        p = Params.create(3, 1.5, 0.8, 2.0, 10.0)
        cert = build_certificate(p, 4.0, C4=3.0)
        expected = reference(n=3, beta=0.8, alpha=2.0, R=1.5, m=10.0, m0=4.0, C4=3.0)
        for key in ("gamma", "c1", "c2", "c3", "s1", "r0"):
            assert getattr(cert, key) == pytest.approx(expected[key], rel=1e-10), key

    def test_rejects_mass_above_total(self, disk_params):
        with pytest.raises(ConfigError):
            concentration_threshold(disk_params, 4.0, 1.0)
        with pytest.raises(ConfigError):
            concentration_threshold(disk_params, 0.0, 1.0)

    @settings(max_examples=500, deadline=None)
    @given(n=st.integers(2, 5), beta=st.floats(0.5, 4.0), alpha=st.floats(1.0, 3.0),
           R=st.floats(0.5, 3.0), m=st.floats(0.5, 50.0), fraction=st.floats(0.1, 1.0),
           C4=st.floats(0.1, 10.0))
    def test_threshold_satisfies_the_sufficiency_predicate(self, n, beta, alpha, R, m, fraction, C4):
        p = Params.create(n, R, beta, alpha, m)
        cert = build_certificate(p, fraction * m, C4=C4)
        assert 0.0 < cert.s1 < p.s_max
        assert cert.predicate <= 1.0 + 1e-12
        y = moment_lower_bound(cert)
        assert sufficiency_ratio(cert, y) == cert.predicate
        assert sufficiency_ratio(cert, 2.0 * y) < cert.predicate
        assert sufficiency_ratio(cert, 0.0) == math.inf


class TestCertificate:
    def test_alpha_one_forces_unit_c4(self, disk_params):
        assert build_certificate(disk_params, 1.0, C4=3.0).C4 == 1.0

    def test_alpha_above_one_needs_c4(self):
        with pytest.raises(ConfigError):
            build_certificate(Params.create(2, 1.0, 1.0, 2.0, 1.0), 0.5)

    def test_to_dict_without_initial_data(self, disk_params):
        data = build_certificate(disk_params, math.pi).to_dict()
        assert data["y0_moment"] is None
        assert data["riccati_T"] is None and data["riccati_finite"] is None
        assert data["predicate"] <= 1.0 + 1e-12

    def test_default_c4(self):
        u0 = RadialProfile(np.linspace(0.0, 1.0, 11), np.ones(11))
        assert default_c4(Params.create(2, 1.0, 1.0, 1.0, math.pi), u0) == 1.0
        p = Params.create(2, 1.0, 1.0, 2.0, math.pi)
        assert default_c4(p, u0, "initial") == pytest.approx(4.0)
        assert default_c4(p, u0, "barrier") == pytest.approx(0.5 * 0.5 ** -0.5)
        with pytest.raises(ConfigError):
            default_c4(p, u0, "other")


class TestConcentration:
    def test_concave_profile(self, disk_params):
        s = np.linspace(0.0, 1.0, 101)
        assert check_concentration(MassProfile(s, s - s ** 2 / 2.0), 0.1, 0.5, disk_params)

    def test_diffuse_profile(self, disk_params):
        s = np.linspace(0.0, 1.0, 101)
        assert not check_concentration(MassProfile(s, s / 2.0), 1e-5, math.pi, disk_params)

    @pytest.mark.parametrize("s0", [1e-6, 0.1, 0.9])
    def test_fully_concentrated_profile(self, disk_params, s0):
        w = MassProfile(np.array([0.0, 1e-9, 0.5, 1.0]), np.full(4, 0.5) * [0, 1, 1, 1])
        assert check_concentration(w, s0, math.pi, disk_params)


class TestMoment:
    def test_linear_profile(self):
        s = np.linspace(0.0, 1.0, 11)
        assert moment(MassProfile(s, s / 2.0), 1.0, 0.5) == pytest.approx(
            0.5 * (1.0 / 1.5 - 1.0 / 2.5), rel=1e-12)

    def test_grid_not_starting_at_zero(self):
        s = np.linspace(0.2, 1.0, 9)
        assert moment(MassProfile(s, s / 2.0), 1.0, 0.5) == pytest.approx(
            0.5 * (1.0 / 1.5 - 1.0 / 2.5), rel=1e-12)

    def test_zero_profile(self):
        s = np.linspace(0.0, 1.0, 5)
        assert moment(MassProfile(s, np.zeros(5)), 0.5, 0.3) == 0.0

    def test_rejects_bad_arguments(self):
        s = np.linspace(0.0, 1.0, 5)
        w = MassProfile(s, s)
        with pytest.raises(PreconditionError):
            moment(w, 2.0, 0.5)
        with pytest.raises(PreconditionError):
            moment(w, 0.5, 1.0)

    def test_lower_bound_from_concentrated_mass(self, disk_params):
        cert = build_certificate(disk_params, math.pi)
        level = cert.m0 / disk_params.omega_n
        w = MassProfile(np.array([0.0, cert.s0, 1.0]), np.array([0.0, level, level]))
        assert moment(w, cert.s1, cert.gamma) >= moment_lower_bound(cert) * (1.0 - 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(steps=st.lists(st.floats(0.01, 1.0), min_size=3, max_size=20),
           rises=st.lists(st.floats(0.0, 1.0), min_size=20, max_size=20),
           cut=st.floats(0.05, 1.0), gamma=st.floats(0.05, 0.95))
    def test_matches_adaptive_quadrature(self, steps, rises, cut, gamma):
        s = np.concatenate(([0.0], np.cumsum(steps)))
        w = np.concatenate(([0.0], np.cumsum(rises[:len(steps)]) + 0.01 * np.arange(1, len(s))))
        profile = MassProfile(s, w)
        s1 = cut * s[-1]

        def integrand(x):
            return (s1 - x) * np.interp(x, s, w)

        breaks = np.append(s[s < s1], s1)
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            if a == 0.0:
                value, _ = quad(integrand, a, b, weight="alg", wvar=(-gamma, 0.0), epsabs=0.0, epsrel=1e-13)
            else:
                value, _ = quad(lambda x: x ** -gamma * integrand(x), a, b, epsabs=0.0, epsrel=1e-13)
            total += value
        assert moment(profile, s1, gamma) == pytest.approx(total, rel=1e-10)


class TestRiccati:
    def test_closed_form_time(self):
        assert riccati_blowup_time(2.0, 1.0, 0.0, 1.0) == pytest.approx(0.5 * math.log(3.0), rel=1e-14)
        assert riccati_roots(1.0, 0.0, 1.0) == pytest.approx((-1.0, 1.0))

    def test_equilibrium_never_escapes(self):
        _, y_plus = riccati_roots(2.0, 1.0, 3.0)
        assert riccati_blowup_time(y_plus, 2.0, 1.0, 3.0) == math.inf
        assert riccati_blowup_time(0.5 * y_plus, 2.0, 1.0, 3.0) == math.inf

    def test_closed_form_solution(self):
        assert riccati_solution(2.0, 1.0, 0.0, 1.0, 0.0) == pytest.approx(2.0)
        ratio = math.exp(0.5) / 3.0
        assert riccati_solution(2.0, 1.0, 0.0, 1.0, 0.25) == pytest.approx((1 + ratio) / (1 - ratio), rel=1e-13)
        with pytest.raises(PreconditionError):
            riccati_solution(2.0, 1.0, 0.0, 1.0, 0.6)

    @settings(max_examples=100, deadline=None)
    @given(A=st.floats(0.5, 5.0), B=st.floats(0.0, 3.0), C=st.floats(0.0, 3.0), excess=st.floats(0.1, 5.0))
    def test_escape_time_matches_integration(self, A, B, C, excess):
        _, y_plus = riccati_roots(A, B, C)
        y_init = y_plus + excess
        T = riccati_blowup_time(y_init, A, B, C)
        ceiling = 1e9

        def escaped(_, y):
            return y[0] - ceiling

        escaped.terminal = True
        sol = solve_ivp(lambda _, y: A * y ** 2 - B * y - C, (0.0, 2.0 * T), [y_init],
                        method="DOP853", rtol=1e-12, atol=1e-12, events=escaped)
        assert sol.t_events[0].size == 1
        assert abs(sol.t_events[0][0] - T) <= 1e-6 * T + 2.0 / (A * ceiling)


@pytest.fixture(scope="module")
def plateau_case():
    """n=2, beta=2, alpha=1: a dense plateau holding most of the mass near the origin."""
    options = {"amplitude": 4000.0, "radius": 0.05, "tail": 0.05}
    r = np.linspace(0.0, 1.0, 401)
    u0 = RadialProfile(r, InitialDataService.density("plateau", options, r, 1.0))
    p = build_params(2, 1.0, 2.0, 1.0, u0)
    w0 = mass_profile_from_density(u0, p, Grid.graded(p, 200, 2.0))
    cert = build_certificate(p, p.m / 4.0, gamma=0.9, w0=w0)
    return p, w0, cert


def test_plateau_meets_the_concentration_condition(plateau_case):
    p, w0, cert = plateau_case
    assert cert.gamma == 0.9
    assert cert.concentration_met
    assert cert.y0_moment > moment_lower_bound(cert) * (1.0 - 1e-9)
    assert math.isfinite(cert.riccati_T)
    assert subsolution_blowup_time(cert.y0_moment, cert, p) == cert.riccati_T
    assert subsolution_blowup_time(0.0, cert, p) == math.inf
    assert cert.to_dict()["riccati_finite"] is True


def test_concentrated_data_blows_up(plateau_case):
    p, w0, cert = plateau_case
    controls = StepControls(t_end=cert.riccati_T, dt_out=cert.riccati_T / 2000.0, u_cap=1e5)
    traj = simulate(p, w0, 0.0, controls)
    assert traj.termination in (BLOWUP_DECLARED, STEP_COLLAPSE)
    assert traj.t_final < cert.riccati_T
    series = odi_residual(traj, cert, p)
    assert series.residuals[0] == 0.0
    assert series.moments[0] == pytest.approx(cert.y0_moment)
    assert series.holds
    assert series.moments[-1] > series.moments[0]
    assert list(series.frame().columns) == ["t", "y", "residual"]


def test_moment_inequality_needs_three_snapshots(short_steady_run, make_trajectory):
    p = short_steady_run.params
    cert = build_certificate(p, p.m / 2.0)
    with pytest.raises(PreconditionError):
        odi_residual(make_trajectory(p, short_steady_run.snapshots[:2]), cert, p)
    series = odi_residual(short_steady_run, cert, p)
    assert series.residuals[0] == 0.0
    assert series.holds
    assert len(series.times) == len(short_steady_run.snapshots)
