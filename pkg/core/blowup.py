"""
Concentration thresholds for finite-time blow-up, the singular-weight moment
y(t) = int_0^{s1} s^(-gamma) (s1 - s) w(s, t) ds and its Riccati subsolution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from config import C4_SAFETY, GAMMA_CAP, ODI_REL_TOL, THRESHOLD_CAP
from core.barriers import barrier_blowup_time, barrier_ode_solution
from core.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


def gamma_limit(n, beta):
    return 1.0 - 2.0 / n + beta / n


def select_gamma(n, beta, override=None):
    """
    Moment weight exponent.

    Args:
        n (int): Spatial dimension
        beta (float): Diffusion exponent
        override (float, optional): Requested gamma

    Returns:
        float: override when admissible, else min(0.9, 1 - 2/n + beta/n)

    Raises:
        ConfigError: If override is outside (0, 1) or above 1 - 2/n + beta/n
    """
    if n < 2 or not beta > 0:
        raise ConfigError(f"need n >= 2 and beta > 0, got n={n}, beta={beta}")
    limit = gamma_limit(n, beta)
    if override is not None:
        if not 0.0 < override < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {override}")
        if override > limit:
            raise ConfigError(f"gamma={override} exceeds 1 - 2/n + beta/n = {limit:.6g}")
        return float(override)
    gamma = min(GAMMA_CAP, limit)
    if not 0.0 < gamma <= GAMMA_CAP:
        raise ConfigError(f"no admissible gamma for n={n}, beta={beta}")
    return gamma


def _check_gamma(n, beta, gamma):
    if not 0.0 < gamma < 1.0 or gamma > gamma_limit(n, beta) * (1.0 + 1e-15):
        raise ConfigError(f"gamma={gamma} is not admissible for n={n}, beta={beta}")


def constants(p, gamma, C4):
    """
    The constants c1, c2, c3 of the moment inequality.

    c1 = 8 (2 - 2/n + beta/n - gamma)^2 n^(4-alpha) / ((3 - 4/n + 2 beta/n - gamma) alpha)
    c2 = 2 C4^2 n^alpha / (alpha (3 - gamma) omega_n^2)
    c3 = [(1 - 2^-(1-gamma)) / (1 - gamma) - (1 - 2^-(2-gamma)) / (2 - gamma)] / omega_n

    Returns:
        tuple: (c1, c2, c3)
    """
    _check_gamma(p.n, p.beta, gamma)
    if not C4 > 0.0:
        raise ConfigError(f"C4 must be positive, got {C4}")
    n, beta, alpha = p.n, p.beta, p.alpha
    denominator = 3.0 - 4.0 / n + 2.0 * beta / n - gamma
    assert denominator > 0.0, "admissible gamma keeps 3 - 4/n + 2 beta/n - gamma positive"
    c1 = 8.0 * (2.0 - 2.0 / n + beta / n - gamma) ** 2 * n ** (4.0 - alpha) / (denominator * alpha)
    c2 = 2.0 * C4 ** 2 * n ** alpha / (alpha * (3.0 - gamma) * p.omega_n ** 2)
    bracket = ((1.0 - 2.0 ** (-(1.0 - gamma))) / (1.0 - gamma)
               - (1.0 - 2.0 ** (-(2.0 - gamma))) / (2.0 - gamma))
    return c1, c2, bracket / p.omega_n


def concentration_threshold(p, m0, C4, gamma=None):
    """
    Largest s1 <= R^n meeting both power constraints, with s0 = s1/2 and r0 = s0^(1/n).

    Constraints:
        s1^(2 - 4/n + 2 beta/n) <= alpha n^alpha (1-gamma) c3^2 m0^2 / (12 c1)
        alpha > 1: s1^2 <= min(alpha n^alpha (1-gamma) c3^2 m0^2 R^2n / (12 c2 m^2),
                               alpha^2 (1-gamma)^2 c3^2 m0^2 / (144 (alpha-1)^2))
        alpha = 1: s1^2 <= alpha n^alpha (1-gamma) c3^2 m0^2 R^2n / (6 c2 m^2)

    Returns:
        tuple: (s0, s1, r0)

    Raises:
        ConfigError: If m0 is outside (0, m] or the exponent-free constraint fails
    """
    if not 0.0 < m0 <= p.m * (1.0 + 1e-12):
        raise ConfigError(f"m0 must lie in (0, m={p.m:.6g}], got {m0}")
    gamma = select_gamma(p.n, p.beta) if gamma is None else gamma
    c1, c2, c3 = constants(p, gamma, C4)
    n, alpha, R = p.n, p.alpha, p.R
    base = alpha * n ** alpha * (1.0 - gamma) * c3 ** 2 * m0 ** 2
    exponent = 2.0 - 4.0 / n + 2.0 * p.beta / n
    bounds = []
    rhs = base / (12.0 * c1)
    if exponent > 0.0:
        bounds.append(rhs ** (1.0 / exponent))
    elif rhs < 1.0:
        raise ConfigError("concentration constraint is infeasible for these parameters")
    if alpha > 1.0:
        squared = min(base * R ** (2 * n) / (12.0 * c2 * p.m ** 2),
                      alpha ** 2 * (1.0 - gamma) ** 2 * c3 ** 2 * m0 ** 2 / (144.0 * (alpha - 1.0) ** 2))
    else:
        squared = base * R ** (2 * n) / (6.0 * c2 * p.m ** 2)
    bounds.append(math.sqrt(squared))
    s1 = min(min(bounds), p.s_max * THRESHOLD_CAP)
    s0 = 0.5 * s1
    return s0, s1, s0 ** (1.0 / n)


def check_concentration(w0, s0, m0, p):
    """True iff w0(s0) >= m0 / omega_n, i.e. the ball of volume coordinate s0 holds mass m0."""
    return bool(w0.at(s0) >= m0 / p.omega_n)


def moment(w, s1, gamma):
    """
    int_0^{s1} s^(-gamma) (s1 - s) w(s) ds for the piecewise-linear w, cell by cell.

    On a cell w = P + k s, and the integrand P s1 s^-gamma + (k s1 - P) s^(1-gamma) - k s^(2-gamma)
    is integrated with power antiderivatives. Below the first node w is continued
    linearly to w(0) = 0.

    Raises:
        PreconditionError: If s1 exceeds the grid or gamma is outside (0, 1)
    """
    if not 0.0 < gamma < 1.0:
        raise PreconditionError(f"gamma must lie in (0, 1), got {gamma}")
    s, v = w.s_nodes, w.values
    if not 0.0 < s1 <= s[-1] * (1.0 + 1e-12):
        raise PreconditionError(f"s1={s1} exceeds the grid end {s[-1]}")
    if s[0] > 0.0:
        s = np.concatenate(([0.0], s))
        v = np.concatenate(([0.0], v))
    inside = s < s1
    nodes = np.append(s[inside], s1)
    values = np.append(v[inside], np.interp(s1, s, v))
    a, b = nodes[:-1], nodes[1:]
    k = np.diff(values) / np.diff(nodes)
    P = values[:-1] - k * a

    def antiderivative(x):
        return (P * s1 * x ** (1.0 - gamma) / (1.0 - gamma)
                + (k * s1 - P) * x ** (2.0 - gamma) / (2.0 - gamma)
                - k * x ** (3.0 - gamma) / (3.0 - gamma))

    return float(np.sum(antiderivative(b) - antiderivative(a)))


def moment_lower_bound(cert):
    """c3 m0 s1^(2 - gamma), the moment of data holding m0 in the ball of volume s1/2."""
    return cert.c3 * cert.m0 * cert.s1 ** (2.0 - cert.gamma)


def riccati_coefficients(p, gamma, s1, c1, c2):
    """A, B, C of y' = A y^2 - B y - C."""
    A = p.alpha * p.n ** p.alpha * (1.0 - gamma) / 4.0 * s1 ** (gamma - 3.0)
    B = (p.alpha - 1.0) * p.n ** p.alpha
    C = (c1 * s1 ** (3.0 - 4.0 / p.n + 2.0 * p.beta / p.n - gamma)
         + c2 * (p.m ** 2 / p.R ** (2 * p.n)) * s1 ** (3.0 - gamma))
    return A, B, C


def riccati_roots(A, B, C):
    assert A > 0.0, "the quadratic coefficient is positive for admissible inputs"
    disc = math.sqrt(B * B + 4.0 * A * C)
    return (B - disc) / (2.0 * A), (B + disc) / (2.0 * A)


def riccati_blowup_time(y_init, A, B, C):
    """
    Escape time of y' = A y^2 - B y - C from y_init, or inf when y_init <= y+.

    T = ln((y_init - y-) / (y_init - y+)) / (A (y+ - y-))
    """
    if not y_init >= 0.0:
        raise PreconditionError(f"y_init must be nonnegative, got {y_init}")
    y_minus, y_plus = riccati_roots(A, B, C)
    if y_init <= y_plus:
        return math.inf
    return math.log((y_init - y_minus) / (y_init - y_plus)) / (A * (y_plus - y_minus))


def riccati_solution(y_init, A, B, C, t):
    """Closed-form solution of the Riccati subsolution at times t before its escape."""
    y_minus, y_plus = riccati_roots(A, B, C)
    times = np.asarray(t, dtype=float)
    if y_init == y_plus:
        y = np.full_like(times, y_plus)
        return float(y) if y.ndim == 0 else y
    if np.any(times >= riccati_blowup_time(y_init, A, B, C)):
        raise PreconditionError("t reaches the escape time of the subsolution")
    ratio = (y_init - y_plus) / (y_init - y_minus) * np.exp(A * (y_plus - y_minus) * times)
    y = (y_plus - ratio * y_minus) / (1.0 - ratio)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class BlowupCertificate:
    """Constants, thresholds and moment data of one blow-up assessment."""

    gamma: float
    c1: float
    c2: float
    c3: float
    C4: float
    m0: float
    s0: float
    s1: float
    r0: float
    A: float
    B: float
    C: float
    y0_moment: float | None = None
    riccati_T: float | None = None
    concentration_met: bool | None = None
    odi_residuals: tuple = field(default_factory=tuple)

    @property
    def predicate(self):
        """Sufficiency ratio evaluated at the moment lower bound c3 m0 s1^(2-gamma)."""
        return sufficiency_ratio(self, moment_lower_bound(self))

    def to_dict(self):
        T = self.riccati_T
        return {"gamma": self.gamma, "c1": self.c1, "c2": self.c2, "c3": self.c3,
                "C4": self.C4, "m0": self.m0, "s0": self.s0, "s1": self.s1, "r0": self.r0,
                "A": self.A, "B": self.B, "C": self.C, "predicate": self.predicate,
                "y0_moment": self.y0_moment,
                "riccati_T": None if T is None or math.isinf(T) else T,
                "riccati_finite": None if T is None else not math.isinf(T),
                "concentration_met": self.concentration_met,
                "odi_residuals": list(self.odi_residuals)}


def default_c4(p, u0, mode="initial", horizon=None):
    """
    A-priori slope power C4 = ||w_s||^(alpha-1) for alpha > 1; exactly 1 for alpha = 1.

    Args:
        p (Params): Problem parameters
        u0 (RadialProfile): Initial density
        mode (str): "initial" for 2 (n sup u0)^(alpha-1); "barrier" for y(T)^(alpha-1)
            with y the slope barrier started at sup u0 / n
        horizon (float, optional): T for the barrier mode, default t*/2

    Returns:
        float: C4
    """
    if p.alpha == 1.0:
        return 1.0
    sup_u = float(np.max(u0.values))
    if not sup_u > 0.0:
        raise PreconditionError("initial density vanishes identically")
    if mode == "initial":
        return C4_SAFETY * (p.n * sup_u) ** (p.alpha - 1.0)
    if mode == "barrier":
        y0 = sup_u / p.n
        t_star = barrier_blowup_time(y0, p.n, p.alpha)
        T = 0.5 * t_star if horizon is None else horizon
        return barrier_ode_solution(y0, p.n, p.alpha, T) ** (p.alpha - 1.0)
    raise ConfigError(f"unknown C4 mode '{mode}'")


def sufficiency_ratio(cert, y0):
    """(C + B y0) / (A y0^2); at most 1 means the moment escapes in finite time."""
    if not y0 > 0.0:
        return math.inf
    return (cert.C + cert.B * y0) / (cert.A * y0 * y0)


def subsolution_blowup_time(y_init, cert, p):
    """Escape time of the Riccati subsolution started at y_init, or inf."""
    return riccati_blowup_time(y_init, cert.A, cert.B, cert.C)


def build_certificate(p, m0, C4=None, gamma=None, w0=None):
    """
    Assemble thresholds, constants and, given initial data, the moment prediction.

    Args:
        p (Params): Problem parameters
        m0 (float): Mass to concentrate, 0 < m0 <= m
        C4 (float, optional): Slope power; required for alpha > 1, forced to 1 for alpha = 1
        gamma (float, optional): Moment weight exponent
        w0 (MassProfile, optional): Initial profile for y0_moment, riccati_T and the
            concentration test

    Returns:
        BlowupCertificate: The assembled certificate
    """
    if p.alpha == 1.0:
        if C4 is not None and C4 != 1.0:
            logger.warning("C4=%g ignored: alpha = 1 forces C4 = 1", C4)
        C4 = 1.0
    elif C4 is None:
        raise ConfigError("C4 is required when alpha > 1")
    gamma = select_gamma(p.n, p.beta, gamma)
    c1, c2, c3 = constants(p, gamma, C4)
    s0, s1, r0 = concentration_threshold(p, m0, C4, gamma)
    A, B, C = riccati_coefficients(p, gamma, s1, c1, c2)
    cert = BlowupCertificate(gamma=gamma, c1=c1, c2=c2, c3=c3, C4=float(C4), m0=float(m0),
                             s0=s0, s1=s1, r0=r0, A=A, B=B, C=C)
    if w0 is not None:
        y0 = moment(w0, s1, gamma)
        cert = replace(cert, y0_moment=y0,
                       riccati_T=riccati_blowup_time(y0, A, B, C),
                       concentration_met=check_concentration(w0, s0, m0, p))
    logger.info("threshold: gamma=%.4g s1=%.6g r0=%.6g predicate=%.6g",
                gamma, s1, r0, cert.predicate)
    return cert


class OdiSeries(NamedTuple):
    times: np.ndarray
    moments: np.ndarray
    residuals: np.ndarray
    tol: float

    @property
    def min_residual(self):
        return float(np.min(self.residuals))

    @property
    def holds(self):
        return self.min_residual >= -self.tol

    def frame(self):
        return pd.DataFrame({"t": self.times, "y": self.moments, "residual": self.residuals})


def odi_residual(traj, cert, p, rel_tol=ODI_REL_TOL):
    """
    y(t) - [y(0) + A int y^2 + (1 - alpha) n^alpha int y - C t] along the snapshots.

    Time integrals are trapezoids over the snapshot sequence.

    Raises:
        PreconditionError: With fewer than three snapshots
    """
    if len(traj.snapshots) < 3:
        raise PreconditionError("the moment inequality needs at least three snapshots")
    times = traj.times - traj.snapshots[0].time
    y = np.array([moment(snap, cert.s1, cert.gamma) for snap in traj.snapshots])
    square = cumulative_trapezoid(y * y, times, initial=0.0)
    linear = cumulative_trapezoid(y, times, initial=0.0)
    rhs = y[0] + cert.A * square + (1.0 - p.alpha) * p.n ** p.alpha * linear - cert.C * times
    residuals = y - rhs
    series = OdiSeries(times, y, residuals, rel_tol * y[0])
    logger.debug("moment inequality: min residual %.3e (tol %.3e)", series.min_residual, series.tol)
    return series
