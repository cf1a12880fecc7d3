"""
Core ksflow logic: one method per subcommand, each returning a process exit code.
"""
import logging
import math

import numpy as np

from config import (
    CERTIFICATE_FILE,
    EXIT_BLOWUP,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_IO_ERROR,
    EXIT_MONOTONICITY,
    EXIT_OK,
    EXIT_STEP_COLLAPSE,
    SWEEP_FILE,
    VERIFY_REPORT_FILE,
)
from core.blowup import build_certificate, default_c4, riccati_solution, sufficiency_ratio
from core.errors import ArtifactError, ConfigError, KSFlowError, PreconditionError
from core.solver import (
    BLOWUP_DECLARED,
    HORIZON_REACHED,
    MONOTONICITY_FAILURE,
    STEP_COLLAPSE,
    existence_time_estimate,
    simulate,
)
from services.initial_data_service import InitialDataService
from services.sweep_service import SweepService
from services.trajectory_store import TrajectoryStore
from services.verify_service import VerifyService

logger = logging.getLogger(__name__)

TERMINATION_CODES = {
    HORIZON_REACHED: EXIT_OK,
    BLOWUP_DECLARED: EXIT_BLOWUP,
    STEP_COLLAPSE: EXIT_STEP_COLLAPSE,
    MONOTONICITY_FAILURE: EXIT_MONOTONICITY,
}


def format_threshold_report(cert, p):
    """Human-readable threshold summary."""
    lines = [
        f"n={p.n} R={p.R:g} beta={p.beta:g} alpha={p.alpha:g} m={p.m:.12g} m0={cert.m0:.12g}",
        f"gamma     = {cert.gamma:.12g}",
        f"c1        = {cert.c1:.12g}",
        f"c2        = {cert.c2:.12g}",
        f"c3        = {cert.c3:.12g}",
        f"C4        = {cert.C4:.12g}",
        f"s1        = {cert.s1:.12g}",
        f"s0        = {cert.s0:.12g}",
        f"r0        = {cert.r0:.12g}",
        f"predicate = {cert.predicate:.12g}",
    ]
    if cert.y0_moment is not None:
        lines.append(f"y(0)      = {cert.y0_moment:.12g}")
        lines.append(f"ratio     = {sufficiency_ratio(cert, cert.y0_moment):.12g}")
        lines.append(f"riccati T = {cert.riccati_T:.12g}")
        midpoint = riccati_midpoint(cert)
        if midpoint is not None:
            lines.append(f"y(T/2)    = {midpoint:.12g}")
        lines.append(f"w0(s0) >= m0/omega_n: {cert.concentration_met}")
    return "\n".join(lines)


def riccati_midpoint(cert):
    """Subsolution value halfway to its escape time, or None when it never escapes."""
    if cert.y0_moment is None or math.isinf(cert.riccati_T):
        return None
    return riccati_solution(cert.y0_moment, cert.A, cert.B, cert.C, 0.5 * cert.riccati_T)


class KSFlowManager:
    """Runs the ksflow subcommands for one parsed configuration."""

    def __init__(self, config, out_dir, workers=1):
        self.config = config
        self.out_dir = out_dir
        self.workers = workers
        self.store = TrajectoryStore(out_dir)

    def run(self, command):
        """
        Dispatch a subcommand and translate failures into exit codes.

        Args:
            command (str): simulate, threshold, verify or sweep

        Returns:
            int: Process exit code
        """
        handler = getattr(self, f"run_{command}", None)
        if handler is None:
            logger.error("unknown command '%s'", command)
            return EXIT_CONFIG_ERROR
        try:
            code = handler()
        except (ConfigError, PreconditionError) as err:
            logger.error("configuration error: %s", err)
            return EXIT_CONFIG_ERROR
        except ArtifactError as err:
            logger.error("I/O failure: %s", err)
            return EXIT_IO_ERROR
        except KSFlowError as err:
            logger.error("%s failed: %s", command, err)
            return EXIT_CHECK_FAILED
        logger.info("%s finished with exit code %d", command, code)
        return code

    def _require_run_blocks(self):
        if self.config.initial_data is None:
            raise ConfigError("this command needs an initial_data block")
        if self.config.controls is None:
            raise ConfigError("this command needs a controls block")

    def _simulate(self):
        self._require_run_blocks()
        setup = InitialDataService.prepare(self.config)
        traj = simulate(setup.params, setup.w0, self.config.grid.epsilon, self.config.controls)
        C_m = float(np.max(setup.w0.slopes()))
        extra = {
            "grid": {"N": self.config.grid.N, "q": self.config.grid.q,
                     "epsilon": self.config.grid.epsilon},
            "initial_data": self.config.document.get("initial_data"),
            "existence_time_estimate": existence_time_estimate(setup.params, C_m),
        }
        self.store.save_trajectory(traj, extra)
        return setup, traj

    def run_simulate(self):
        """Integrate the configured run and write its trajectory directory."""
        _, traj = self._simulate()
        return TERMINATION_CODES[traj.termination]

    def run_threshold(self):
        """Compute the blow-up certificate, print it and write certificate.json."""
        spec = self.config.threshold
        if spec is None:
            raise ConfigError("threshold needs a 'threshold' block")
        setup = InitialDataService.prepare(self.config)
        p = setup.params
        m0 = spec.m0 if spec.m0 is not None else spec.m0_fraction * p.m
        C4 = spec.C4
        if p.alpha > 1.0 and C4 is None:
            if setup.u0 is None:
                raise ConfigError("alpha > 1 needs threshold.C4 or initial_data for the default")
            C4 = default_c4(p, setup.u0, spec.C4_mode)
            logger.info("C4 not given; %s default C4=%.6g", spec.C4_mode, C4)
        cert = build_certificate(p, m0, C4, spec.gamma, setup.w0_full)
        print(format_threshold_report(cert, p))
        payload = cert.to_dict()
        payload["params"] = p.to_dict()
        payload["C4_source"] = "config" if spec.C4 is not None or p.alpha == 1.0 else spec.C4_mode
        self.store.save_json(CERTIFICATE_FILE, payload)
        return EXIT_OK

    def run_verify(self):
        """Run the check suites on a stored trajectory or on a fresh run."""
        setup = None
        if self.config.trajectory is not None:
            source = TrajectoryStore(self.config.trajectory)
            if not source.exists():
                raise ArtifactError(f"no stored trajectory at {self.config.trajectory}")
            traj, _ = source.load_trajectory()
            if self.config.initial_data is not None:
                setup = InitialDataService.prepare(self.config)
        else:
            setup, traj = self._simulate()
        service = VerifyService(self.config.checks.suites, self.config.checks.tolerances)
        results = service.run(traj, setup, self.config, self.workers)
        report = VerifyService.report(results)
        report["termination"] = traj.termination
        self.store.save_json(VERIFY_REPORT_FILE, report)
        return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED

    def run_sweep(self):
        """Run every sweep cell and write sweep.csv."""
        frame = SweepService(self.workers).run(self.config)
        self.store.save_table(SWEEP_FILE, frame)
        logger.info("sweep outcomes: %s", frame["outcome"].value_counts().to_dict())
        return EXIT_OK
