"""
Parameter sweeps: one independent simulation per cell of a cartesian grid of axes.
"""
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor

import pandas as pd

from config import STEADY_TOL
from core.blowup import build_certificate, default_c4
from core.errors import ConfigError
from core.solver import BLOWUP_DECLARED, HORIZON_REACHED, STEP_COLLAPSE, simulate
from services.config_parser import ConfigParser
from services.initial_data_service import InitialDataService

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("outcome", "termination", "t_final", "blowup_time", "sup_u0",
                  "sup_u_final", "s0", "concentration_met", "riccati_T")


def classify(termination, sup_u0, sup_u_final):
    """Outcome label of one cell."""
    if termination != HORIZON_REACHED:
        return termination
    if abs(sup_u_final - sup_u0) <= STEADY_TOL * sup_u0:
        return "steady-like"
    return "decayed" if sup_u_final < sup_u0 else "concentrated"


def certificate_for(config, setup):
    """Blow-up certificate of a prepared run, or None without a threshold block."""
    spec = config.threshold
    if spec is None:
        return None
    p = setup.params
    m0 = spec.m0 if spec.m0 is not None else spec.m0_fraction * p.m
    C4 = spec.C4
    if p.alpha > 1.0 and C4 is None:
        C4 = default_c4(p, setup.u0, spec.C4_mode)
    return build_certificate(p, m0, C4, spec.gamma, setup.w0_full)


def run_cell(job):
    """Simulate one sweep cell; returns the result columns as a dict."""
    index, config = job
    setup = InitialDataService.prepare(config)
    traj = simulate(setup.params, setup.w0, config.grid.epsilon, config.controls)
    sup_u0 = traj.sup_density(0)
    sup_final = traj.sup_density(-1)
    cert = certificate_for(config, setup)
    ended_early = traj.termination in (BLOWUP_DECLARED, STEP_COLLAPSE)
    row = {
        "outcome": classify(traj.termination, sup_u0, sup_final),
        "termination": traj.termination,
        "t_final": traj.t_final,
        "blowup_time": traj.t_final if ended_early else math.nan,
        "sup_u0": sup_u0,
        "sup_u_final": sup_final,
        "s0": cert.s0 if cert else math.nan,
        "concentration_met": cert.concentration_met if cert else None,
        "riccati_T": cert.riccati_T if cert else math.nan,
    }
    logger.debug("cell %d: %s", index, row["outcome"])
    return row


class SweepService:
    """Expands sweep axes into cells and runs them on a process pool."""

    def __init__(self, workers=1):
        self.workers = max(1, int(workers))

    @staticmethod
    def expand(config):
        """
        Build and validate every cell configuration before anything runs.

        Args:
            config (RunConfig): Configuration with a sweep block

        Returns:
            list[tuple]: (axis values dict, RunConfig) per cell, in cartesian order
        """
        if config.sweep is None:
            raise ConfigError("sweep needs a 'sweep' block")
        names = list(config.sweep)
        cells = []
        for values in itertools.product(*(config.sweep[name] for name in names)):
            overrides = dict(zip(names, values))
            document = ConfigParser.build_run_config(config, overrides)
            try:
                cell = ConfigParser.parse_run_config(document)
            except ConfigError as err:
                raise ConfigError(f"sweep cell {overrides}: {err}") from err
            if cell.initial_data is None or cell.controls is None:
                raise ConfigError("sweep cells need initial_data and controls blocks")
            cells.append((overrides, cell))
        return cells

    def run(self, config):
        """
        Run all cells and merge the results by cell index.

        Returns:
            pandas.DataFrame: columns cell, <axes...>, outcome, termination, t_final,
            blowup_time, sup_u0, sup_u_final, s0, concentration_met, riccati_T
        """
        cells = self.expand(config)
        jobs = [(index, cell) for index, (_, cell) in enumerate(cells)]
        logger.info("sweep: %d cells on %d worker(s)", len(jobs), self.workers)
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run_cell, jobs))
        else:
            results = [run_cell(job) for job in jobs]

        rows = []
        for index, ((axes, _), result) in enumerate(zip(cells, results)):
            row = {"cell": index}
            row.update(axes)
            row.update(result)
            rows.append(row)
        columns = ["cell", *config.sweep, *RESULT_COLUMNS]
        return pd.DataFrame(rows, columns=columns)
