"""
Run artifact persistence: trajectories, certificates, reports and sweep tables.
"""
import glob
import json
import logging
import math
import os

import numpy as np
import pandas as pd

from config import (
    APP_NAME,
    APP_VERSION,
    CSV_FLOAT_FORMAT,
    DIAG_FILE,
    META_FILE,
    SNAPSHOT_PATTERN,
)
from core.errors import ArtifactError
from core.model import MassProfile, Params
from core.solver import StepControls, StepRecord, Trajectory

logger = logging.getLogger(__name__)


def _jsonable(value):
    """Replace non-finite floats (not valid JSON) by None, recursively."""
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def snapshot_files(root):
    """Snapshot CSVs of a run directory in index order."""
    found = []
    for name in glob.glob(os.path.join(root, "snap_*.csv")):
        index = os.path.basename(name)[len("snap_"):-len(".csv")]
        if index.isdigit():
            found.append((int(index), name))
    return [name for _, name in sorted(found)]


class TrajectoryStore:
    """Handles artifact directories on disk."""

    def __init__(self, root):
        self.root = root

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def save_trajectory(self, traj, extra_meta=None):
        """
        Write meta.json, one snap_<k>.csv per snapshot and diag.csv.

        Args:
            traj (Trajectory): Run to persist
            extra_meta (dict, optional): Additional meta.json entries

        Raises:
            ArtifactError: On any I/O failure
        """
        meta = {
            "app": APP_NAME,
            "version": APP_VERSION,
            "params": traj.params.to_dict(),
            "controls": traj.controls.to_dict(),
            "epsilon": traj.epsilon,
            "termination": traj.termination,
            "snapshots": len(traj.snapshots),
            "steps": len(traj.records),
            "rejected_steps": traj.rejected_steps,
            "t_final": traj.t_final,
        }
        meta.update(extra_meta or {})
        try:
            os.makedirs(self.root, exist_ok=True)
            for stale in snapshot_files(self.root):
                os.remove(stale)
            for k, snap in enumerate(traj.snapshots):
                snap.to_csv(self.path(SNAPSHOT_PATTERN.format(k)))
            traj.diagnostics().to_csv(self.path(DIAG_FILE), index=False, float_format=CSV_FLOAT_FORMAT)
            self._write_json(META_FILE, meta)
        except OSError as err:
            raise ArtifactError(f"cannot write trajectory to {self.root}: {err}") from err
        logger.info("trajectory saved to %s (%d snapshots)", self.root, len(traj.snapshots))

    def load_trajectory(self):
        """
        Read a trajectory directory written by save_trajectory.

        Returns:
            tuple: (Trajectory, meta dict)

        Raises:
            ArtifactError: If the directory is missing or unreadable
        """
        try:
            with open(self.path(META_FILE), "r", encoding="utf-8") as f:
                meta = json.load(f)
            files = snapshot_files(self.root)
            snapshots = [MassProfile.from_csv(name) for name in files]
            diag = pd.read_csv(self.path(DIAG_FILE))
        except (OSError, ValueError, KeyError) as err:
            raise ArtifactError(f"cannot read trajectory from {self.root}: {err}") from err
        if not snapshots:
            raise ArtifactError(f"no snapshots in {self.root}")
        records = [StepRecord(*row) for row in diag[list(StepRecord._fields)].itertuples(index=False)]
        traj = Trajectory(params=Params.from_dict(meta["params"]), epsilon=float(meta["epsilon"]),
                          controls=StepControls.from_dict(meta["controls"]), snapshots=snapshots,
                          termination=meta["termination"], records=records,
                          rejected_steps=int(meta.get("rejected_steps", 0)))
        return traj, meta

    def exists(self):
        return os.path.isfile(self.path(META_FILE))

    def save_json(self, name, data):
        try:
            os.makedirs(self.root, exist_ok=True)
            self._write_json(name, data)
        except OSError as err:
            raise ArtifactError(f"cannot write {name} to {self.root}: {err}") from err

    def save_table(self, name, frame):
        try:
            os.makedirs(self.root, exist_ok=True)
            frame.to_csv(self.path(name), index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as err:
            raise ArtifactError(f"cannot write {name} to {self.root}: {err}") from err

    def _write_json(self, name, data):
        with open(self.path(name), "w", encoding="utf-8") as f:
            json.dump(_jsonable(data), f, indent=2, sort_keys=True)
