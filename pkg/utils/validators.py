"""
Validation utilities for ksflow run configurations.
"""
import math
import os
from numbers import Real

from config import MAX_SWEEP_CELLS

FAMILIES = ("constant", "quadratic", "plateau", "csv")
SUITES = ("bounds", "mass_conservation", "signal_gradient", "linear_barrier", "concavity",
          "slope_bound", "comparison", "epsilon_monotonicity", "odi")
C4_MODES = ("initial", "barrier")


class Validators:
    """Collection of validation functions."""

    @staticmethod
    def validate_number(value, name, minimum=None, maximum=None, strict_min=False, strict_max=False):
        """
        Validate a finite real number against optional bounds.

        Args:
            value: Candidate value
            name (str): Field name for the message
            minimum (float, optional): Lower bound
            maximum (float, optional): Upper bound
            strict_min (bool): Exclude the lower bound
            strict_max (bool): Exclude the upper bound

        Returns:
            tuple: (is_valid, error_message)
        """
        if isinstance(value, bool) or not isinstance(value, Real):
            return False, f"{name} must be a number"
        if not math.isfinite(value):
            return False, f"{name} must be finite"
        if minimum is not None:
            if strict_min and not value > minimum:
                return False, f"{name} must be > {minimum}, got {value}"
            if not strict_min and not value >= minimum:
                return False, f"{name} must be >= {minimum}, got {value}"
        if maximum is not None:
            if strict_max and not value < maximum:
                return False, f"{name} must be < {maximum}, got {value}"
            if not strict_max and not value <= maximum:
                return False, f"{name} must be <= {maximum}, got {value}"
        return True, ""

    @staticmethod
    def validate_integer(value, name, minimum=None):
        """
        Validate an integer (bools rejected).

        Returns:
            tuple: (is_valid, error_message)
        """
        if isinstance(value, bool) or not isinstance(value, int):
            return False, f"{name} must be an integer"
        if minimum is not None and value < minimum:
            return False, f"{name} must be >= {minimum}, got {value}"
        return True, ""

    @staticmethod
    def validate_params_block(block):
        """
        Validate the physical parameters n, R, beta, alpha (and optional m).

        Returns:
            tuple: (is_valid, error_message)
        """
        checks = [
            Validators.validate_integer(block.get("n"), "params.n", 2),
            Validators.validate_number(block.get("R"), "params.R", 0.0, strict_min=True),
            Validators.validate_number(block.get("beta"), "params.beta", 0.0, strict_min=True),
            Validators.validate_number(block.get("alpha"), "params.alpha", 1.0),
        ]
        if "m" in block:
            checks.append(Validators.validate_number(block["m"], "params.m", 0.0, strict_min=True))
        for ok, msg in checks:
            if not ok:
                return False, msg
        return True, ""

    @staticmethod
    def validate_family(name):
        if name not in FAMILIES:
            return False, f"unknown initial-data family '{name}' (expected one of {', '.join(FAMILIES)})"
        return True, ""

    @staticmethod
    def validate_suites(suites):
        if not isinstance(suites, list) or not suites:
            return False, "checks.suites must be a non-empty list"
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            return False, f"unknown check suites: {', '.join(map(str, unknown))}"
        return True, ""

    @staticmethod
    def validate_eps_list(values, s_max):
        """
        Validate a strictly decreasing list of regularization parameters in (0, s_max).

        Returns:
            tuple: (is_valid, error_message)
        """
        if not isinstance(values, list) or not values:
            return False, "grid.eps_list must be a non-empty list"
        for value in values:
            ok, msg = Validators.validate_number(value, "grid.eps_list entry", 0.0, s_max,
                                                 strict_min=True, strict_max=True)
            if not ok:
                return False, msg
        if any(b >= a for a, b in zip(values, values[1:])):
            return False, "grid.eps_list must be strictly decreasing"
        return True, ""

    @staticmethod
    def validate_sweep_size(axes):
        """
        Validate sweep axes: non-empty value lists and at most MAX_SWEEP_CELLS cells.

        Returns:
            tuple: (is_valid, error_message)
        """
        if not isinstance(axes, dict) or not axes:
            return False, "sweep.axes must be a non-empty mapping"
        cells = 1
        for name, values in axes.items():
            if not isinstance(values, list) or not values:
                return False, f"sweep axis '{name}' needs a non-empty list of values"
            cells *= len(values)
        if cells > MAX_SWEEP_CELLS:
            return False, f"sweep has {cells} cells, more than {MAX_SWEEP_CELLS}"
        return True, ""

    @staticmethod
    def validate_file_path(file_path):
        """
        Validate that a referenced file exists and is readable.

        Returns:
            tuple: (is_valid, error_message)
        """
        if not file_path or not isinstance(file_path, str):
            return False, "File path cannot be empty"
        if not os.path.isfile(file_path):
            return False, f"File not found: {file_path}"
        if not os.access(file_path, os.R_OK):
            return False, f"File is not readable: {file_path}"
        return True, ""

    @staticmethod
    def validate_trajectory_dir(path):
        if not path or not isinstance(path, str):
            return False, "trajectory path cannot be empty"
        if not os.path.isdir(path):
            return False, f"no trajectory found in {path}"
        return True, ""
