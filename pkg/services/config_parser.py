"""
Parse ksflow run configurations (one JSON document per run).
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

from config import DEFAULT_GRADING, DEFAULT_NODES
from core.errors import ArtifactError, ConfigError
from core.solver import StepControls
from utils.validators import C4_MODES, SUITES, Validators

TOP_LEVEL_KEYS = ("params", "initial_data", "grid", "controls", "checks", "threshold",
                  "sweep", "trajectory", "output")
PARAM_KEYS = ("n", "R", "beta", "alpha", "m")
FAMILY_KEYS = {
    "constant": ("value",),
    "quadratic": ("scale",),
    "plateau": ("amplitude", "radius", "tail"),
    "csv": ("path",),
}
GRID_KEYS = ("N", "q", "epsilon", "eps_list")
CONTROL_KEYS = ("t_end", "cfl", "dt_init", "dt_min", "dt_max", "u_cap", "tol_mono",
                "dt_out", "growth", "max_steps")
CHECK_KEYS = ("suites", "tolerances")
THRESHOLD_KEYS = ("m0", "m0_fraction", "C4", "C4_mode", "gamma")


@dataclass(frozen=True)
class InitialDataSpec:
    family: str
    options: dict = field(default_factory=dict)
    nodes: int | None = None


@dataclass(frozen=True)
class GridSpec:
    N: int = DEFAULT_NODES
    q: float = DEFAULT_GRADING
    epsilon: float = 0.0
    eps_list: tuple = ()


@dataclass(frozen=True)
class ThresholdSpec:
    m0: float | None = None
    m0_fraction: float | None = None
    C4: float | None = None
    C4_mode: str = "initial"
    gamma: float | None = None


@dataclass(frozen=True)
class ChecksSpec:
    suites: tuple = ()
    tolerances: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run configuration."""

    params: dict
    initial_data: InitialDataSpec | None = None
    grid: GridSpec = GridSpec()
    controls: StepControls | None = None
    checks: ChecksSpec = ChecksSpec()
    threshold: ThresholdSpec | None = None
    sweep: dict | None = None
    trajectory: str | None = None
    output: str | None = None
    document: dict = field(default_factory=dict, compare=False)


class ConfigParser:
    """Parses run configuration documents."""

    @staticmethod
    def load_run_config(path):
        """
        Read and parse a JSON configuration file.

        Relative file references inside the document resolve against the
        directory of the configuration file.

        Args:
            path (str): Path to the JSON document

        Returns:
            RunConfig: Parsed configuration

        Raises:
            ArtifactError: If the file cannot be read
            ConfigError: If the document is malformed or invalid
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as err:
            raise ArtifactError(f"cannot read config {path}: {err}") from err
        try:
            document = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from err
        return ConfigParser.parse_run_config(document, os.path.dirname(os.path.abspath(path)))

    @staticmethod
    def parse_run_config(document, base_dir=None):
        """
        Parse and validate a configuration document.

        Args:
            document (dict): Decoded JSON document
            base_dir (str, optional): Directory for relative paths

        Returns:
            RunConfig: Parsed configuration

        Raises:
            ConfigError: On unknown keys, missing blocks or out-of-range values
        """
        if not isinstance(document, dict):
            raise ConfigError("config must be a JSON object")
        ConfigParser._reject_unknown(document, TOP_LEVEL_KEYS, "config")
        if "params" not in document:
            raise ConfigError("config needs a 'params' block")

        params = ConfigParser._parse_params(document["params"])
        initial = None
        if "initial_data" in document:
            initial = ConfigParser._parse_initial_data(document["initial_data"], base_dir)
            if "m" in params:
                raise ConfigError("params.m conflicts with initial_data (the mass comes from the data)")
        s_max = params["R"] ** params["n"]
        grid = ConfigParser._parse_grid(document.get("grid", {}), s_max)
        controls = None
        if "controls" in document:
            controls = ConfigParser._parse_controls(document["controls"])
        checks = ConfigParser._parse_checks(document.get("checks", {}))
        threshold = None
        if "threshold" in document:
            threshold = ConfigParser._parse_threshold(document["threshold"])
        sweep = None
        if "sweep" in document:
            sweep = ConfigParser._parse_sweep(document["sweep"])
        trajectory = document.get("trajectory")
        if trajectory is not None:
            trajectory = ConfigParser._resolve(trajectory, base_dir)
            ok, msg = Validators.validate_trajectory_dir(trajectory)
            if not ok:
                raise ConfigError(msg)
        output = document.get("output")
        if output is not None:
            if not isinstance(output, str) or not output:
                raise ConfigError("output must be a non-empty path")
            output = ConfigParser._resolve(output, base_dir)

        return RunConfig(params=params, initial_data=initial, grid=grid, controls=controls,
                         checks=checks, threshold=threshold, sweep=sweep,
                         trajectory=trajectory, output=output,
                         document=ConfigParser._resolved_document(document, initial, trajectory))

    @staticmethod
    def _reject_unknown(block, allowed, where):
        if not isinstance(block, dict):
            raise ConfigError(f"{where} must be a JSON object")
        unknown = sorted(set(block) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")

    @staticmethod
    def _require(ok_msg):
        ok, msg = ok_msg
        if not ok:
            raise ConfigError(msg)

    @staticmethod
    def _resolve(path, base_dir):
        if base_dir is None or os.path.isabs(path):
            return path
        return os.path.join(base_dir, path)

    @staticmethod
    def _get_param(block, key, default=None):
        """
        Get a value from a block, falling back to a default.

        Args:
            block (dict): Configuration block
            key (str): Key
            default: Value when the key is absent or null

        Returns:
            Value or default
        """
        value = block.get(key)
        return default if value is None else value

    @staticmethod
    def _parse_params(block):
        ConfigParser._reject_unknown(block, PARAM_KEYS, "params")
        for key in ("n", "R", "beta", "alpha"):
            if key not in block:
                raise ConfigError(f"params.{key} is required")
        ConfigParser._require(Validators.validate_params_block(block))
        return dict(block)

    @staticmethod
    def _parse_initial_data(block, base_dir):
        ConfigParser._reject_unknown(block, ("family", "nodes") + tuple(
            key for keys in FAMILY_KEYS.values() for key in keys), "initial_data")
        family = block.get("family")
        ConfigParser._require(Validators.validate_family(family))
        extra = sorted(set(block) - {"family", "nodes"} - set(FAMILY_KEYS[family]))
        if extra:
            raise ConfigError(f"keys {', '.join(extra)} do not apply to family '{family}'")
        nodes = block.get("nodes")
        if nodes is not None:
            ConfigParser._require(Validators.validate_integer(nodes, "initial_data.nodes", 3))

        options = {}
        if family == "constant":
            options["value"] = ConfigParser._get_param(block, "value", 1.0)
            ConfigParser._require(Validators.validate_number(options["value"], "initial_data.value",
                                                             0.0, strict_min=True))
        elif family == "quadratic":
            options["scale"] = ConfigParser._get_param(block, "scale", 1.0)
            ConfigParser._require(Validators.validate_number(options["scale"], "initial_data.scale",
                                                             0.0, strict_min=True))
        elif family == "plateau":
            for key in FAMILY_KEYS["plateau"]:
                if key not in block:
                    raise ConfigError(f"initial_data.{key} is required for the plateau family")
                ConfigParser._require(Validators.validate_number(block[key], f"initial_data.{key}",
                                                                 0.0, strict_min=key != "radius"))
                options[key] = block[key]
        else:
            if "path" not in block:
                raise ConfigError("initial_data.path is required for the csv family")
            path = ConfigParser._resolve(block["path"], base_dir)
            ConfigParser._require(Validators.validate_file_path(path))
            options["path"] = path
        return InitialDataSpec(family=family, options=options, nodes=nodes)

    @staticmethod
    def _parse_grid(block, s_max):
        ConfigParser._reject_unknown(block, GRID_KEYS, "grid")
        N = ConfigParser._get_param(block, "N", DEFAULT_NODES)
        q = ConfigParser._get_param(block, "q", DEFAULT_GRADING)
        epsilon = ConfigParser._get_param(block, "epsilon", 0.0)
        ConfigParser._require(Validators.validate_integer(N, "grid.N", 3))
        ConfigParser._require(Validators.validate_number(q, "grid.q", 1.0))
        ConfigParser._require(Validators.validate_number(epsilon, "grid.epsilon", 0.0, s_max,
                                                         strict_max=True))
        eps_list = ()
        if "eps_list" in block:
            ConfigParser._require(Validators.validate_eps_list(block["eps_list"], s_max))
            eps_list = tuple(float(e) for e in block["eps_list"])
        return GridSpec(N=N, q=float(q), epsilon=float(epsilon), eps_list=eps_list)

    @staticmethod
    def _parse_controls(block):
        ConfigParser._reject_unknown(block, CONTROL_KEYS, "controls")
        if "t_end" not in block:
            raise ConfigError("controls.t_end is required")
        for key, value in block.items():
            if value is None and key == "dt_out":
                continue
            if key == "max_steps":
                ConfigParser._require(Validators.validate_integer(value, "controls.max_steps", 1))
            else:
                ConfigParser._require(Validators.validate_number(value, f"controls.{key}"))
        return StepControls(**block)

    @staticmethod
    def _parse_checks(block):
        ConfigParser._reject_unknown(block, CHECK_KEYS, "checks")
        suites = ConfigParser._get_param(block, "suites", list(SUITES))
        ConfigParser._require(Validators.validate_suites(suites))
        tolerances = ConfigParser._get_param(block, "tolerances", {})
        ConfigParser._reject_unknown(tolerances, SUITES, "checks.tolerances")
        for name, value in tolerances.items():
            ConfigParser._require(Validators.validate_number(value, f"checks.tolerances.{name}", 0.0))
        return ChecksSpec(suites=tuple(suites), tolerances=dict(tolerances))

    @staticmethod
    def _parse_threshold(block):
        ConfigParser._reject_unknown(block, THRESHOLD_KEYS, "threshold")
        if ("m0" in block) == ("m0_fraction" in block):
            raise ConfigError("threshold needs exactly one of m0 and m0_fraction")
        if "m0" in block:
            ConfigParser._require(Validators.validate_number(block["m0"], "threshold.m0", 0.0,
                                                             strict_min=True))
        else:
            ConfigParser._require(Validators.validate_number(block["m0_fraction"], "threshold.m0_fraction",
                                                             0.0, 1.0, strict_min=True))
        if block.get("C4") is not None:
            ConfigParser._require(Validators.validate_number(block["C4"], "threshold.C4", 0.0,
                                                             strict_min=True))
        mode = ConfigParser._get_param(block, "C4_mode", "initial")
        if mode not in C4_MODES:
            raise ConfigError(f"threshold.C4_mode must be one of {', '.join(C4_MODES)}")
        if block.get("gamma") is not None:
            ConfigParser._require(Validators.validate_number(block["gamma"], "threshold.gamma", 0.0, 1.0,
                                                             strict_min=True, strict_max=True))
        return ThresholdSpec(m0=block.get("m0"), m0_fraction=block.get("m0_fraction"),
                             C4=block.get("C4"), C4_mode=mode, gamma=block.get("gamma"))

    @staticmethod
    def _parse_sweep(block):
        ConfigParser._reject_unknown(block, ("axes",), "sweep")
        axes = block.get("axes")
        ConfigParser._require(Validators.validate_sweep_size(axes))
        for name in axes:
            section, _, key = name.partition(".")
            if section not in ("params", "initial_data", "grid", "controls", "threshold") or not key:
                raise ConfigError(f"sweep axis '{name}' must be a dotted path into a config block")
        return {name: list(values) for name, values in axes.items()}

    @staticmethod
    def _resolved_document(document, initial, trajectory):
        resolved = copy.deepcopy(document)
        if initial is not None and initial.family == "csv":
            resolved["initial_data"]["path"] = initial.options["path"]
        if trajectory is not None:
            resolved["trajectory"] = trajectory
        return resolved

    @staticmethod
    def build_run_config(config, overrides=None):
        """
        Build a configuration document back from a RunConfig, with dotted overrides.

        Args:
            config (RunConfig): Parsed configuration
            overrides (dict, optional): Mapping of "block.key" to value

        Returns:
            dict: Document that parses to the overridden configuration
        """
        document = copy.deepcopy(config.document)
        document.pop("sweep", None)
        for name, value in (overrides or {}).items():
            section, _, key = name.partition(".")
            document.setdefault(section, {})[key] = value
        return document


def load_run_config(path):
    """
    Convenience function - reads and parses a configuration file.

    Args:
        path (str): Path to the JSON document

    Returns:
        RunConfig: Parsed configuration
    """
    return ConfigParser.load_run_config(path)


def parse_run_config(document, base_dir=None):
    """
    Convenience function - parses a configuration document.

    Args:
        document (dict): Decoded JSON document
        base_dir (str, optional): Directory for relative paths

    Returns:
        RunConfig: Parsed configuration
    """
    return ConfigParser.parse_run_config(document, base_dir)
