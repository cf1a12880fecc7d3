"""
Configuration constants for the ksflow radial Keller-Segel simulator.
"""

# Application
APP_NAME = "ksflow"
APP_VERSION = "1.0"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Environment
WORKERS_ENV_VAR = "KSFLOW_WORKERS"
DEFAULT_WORKERS = 1
MAX_SWEEP_CELLS = 10_000

# Grid
DEFAULT_NODES = 400
DEFAULT_GRADING = 2.0

# Step controls
DEFAULT_CFL = 0.4
DEFAULT_DT_INIT = 1e-5
DEFAULT_DT_MIN = 1e-14
DEFAULT_DT_MAX = 1e-2
DEFAULT_U_CAP = 1e8
DEFAULT_TOL_MONO = 1e-10
DEFAULT_DT_GROWTH = 2.0
DEFAULT_MAX_STEPS = 10_000_000
DEFAULT_SNAPSHOTS = 100

# Check tolerances
BOUND_SLACK = 1e-12
MASS_DRIFT_TOL = 1e-6
SIGNAL_GRADIENT_TOL = 1e-10
BOUNDARY_GRADIENT_TOL = 1e-12
LINEAR_BARRIER_TOL = 1e-8
CONCAVITY_TOL = 1e-8
SLOPE_BOUND_TOL = 1e-8
EPSILON_MONOTONE_TOL = 1e-8
ODI_REL_TOL = 1e-6
COMPARISON_ABS_TOL = 1e-10
COMPARISON_TRUNCATION_FACTOR = 2.0

# Blow-up thresholds
GAMMA_CAP = 0.9
THRESHOLD_CAP = 1.0 - 1e-9
C4_SAFETY = 2.0

# Sweep outcomes
STEADY_TOL = 1e-6

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3
EXIT_BLOWUP = 10
EXIT_STEP_COLLAPSE = 11
EXIT_MONOTONICITY = 12

# Artifacts
DEFAULT_OUTPUT_DIR = "ksflow_out"
META_FILE = "meta.json"
DIAG_FILE = "diag.csv"
SNAPSHOT_PATTERN = "snap_{:05d}.csv"
CERTIFICATE_FILE = "certificate.json"
VERIFY_REPORT_FILE = "verify_report.json"
SWEEP_FILE = "sweep.csv"
CSV_FLOAT_FORMAT = "%.17g"
