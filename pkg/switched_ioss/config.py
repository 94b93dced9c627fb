from __future__ import annotations
import os


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    return float(raw) if raw not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw not in (None, "") else default


LOG_LEVEL: str = os.environ.get("SWITCHED_IOSS_LOG_LEVEL", "INFO")

# Integration
DEFAULT_STEP: float = _env_float("SWITCHED_IOSS_STEP", 1e-3)
DEFAULT_HORIZON: float = _env_float("SWITCHED_IOSS_HORIZON", 15.0)
# Runs whose state norm exceeds this are reported as diverged
DIVERGENCE_NORM: float = _env_float("SWITCHED_IOSS_DIVERGENCE_NORM", 1e9)
# Tolerance for "lands on a grid node" and for origin probes
GRID_TOL: float = 1e-9
ORIGIN_TOL: float = 1e-9

# Switching signals: dwell times are integer multiples of this
DEFAULT_SIGNAL_RESOLUTION: float = _env_float("SWITCHED_IOSS_SIGNAL_RESOLUTION", 1e-3)

# Class-K-infinity validation grid and inverse tolerance
KINF_GRID_MAX: float = 1e3
KINF_GRID_POINTS: int = 1000
INVERSE_TOL: float = 1e-10

# Searches
DWELL_GRID_N: int = _env_int("SWITCHED_IOSS_DWELL_GRID_N", 401)
ESTIMATOR_GRID_N: int = _env_int("SWITCHED_IOSS_ESTIMATOR_GRID_N", 21)

# Sampled Lyapunov-condition probes
PROBE_SAMPLES: int = _env_int("SWITCHED_IOSS_PROBE_SAMPLES", 10_000)
PROBE_STATE_RANGE = (-5.0, 5.0)
PROBE_INPUT_RANGE = (-0.5, 0.5)
FD_STEP: float = 1e-6

# Numerical experiment on the builtin family
BUILTIN_TAG: str = "paper-example"
EXAMPLE_SEEDS = list(range(10))
EXAMPLE_Z0: float = 2.0
EXAMPLE_X0_RANGE = (-1.0, 1.0)
EXAMPLE_INPUT_RANGE = (-0.5, 0.5)
EXAMPLE_ESTIMATOR_PARAMS = (3.0, 0.75, 3.0, 4.2)
# Bound on the state norm that counts as "bounded" in the experiment summary
EXAMPLE_STATE_BOUND: float = _env_float("SWITCHED_IOSS_STATE_BOUND", 100.0)

# Output
CSV_FLOAT_FORMAT: str = "%.17g"
