import os


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return float(raw)


# Logging
LOG_LEVEL = os.getenv("LEAFKIT_LOG_LEVEL", "INFO").upper()

# Cache / worker pool
CACHE_DIR = os.path.expanduser(os.getenv("LEAFKIT_CACHE", os.path.join("~", ".cache", "leafkit")))
CACHE_DISABLED = os.getenv("LEAFKIT_NO_CACHE") == "1"
THREADS = max(1, int(os.getenv("LEAFKIT_THREADS", "1") or 1))

# Dense allocation guard: d > 2^14 refused unless lifted
MAX_DENSE_DIM = 2 ** 14
ALLOW_LARGE = os.getenv("LEAFKIT_ALLOW_LARGE") == "1"

# Numerical tolerances
TOL_HERM = _env_float("LEAFKIT_TOL_HERM", 1e-12)
TOL_TRACE = _env_float("LEAFKIT_TOL_TRACE", 1e-12)
TOL_POSITIVE = _env_float("LEAFKIT_TOL_POSITIVE", 1e-12)
TOL_NORM = _env_float("LEAFKIT_TOL_NORM", 1e-12)
TOL_IMAG = _env_float("LEAFKIT_TOL_IMAG", 1e-10)
RANK_FLOOR = _env_float("LEAFKIT_RANK_FLOOR", 1e-14)
GAP_TOL = _env_float("LEAFKIT_GAP_TOL", 1e-10)
UNDERFLOW = _env_float("LEAFKIT_UNDERFLOW", 1e-300)

# Random-decomposition check: largest d it is run at
ORACLE_MAX_DIM = 16

TOOL_VERSION = "1.0.0"
