import os
import logging
from pathlib import Path

import psutil
from dotenv import load_dotenv, dotenv_values
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Load environment variables
load_dotenv()

PROFILE_PATH = os.path.expanduser(os.getenv("GRAPHGEAR_PROFILE") or str(Path.home() / ".graphgear" / "machine_profile.txt"))
HIERARCHY_PATH = os.getenv("GRAPHGEAR_HIERARCHY") or None
LOG_LEVEL = os.getenv("GRAPHGEAR_LOG_LEVEL") or "INFO"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Calibration constants (ns). Table values sit in the "few microseconds" band.
DEFAULT_L_OP_NS = 1.0
DEFAULT_T_OVERHEAD_NS = 5_000.0
DEFAULT_PARA_STARTUP_NS = 10_000.0
DEFAULT_T_MIN_NS = 50_000.0

logger = logging.getLogger(__name__)


def _env_float(name: str) -> float | None:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else None


def _env_int(name: str) -> int | None:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else None


def available_threads() -> int:
    """Hardware threads usable by the worker pool."""
    return psutil.cpu_count(logical=True) or os.cpu_count() or 1


def default_pool_size() -> int:
    return _env_int("GRAPHGEAR_THREADS") or available_threads()


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


class CostModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    l_op_ns: float = Field(DEFAULT_L_OP_NS, gt=0)
    t_overhead_ns: float = Field(DEFAULT_T_OVERHEAD_NS, gt=0)
    t_min_ns: float = Field(DEFAULT_T_MIN_NS, gt=0)
    para_startup_ns: float = Field(DEFAULT_PARA_STARTUP_NS, gt=0)
    max_cores: int = Field(default_factory=default_pool_size, ge=1)

    @model_validator(mode="after")
    def _min_work_exceeds_overhead(self):
        if self.t_min_ns <= self.t_overhead_ns:
            raise ValueError(
                f"t_min_ns ({self.t_min_ns}) must be larger than t_overhead_ns ({self.t_overhead_ns})"
            )
        return self


class SchedulerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sequential_package_limit: int = Field(4, ge=1)
    static_multiple: int = Field(8, ge=1)
    cost_based_multiple: int = Field(8, ge=1)
    variance_threshold: float = Field(1.1, gt=0)
    small_frontier_multiple: int = Field(64, ge=1)
    min_package_vertices: int = Field(64, ge=1)


class ContentionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    exponent: float = Field(3.0, gt=0)
    verbatim_sign: bool = False


class PageRankConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    damping: float = Field(0.85, gt=0, lt=1)
    epsilon: float = Field(1e-7, gt=0)
    max_iterations: int = Field(100, ge=1)


_COST_KEYS = {
    "L_OP_NS": "l_op_ns",
    "T_OVERHEAD_NS": "t_overhead_ns",
    "T_MIN_NS": "t_min_ns",
    "PARA_STARTUP_NS": "para_startup_ns",
    "MAX_CORES": "max_cores",
}


def _strip_prefix(key: str) -> str:
    return key.upper().removeprefix("GRAPHGEAR_")


def cost_config_from_env(measured: dict[str, float] | None = None, **overrides) -> CostModelConfig:
    """Build the cost-model configuration.

    Precedence: explicit overrides, then GRAPHGEAR_* environment variables, then values
    measured during calibration, then the defaults.
    """
    values: dict[str, float] = {}
    if measured:
        if "t_overhead_ns" in measured:
            values["t_overhead_ns"] = measured["t_overhead_ns"]
            values["t_min_ns"] = 10 * measured["t_overhead_ns"]
        if "para_startup_ns" in measured:
            values["para_startup_ns"] = measured["para_startup_ns"]
    for key, field in _COST_KEYS.items():
        env_value = _env_float(f"GRAPHGEAR_{key}")
        if env_value is not None:
            values[field] = int(env_value) if field == "max_cores" else env_value
    values.update({k: v for k, v in overrides.items() if v is not None})
    return CostModelConfig(**values)


def scheduler_config_from_env(**overrides) -> SchedulerConfig:
    values = {}
    if (limit := _env_int("GRAPHGEAR_SEQ_PACKAGE_LIMIT")) is not None:
        values["sequential_package_limit"] = limit
    if (multiple := _env_int("GRAPHGEAR_STATIC_MULTIPLE")) is not None:
        values["static_multiple"] = multiple
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SchedulerConfig(**values)


def contention_config_from_env(**overrides) -> ContentionConfig:
    values = {}
    if (exponent := _env_float("GRAPHGEAR_LATENCY_EXPONENT")) is not None:
        values["exponent"] = exponent
    if os.getenv("GRAPHGEAR_VERBATIM_SIGN", "").lower() in ("1", "true", "yes"):
        values["verbatim_sign"] = True
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ContentionConfig(**values)


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    """Read a KEY=value file ('#' comments allowed) into a dict with upper-case keys."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    return {key.upper(): value for key, value in dotenv_values(path).items() if value is not None}


def load_cost_config(path: str | os.PathLike, base: CostModelConfig | None = None) -> CostModelConfig:
    base = base or CostModelConfig()
    updates = {}
    for key, value in read_key_values(path).items():
        field = _COST_KEYS.get(_strip_prefix(key))
        if field is None:
            logger.warning(f"Ignoring unknown cost-model key {key} in {path}")
            continue
        updates[field] = int(value) if field == "max_cores" else float(value)
    return CostModelConfig(**{**base.model_dump(), **updates})
