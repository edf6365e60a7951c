"""
Configuration layer.

Defaults live in the models below. ``config/lab.yaml`` overlays the process
settings and the environment (``POTENTIAL_BOUNDS_*``) overlays the file.
Run configurations are single JSON (or YAML) documents validated into
``RunConfig``; CLI flags are merged over the document last.
"""

from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from ..measure_kernel import DiagonalPolicy
from ..nonlinearity import Nonlinearity
from .exceptions import ConfigurationError, PotentialBoundsError
from .serialization import read_json

PathLike = Union[str, Path]

DEFAULT_LAB_FILE = Path("config") / "lab.yaml"


class LabSettings(BaseSettings):
    """Process-wide settings: logging and concurrency."""
    model_config = SettingsConfigDict(env_prefix="POTENTIAL_BOUNDS_", extra="ignore")

    log_level: str = "INFO"
    log_format: Literal["console", "json"] = "console"
    max_concurrent_instances: int = Field(4, ge=1)
    out_dir: Path = Path("results")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # file values arrive as init kwargs; the environment overrides them
        return env_settings, init_settings


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot read {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping")
    return data


@lru_cache(maxsize=1)
def get_settings(path: Optional[PathLike] = None) -> LabSettings:
    """Load LabSettings from ``config/lab.yaml`` (if present) and the environment."""
    source = Path(path) if path is not None else DEFAULT_LAB_FILE
    data = _read_yaml(source).get("lab", {}) if source.exists() else {}
    try:
        return LabSettings(**data)
    except PydanticValidationError as e:
        raise ConfigurationError("Invalid lab settings", details={"errors": e.errors(include_url=False)}) from e


class SpaceKind(str, Enum):
    GRID = "grid"
    RANDOM = "random"


class KernelFamily(str, Enum):
    RIESZ = "riesz"
    RADIAL = "radial"
    VOLTERRA = "volterra"
    CUSTOM = "custom"
    ZERO = "zero"


class RadialProfileKind(str, Enum):
    CONSTANT = "constant"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    INVERSE_POWER = "inverse_power"
    LINEAR_FLOOR = "linear_floor"


class BPolicy(str, Enum):
    CERTIFIED_FROM_KAPPA = "certified_from_kappa"
    EXHAUSTIVE_LP = "exhaustive_lp"
    USER_SUPPLIED = "user_supplied"


class HKind(str, Enum):
    ONES = "ones"
    RANDOM = "random"
    POTENTIAL = "potential"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"
    BOTH = "both"


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpaceSpec(_Spec):
    kind: SpaceKind = SpaceKind.GRID
    n: int = Field(32, ge=1)
    dim: int = Field(1, ge=1)
    start: float = 0.0
    stop: float = 1.0
    weighting: Literal["trapezoid", "uniform"] = "trapezoid"
    jitter_weights: bool = False


class KernelSpec(_Spec):
    family: KernelFamily = KernelFamily.RADIAL
    alpha: float = 0.5
    diagonal: DiagonalPolicy = DiagonalPolicy.CELL_AVERAGE
    ceiling: Optional[float] = None
    profile: RadialProfileKind = RadialProfileKind.EXPONENTIAL
    length_scale: float = Field(1.0, gt=0)
    exponent: float = Field(1.0, gt=0)
    floor: float = Field(0.1, gt=0)
    scale: float = Field(1.0, gt=0)
    path: Optional[Path] = None

    @model_validator(mode="after")
    def _custom_needs_path(self) -> "KernelSpec":
        if self.family is KernelFamily.CUSTOM and self.path is None:
            raise ValueError("custom kernels need 'path' to an instance document")
        return self


class NonlinearitySpec(_Spec):
    kind: Literal["power", "general_increasing", "general_decreasing"] = "power"
    q: Optional[float] = 1.0
    t: Optional[List[float]] = None
    g: Optional[List[float]] = None
    homogeneous: bool = False

    def build(self) -> Nonlinearity:
        data: Dict[str, Any] = {"kind": self.kind, "q": self.q, "t": self.t, "g": self.g}
        try:
            return Nonlinearity.from_dict({k: v for k, v in data.items() if v is not None})
        except PotentialBoundsError as e:
            raise ConfigurationError(f"Invalid nonlinearity: {e}", details=e.details) from e


class HSpec(_Spec):
    kind: HKind = HKind.ONES
    low: float = Field(0.5, gt=0)
    high: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "HSpec":
        if self.high < self.low:
            raise ValueError("h.high must be >= h.low")
        return self


class SolverSpec(_Spec):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(100_000, ge=1)
    theta: float = Field(1.0, gt=0, le=1)
    b_policy: BPolicy = BPolicy.CERTIFIED_FROM_KAPPA
    b: Optional[float] = Field(None, ge=1)
    wmp_budget: int = Field(2000, ge=1)
    lemma_depth: int = Field(4, ge=0)
    layer_cake_trials: int = Field(100, ge=0)
    grid_size: int = Field(4096, ge=2)
    refinements: int = Field(1, ge=0)

    @model_validator(mode="after")
    def _user_b(self) -> "SolverSpec":
        if self.b_policy is BPolicy.USER_SUPPLIED and self.b is None:
            raise ValueError("b_policy 'user_supplied' needs solver.b")
        return self


class OutputSpec(_Spec):
    out_dir: Optional[Path] = None
    format: OutputFormat = OutputFormat.BOTH


class RunConfig(_Spec):
    """One experiment run; reproducible from (config, seed)."""
    name: str = "run"
    seed: int = 0
    instances: int = Field(1, ge=1)
    space: SpaceSpec = SpaceSpec()
    kernel: KernelSpec = KernelSpec()
    nonlinearity: NonlinearitySpec = NonlinearitySpec()
    h: HSpec = HSpec()
    solver: SolverSpec = SolverSpec()
    output: OutputSpec = OutputSpec()

    def with_seed(self, seed: int) -> "RunConfig":
        return self.model_copy(update={"seed": seed})

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(
    path: Optional[PathLike] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Read a run configuration and merge overrides over it.

    Args:
        path: JSON (.json) or YAML (.yaml/.yml) document; None for defaults
        overrides: Nested mapping merged last (None values are ignored)

    Raises:
        ConfigurationError: On unreadable files or invalid settings
    """
    data: Dict[str, Any] = {}
    if path is not None:
        source = Path(path)
        if not source.exists():
            raise ConfigurationError(f"Config file not found: {source}")
        if source.suffix.lower() in (".yaml", ".yml"):
            data = _read_yaml(source)
        else:
            loaded = read_json(source)
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"{source} must contain a JSON object")
            data = loaded
    data = _deep_merge(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigurationError(
            "Invalid run configuration",
            details={"errors": e.errors(include_url=False, include_context=False)},
        ) from e
