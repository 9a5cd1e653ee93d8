"""
Run configuration: the validated document behind every `slowenv run`.

JSON is the primary format; `.yaml`/`.yml` files go through the same models.
"""

from pathlib import Path
from typing import Any, Literal, Optional, Union, get_args
import json
import logging

import pydantic
import yaml
from pydantic import BaseModel, ConfigDict

from .core import (
    MalformedConfigError,
    MissingConfigError,
    OutOfRangeError,
    UnknownKeyError,
    resolve_seed,
)
from .lyapunov import RunConfig
from .noise import NoiseSpec, WhiteNoise
from .propagator import Scheme
from .spectral import MIN_BOUND_SAMPLES

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

Subcommand = Literal[
    "lyapunov",
    "furstenberg",
    "sweep",
    "smalltau",
    "sqrtlaw",
    "spectrum",
    "bounds",
    "sync",
    "birkhoff",
    "chaos-const",
    "validate",
]

SUBCOMMANDS: tuple[str, ...] = get_args(Subcommand)

NEEDS_NOISE = frozenset({"lyapunov", "furstenberg", "sweep", "smalltau", "spectrum", "bounds", "sync", "birkhoff"})
NEEDS_TAU = frozenset({"lyapunov", "furstenberg", "bounds", "sync", "birkhoff"})
NEEDS_TAUS = frozenset({"sweep", "smalltau", "sqrtlaw"})
NEEDS_SEED = frozenset(SUBCOMMANDS) - {"chaos-const"}

# Keys that change how results are delivered but never the numbers
DELIVERY_KEYS = frozenset({"output_path", "output_format", "report_path", "log_level", "workers", "timing"})

VALIDATE_TAU = 0.1


class CliConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    version: Literal[1] = CONFIG_VERSION
    subcommand: Subcommand
    noise: Optional[NoiseSpec] = None
    kappa: float = pydantic.Field(default=1.0, gt=0)
    tau: Optional[float] = pydantic.Field(default=None, gt=0)
    taus: Optional[list[pydantic.PositiveFloat]] = None
    n_grid: int = pydantic.Field(default=256, ge=2, alias="n")
    scheme: Scheme = Scheme.STRANG
    dt_max: float = pydantic.Field(default=1e-3, gt=0)
    n_periods: int = pydantic.Field(default=1000, ge=1)
    burn_in: Union[Literal["auto"], pydantic.NonNegativeInt] = "auto"
    max_burn_in: int = pydantic.Field(default=10_000, ge=1)
    replicas: int = pydantic.Field(default=1, ge=1)
    batch_count: Optional[int] = pydantic.Field(default=20, ge=2)
    seed: Optional[int] = None
    centered: bool = False
    initial: Literal["uniform", "cosine"] = "uniform"
    estimator: Literal["time_average", "furstenberg"] = "time_average"
    n_samples: int = pydantic.Field(default=200, ge=1)
    n_outer: int = pydantic.Field(default=30, ge=30)
    reuse_chain: bool = False
    n_pairs: int = pydantic.Field(default=32, ge=1)
    n_paths: int = pydantic.Field(default=100_000, ge=1)
    dt_fk: float = pydantic.Field(default=1e-3, gt=0)
    cutoff: Optional[int] = pydantic.Field(default=None, ge=0)
    convention: Literal["torus", "integer", "lattice"] = "torus"
    workers: int = pydantic.Field(default=1, ge=1)
    output_path: Optional[str] = None
    output_format: Literal["csv", "json"] = "csv"
    report_path: Optional[str] = None
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"
    timing: bool = False

    @pydantic.field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value):
        return value.upper() if isinstance(value, str) else value

    @pydantic.model_validator(mode="after")
    def _subcommand_requirements(self):
        sub = self.subcommand
        if sub in NEEDS_NOISE and self.noise is None:
            raise ValueError(f"subcommand {sub!r} needs a noise block")
        if sub in NEEDS_TAU and self.tau is None:
            raise ValueError(f"subcommand {sub!r} needs tau")
        if sub in NEEDS_TAUS and not self.taus:
            raise ValueError(f"subcommand {sub!r} needs a non-empty taus list")
        if sub == "chaos-const" and self.tau is None and not self.taus:
            raise ValueError("chaos-const needs tau or taus")
        if sub in NEEDS_SEED and self.seed is None:
            raise ValueError(f"subcommand {sub!r} needs a seed (config, --seed or SLOWENV_SEED)")
        if sub == "bounds" and self.n_samples < MIN_BOUND_SAMPLES:
            raise ValueError(f"bounds needs n_samples >= {MIN_BOUND_SAMPLES}, got {self.n_samples}")
        if self.taus is not None and sub == "sweep" and self.taus != sorted(self.taus):
            raise ValueError("taus must be sorted in increasing order")
        if self.batch_count is not None and self.n_periods < 10 * self.batch_count:
            raise ValueError(
                f"n_periods={self.n_periods} is below 10 x batch_count={self.batch_count}"
            )
        if self.convention == "lattice" and sub == "chaos-const" and self.cutoff is not None:
            logger.info("cutoff is ignored for the lattice convention")
        return self

    @property
    def resolved_noise(self) -> NoiseSpec:
        if self.noise is None and self.subcommand in ("sqrtlaw", "chaos-const"):
            return WhiteNoise()
        return self.noise

    @property
    def resolved_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        if self.taus:
            return float(self.taus[0])
        return VALIDATE_TAU

    def run_config(self) -> RunConfig:
        return RunConfig(
            noise=self.resolved_noise,
            kappa=self.kappa,
            tau=self.resolved_tau,
            n_grid=self.n_grid,
            n_periods=self.n_periods,
            burn_in=self.burn_in,
            max_burn_in=self.max_burn_in,
            replicas=self.replicas,
            scheme=self.scheme,
            dt_max=self.dt_max,
            seed=self.seed,
            batch_count=self.batch_count,
            initial=self.initial,
            centered=self.centered,
            workers=self.workers,
        )

    def canonical(self) -> dict[str, Any]:
        """Everything that determines the numbers, in a stable JSON form."""
        return self.model_dump(mode="json", exclude=set(DELIVERY_KEYS))


def _load_document(path: Path) -> Any:
    if not path.exists():
        raise MissingConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MissingConfigError(f"cannot read config file {path}: {e}")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            return yaml.safe_load(text)
        return json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise MalformedConfigError(f"config file {path} is not well formed: {e}")


def _raise_for(error: pydantic.ValidationError) -> None:
    problems = error.errors()
    unknown = [p for p in problems if p["type"] == "extra_forbidden"]
    if unknown:
        keys = ", ".join(".".join(str(part) for part in p["loc"]) for p in unknown)
        raise UnknownKeyError(f"unknown key(s): {keys}", {"keys": keys})
    details = "; ".join(
        f"{'.'.join(str(part) for part in p['loc']) or 'config'}: {p['msg']}" for p in problems
    )
    raise OutOfRangeError(f"invalid config: {details}")


def parse_config(path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> CliConfig:
    """
    Load, merge and validate a run configuration.

    Priority (highest to lowest):
    1. Inline overrides (CLI flags); None values are ignored
    2. The config document
    3. SLOWENV_SEED for the seed only

    Raises:
        MissingConfigError: If the file does not exist (exit code 2)
        MalformedConfigError: If it is not valid JSON/YAML or not a mapping (3)
        UnknownKeyError: If it has keys the schema does not know (4)
        OutOfRangeError: If a value is out of range or missing (5)
    """
    data: Any = {} if path is None else _load_document(Path(path))
    if not isinstance(data, dict):
        raise MalformedConfigError("config document must be a JSON object")
    data = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    seed = resolve_seed(data.get("seed"))
    if seed is not None:
        data["seed"] = seed

    try:
        return CliConfig.model_validate(data)
    except pydantic.ValidationError as e:
        _raise_for(e)
        raise
