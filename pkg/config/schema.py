"""
Pydantic models for experiment configs.

A config is one JSON document; every section has defaults so a partial file
is valid. ``load_settings`` turns validation failures into ConfigError.
"""

import json
from typing import Literal

import xxhash
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dynamics.errors import ConfigError

from .config import BaseConfig

SCHEMA_VERSION = "1"
MISIUREWICZ_TAG = "misiurewicz:crit_to_period2"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PerturbationSettings(_Section):
    amplitude: float = 0.0
    frequency: int = Field(1, ge=1)


class BaseMapSettings(_Section):
    kind: Literal["uniform_linear", "perturbed_linear", "quadratic_branch", "custom_breakpoints", "countable_geometric"] = (
        "uniform_linear"
    )
    d: int = Field(16, ge=2)
    branch_count: int | None = Field(None, ge=2)
    perturbation: PerturbationSettings = PerturbationSettings()
    kappa: float = Field(0.0, ge=0.0, lt=1.0)
    breakpoints: list[float] | None = None
    ratio: float = Field(15.0 / 16.0, gt=0.0, lt=1.0)
    renyi_grid: int = Field(10_000, ge=1000)


class BumpSettings(_Section):
    center: float
    width: float = Field(gt=0.0)
    amplitude: float


class TrappingSettings(_Section):
    grid_theta: int = Field(10_000, ge=100)
    grid_x: int = Field(1000, ge=10)


class SkewSettings(_Section):
    a0: float | str = MISIUREWICZ_TAG
    alpha: float = Field(0.01, ge=0.0)
    base: BaseMapSettings = BaseMapSettings()
    bump: BumpSettings | None = None
    shift: float = 0.0
    trapping: TrappingSettings = TrappingSettings()

    @field_validator("a0")
    @classmethod
    def _check_a0(cls, value):
        if isinstance(value, str):
            if value != MISIUREWICZ_TAG:
                raise ValueError(f"a0 must be numeric or {MISIUREWICZ_TAG!r}")
            return value
        if not 0.0 < value <= 2.0:
            raise ValueError("a0 must lie in (0, 2]")
        return value


class CurveSettings(_Section):
    curves: int = Field(100, ge=1)
    nodes: int = Field(100_000, ge=100)
    strip_triples: int = Field(1000, ge=1)
    max_j: int = Field(5, ge=1, le=6)
    local_nodes: int = Field(512, ge=16)
    max_cylinders: int = Field(256, ge=1)
    cylinder_samples: int = Field(64, ge=1)


class RecurrenceSettings(_Section):
    alpha_ladder: list[float] = [1e-2, 1e-3, 1e-4]
    n_grid: list[int] = [100, 1000, 10_000]
    r_grid: list[int] = [2, 3, 4, 5, 6, 7, 8]
    samples: int = Field(1000, ge=1)
    eta: float = Field(0.1, gt=0.0, le=1.0 / 3.0)
    heavy_rate: float = Field(0.05, gt=0.0)
    c_target: float = Field(0.1, gt=0.0)
    epsilon: float = Field(0.5, gt=0.0)
    delta: float | None = Field(None, gt=0.0)
    return_cap: int = Field(2000, ge=1)
    expansion_horizon: int = Field(200, ge=2)
    kappa: float = Field(0.5, gt=0.0, lt=1.0)
    delta1: float = Field(0.2, gt=0.0)

    @field_validator("alpha_ladder")
    @classmethod
    def _check_ladder(cls, value):
        if not value or any(not 0.0 < a < 1.0 for a in value):
            raise ValueError("alpha_ladder entries must lie in (0, 1)")
        return value


class StatisticsSettings(_Section):
    n: int = Field(10_000, ge=1)
    samples: int = Field(1000, ge=1)
    threshold: float = 0.05
    burn_in: int = Field(1000, ge=0)
    density_n: int = Field(1000, ge=1)
    bins: tuple[int, int] = (64, 200)
    points_per_bin: int = Field(16, ge=1)
    tv_floor: float = Field(0.05, ge=0.0)
    h1: str = "x"
    h2: str = "x"
    max_lag: int = Field(100, ge=1)
    correlation_n: int = Field(2000, ge=2)
    ldp_observable: str = "x"
    delta_std: float = Field(0.1, gt=0.0)
    ldp_grid: list[int] = [100, 1000, 10_000]
    clt_n: int = Field(10_000, ge=1)
    clt_observable: str = "x"


class CouplingSettings(_Section):
    kind: Literal["sine", "bump"] = "sine"
    center: float = 0.5
    width: float = Field(0.25, gt=0.0)


class FiberedSettings(_Section):
    c: float = 0.5
    epsilon: float = Field(0.01, ge=0.0)
    coupling: CouplingSettings = CouplingSettings()
    base: BaseMapSettings = BaseMapSettings()
    n: int = Field(10_000, ge=1)
    base_samples: int = Field(1000, ge=1)
    burn_in: int = Field(256, ge=0)
    capture_radius: float = Field(0.05, gt=0.0)
    max_period: int = Field(64, ge=1, le=64)


class CoexistenceSettings(_Section):
    branch: int = Field(8, ge=0)
    target: float = 1.7548
    window: tuple[float, float] = (1.75, 1.7685)
    width: float = Field(1.0 / 64.0, gt=0.0)
    n: int = Field(10_000, ge=1)
    samples: int = Field(1000, ge=1)
    central_steps: int = Field(1000, ge=1)


class RunSettings(_Section):
    seed: int = Field(7, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)
    chunk_size: int = Field(128, ge=1)
    progress: bool = False
    suite: Literal["fast", "full"] = "fast"


class PathSettings(_Section):
    log_dir: str = "logs"
    output_dir: str = "output"


class ExperimentSettings(_Section):
    name: str = "reference"
    version: str = SCHEMA_VERSION
    skew: SkewSettings = SkewSettings()
    curves: CurveSettings = CurveSettings()
    recurrence: RecurrenceSettings = RecurrenceSettings()
    statistics: StatisticsSettings = StatisticsSettings()
    fibered: FiberedSettings = FiberedSettings()
    coexistence: CoexistenceSettings = CoexistenceSettings()
    run: RunSettings = RunSettings()
    paths: PathSettings = PathSettings()

    @model_validator(mode="after")
    def _check_version(self):
        if self.version != SCHEMA_VERSION:
            raise ValueError(f"config schema version {self.version!r} is not {SCHEMA_VERSION!r}")
        return self


# subcommands that need a strictly positive forcing amplitude
ALPHA_POSITIVE = {"curves", "recurrence"}


def validate_settings(data: dict) -> ExperimentSettings:
    try:
        return ExperimentSettings.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def load_settings(config: BaseConfig, overrides: dict | None = None) -> ExperimentSettings:
    """Validate a loaded config; ``overrides`` maps dotted keys (``run.seed``) to values."""
    data = json.loads(json.dumps(config.data))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return validate_settings(data)


def check_subcommand(settings: ExperimentSettings, subcommand: str):
    if subcommand in ALPHA_POSITIVE and settings.skew.alpha <= 0.0:
        raise ConfigError(f"the {subcommand} experiment needs skew.alpha > 0")


# execution knobs that must not change any table
HASH_EXCLUDED = {"run": {"workers", "progress"}}


def canonical_json(settings: ExperimentSettings) -> str:
    return json.dumps(settings.model_dump(mode="json", exclude=HASH_EXCLUDED), sort_keys=True, separators=(",", ":"))


def config_hash(settings: ExperimentSettings) -> str:
    return xxhash.xxh3_64_hexdigest(canonical_json(settings))
