from __future__ import annotations

import json
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal, Optional, TypeVar

from contagion_lab.balance_sheets import SynthParams
from contagion_lab.errors import ConfigError, ParseError

try:
    from pydantic.v1 import (
        BaseModel,
        Extra,
        NonNegativeInt,
        PositiveFloat,
        PositiveInt,
        confloat,
        conint,
        validator,
    )
    from pydantic.v1 import ValidationError as PydanticValidationError
except ImportError:
    from pydantic import (
        BaseModel,
        Extra,
        NonNegativeInt,
        PositiveFloat,
        PositiveInt,
        confloat,
        conint,
        validator,
    )
    from pydantic import ValidationError as PydanticValidationError

AlgorithmName = Literal["debtrank", "cascade"]
ScopeName = Literal["node", "group", "network"]
Unit = confloat(ge=0.0, le=1.0)
Level = confloat(gt=0.0, le=1.0)
DecayFactor = confloat(gt=0.0, lt=1.0)


class RunConfig(BaseModel, extra=Extra.forbid):
    jobs: Optional[PositiveInt] = None


class SynthConfig(RunConfig):
    n: conint(ge=2) = 227
    seed: NonNegativeInt = 0
    output: str = "banks.csv"
    pareto_shape: PositiveFloat = 2.0
    pareto_scale: PositiveFloat = 100.0
    cap_fraction: tuple[Unit, Unit] = (0.05, 0.20)
    ib_asset_fraction: tuple[Unit, Unit] = (0.05, 0.30)
    ib_liab_fraction: tuple[Unit, Unit] = (0.05, 0.30)

    def synth_params(self) -> SynthParams:
        return SynthParams(
            pareto_shape=self.pareto_shape,
            pareto_scale=self.pareto_scale,
            cap_fraction=self.cap_fraction,
            ib_asset_fraction=self.ib_asset_fraction,
            ib_liab_fraction=self.ib_liab_fraction,
        )


class EstimateConfig(RunConfig):
    population: str
    edges: PositiveFloat
    size: PositiveInt = 50
    seed: NonNegativeInt = 0
    increment: PositiveFloat = 0.01
    max_sweeps: PositiveInt = 500
    output: str = "ensemble"


class DecayConfig(RunConfig):
    ensemble: str
    factor: DecayFactor = 0.3


class ExperimentConfig(DecayConfig):
    steps: PositiveInt = 10
    nodes: str = "top5"
    algorithms: list[AlgorithmName] = ["debtrank", "cascade"]
    output: str = "experiment"
    plot: bool = False

    @validator("algorithms")
    def algorithms_validator(cls, v: list[str]):  # noqa: N805
        if not v:
            msg = "select at least one algorithm"
            raise ValueError(msg)
        return list(dict.fromkeys(v))


class HistogramConfig(RunConfig):
    sweep: str
    node: NonNegativeInt
    step: PositiveInt
    algorithm: AlgorithmName = "debtrank"
    bins: PositiveInt = 10
    output: str = "histogram.csv"
    plot: bool = False


class StressConfig(DecayConfig):
    node: list[NonNegativeInt]
    levels: PositiveInt = 20
    level_min: Level = 0.1
    level_max: Level = 1.0
    step: PositiveInt = 1
    output: str = "stress.csv"
    plot: bool = False

    @validator("level_max")
    def level_range_validator(cls, v: float, values: dict[str, Any]):  # noqa: N805
        lo = values.get("level_min")
        if lo is not None and v < lo:
            msg = f"--max {v} is below --min {lo}"
            raise ValueError(msg)
        return v


class LossesConfig(DecayConfig):
    shock_node: list[NonNegativeInt]
    dist_mean: Unit = 0.5
    dist_sd: PositiveFloat = 0.05
    samples: PositiveInt = 1000
    seed: NonNegativeInt = 0
    scope: ScopeName = "network"
    observe: list[NonNegativeInt] = []
    step: PositiveInt = 1
    output: str = "losses.csv"
    plot: bool = False

    @validator("observe", always=True)
    def observe_validator(cls, v: list[int], values: dict[str, Any]):  # noqa: N805
        scope = values.get("scope")
        if scope == "node" and len(v) != 1:
            msg = "--scope node needs exactly one --observe node"
            raise ValueError(msg)
        if scope == "group" and not v:
            msg = "--scope group needs at least one --observe node"
            raise ValueError(msg)
        return v


class VarConfig(RunConfig):
    losses: str
    alpha: confloat(gt=0.0, lt=1.0) = 0.95
    output: str = "var.json"


class RankConfig(DecayConfig):
    step: PositiveInt = 1
    algorithm: AlgorithmName = "debtrank"
    top: Optional[PositiveInt] = None
    output: str = "ranking.csv"


COMMAND_CONFIGS: dict[str, type[RunConfig]] = {
    "synth": SynthConfig,
    "estimate": EstimateConfig,
    "experiment": ExperimentConfig,
    "histogram": HistogramConfig,
    "stress": StressConfig,
    "losses": LossesConfig,
    "var": VarConfig,
    "rank": RankConfig,
}

C = TypeVar("C", bound=RunConfig)


def load_config_file(path: str | os.PathLike[str]) -> dict[str, dict[str, Any]]:
    """
    A JSON object holding one section per command name, e.g.
    `{"estimate": {"edges": 1500, "size": 50}}`.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except UnicodeDecodeError:
        msg = f"{path}: not UTF-8 text"
        raise ParseError(msg) from None
    except json.JSONDecodeError as e:
        msg = f"{path}: invalid JSON ({e.msg} at line {e.lineno})"
        raise ParseError(msg) from None
    if not isinstance(data, dict):
        msg = f"{path}: top level must be an object keyed by command"
        raise ConfigError(msg)
    unknown = sorted(set(data) - set(COMMAND_CONFIGS))
    if unknown:
        msg = f"{path}: unknown command section(s) {unknown}"
        raise ConfigError(msg)
    for name, section in data.items():
        if not isinstance(section, dict):
            msg = f"{path}: section {name!r} must be an object"
            raise ConfigError(msg)
    return data


def build_config(
    model: type[C],
    flags: Mapping[str, Any],
    file_section: Optional[Mapping[str, Any]] = None,
) -> C:
    "Flags win over the config file section, which wins over model defaults."
    values = {**(file_section or {}), **{k: v for k, v in flags.items() if v is not None}}
    try:
        return model(**values)
    except PydanticValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        msg = f"invalid {where}: {first['msg']}"
        raise ConfigError(msg) from None
