from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from contagion_lab.balance_sheets import BankPopulation
from contagion_lab.common import (
    format_float,
    parallel_map,
    parse_cell,
    read_json,
    read_table,
    write_json,
)
from contagion_lab.contagion import ShockVector, build_impact_matrix, debtrank
from contagion_lab.errors import ConfigError, DomainError, ParseError, SchemaError
from contagion_lab.weights import WeightedNetwork

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 20
DEFAULT_MIN_LEVEL = 0.1
DEFAULT_MAX_LEVEL = 1.0
DEFAULT_SHOCK_MEAN = 0.5
DEFAULT_SHOCK_SD = 0.05
DEFAULT_SAMPLE_COUNT = 1000
DEFAULT_ALPHA = 0.95

LOSS_COLUMNS = ["sample_index", "member_index", "shock", "loss_fraction"]
STRESS_COLUMNS = ["level", "mean", "min", "max"]

Nodes = Union[int, Iterable[int]]


def _node_set(nodes: Nodes) -> tuple[int, ...]:
    if isinstance(nodes, (int, np.integer)):
        return (int(nodes),)
    return tuple(sorted({int(i) for i in nodes}))


def _check_node_range(nodes: Sequence[int], n: int, what: str) -> None:
    if not nodes:
        msg = f"{what} must name at least one node"
        raise ConfigError(msg)
    for i in nodes:
        if not 0 <= i < n:
            msg = f"{what} node {i} outside 0..{n - 1}"
            raise ConfigError(msg)


def scenario_levels(
    count: int = DEFAULT_LEVELS,
    lo: float = DEFAULT_MIN_LEVEL,
    hi: float = DEFAULT_MAX_LEVEL,
) -> tuple[float, ...]:
    """`count` equally spaced shock levels from `lo` to `hi` inclusive."""
    if count < 1:
        msg = f"need at least one scenario level, got {count}"
        raise ConfigError(msg)
    if count == 1:
        return (float(hi),)
    a, b = Fraction(str(lo)), Fraction(str(hi))
    step = (b - a) / (count - 1)
    return tuple(float(a + k * step) for k in range(count))


@dataclass(frozen=True)
class ScenarioGrid:
    target_nodes: tuple[int, ...]
    shock_levels: tuple[float, ...]
    step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "target_nodes", _node_set(self.target_nodes))
        levels = tuple(float(x) for x in self.shock_levels)
        if not levels:
            msg = "scenario grid has no levels"
            raise ConfigError(msg)
        for x in levels:
            if not 0 < x <= 1:
                msg = f"shock level {x} outside (0, 1]"
                raise DomainError(msg)
        if any(b <= a for a, b in zip(levels, levels[1:])):
            msg = "shock levels must be strictly increasing"
            raise ConfigError(msg)
        object.__setattr__(self, "shock_levels", levels)

    @classmethod
    def uniform(
        cls,
        target: Nodes,
        count: int = DEFAULT_LEVELS,
        lo: float = DEFAULT_MIN_LEVEL,
        hi: float = DEFAULT_MAX_LEVEL,
        step: int = 1,
    ) -> ScenarioGrid:
        return cls(target_nodes=_node_set(target), shock_levels=scenario_levels(count, lo, hi), step=step)


class StressBand(NamedTuple):
    level: float
    mean: float
    min: float
    max: float


@dataclass(frozen=True)
class StressResult:
    grid: ScenarioGrid
    bands: tuple[StressBand, ...]
    # impacts[level, member]
    impacts: np.ndarray


def stress_sweep(
    ensemble: Sequence[WeightedNetwork],
    population: BankPopulation,
    grid: ScenarioGrid,
    jobs: Optional[int] = None,
) -> StressResult:
    """
    DebtRank with psi = level on the target node(s), for every level of the
    grid and every ensemble member, reported as mean/min/max bands.
    `population` carries the market caps of the step under test.
    """
    if not ensemble:
        msg = "the stress sweep needs a non-empty ensemble"
        raise ConfigError(msg)
    _check_node_range(grid.target_nodes, population.n, "target")
    values = population.market_caps

    def work(network: WeightedNetwork) -> list[float]:
        W = build_impact_matrix(network, population)
        return [
            debtrank(W, ShockVector.on(W.n, grid.target_nodes, level), values).impact_fraction
            for level in grid.shock_levels
        ]

    per_member = parallel_map(work, ensemble, jobs)
    impacts = np.asarray(per_member, dtype=np.float64).T
    bands = []
    for level, row in zip(grid.shock_levels, impacts):
        lo, hi = float(row.min()), float(row.max())
        bands.append(StressBand(level, min(max(float(row.mean()), lo), hi), lo, hi))
    logger.info(
        "stress sweep on %s: %d levels x %d members",
        list(grid.target_nodes),
        len(grid.shock_levels),
        len(ensemble),
    )
    return StressResult(grid=grid, bands=tuple(bands), impacts=impacts)


def write_stress(result: StressResult, path: str | os.PathLike[str]) -> None:
    frame = pd.DataFrame(
        [tuple(format_float(x) for x in band) for band in result.bands],
        columns=STRESS_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_stress(path: str | os.PathLike[str]) -> list[StressBand]:
    frame = read_table(path, STRESS_COLUMNS)
    return [
        StressBand(*(parse_cell(float, x, c, row) for x, c in zip(cells, STRESS_COLUMNS)))
        for row, cells in enumerate(frame.itertuples(index=False), start=1)
    ]


@dataclass(frozen=True)
class ShockDistribution:
    """Normal(mean, sd) truncated to [0, 1]."""

    mean: float = DEFAULT_SHOCK_MEAN
    sd: float = DEFAULT_SHOCK_SD
    sample_count: int = DEFAULT_SAMPLE_COUNT
    seed: int = 0

    lower = 0.0
    upper = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            msg = f"shock sd must be positive, got {self.sd}"
            raise ConfigError(msg)
        if not self.lower <= self.mean <= self.upper:
            msg = f"shock mean must lie in [0, 1], got {self.mean}"
            raise ConfigError(msg)
        if self.sample_count < 1:
            msg = f"sample_count must be at least 1, got {self.sample_count}"
            raise ConfigError(msg)

    def describe(self) -> str:
        return f"N({self.mean}, {self.sd}) on [0, 1], {self.sample_count} draws, seed {self.seed}"


def sample_shocks(dist: ShockDistribution) -> np.ndarray:
    "Rejection sampling; the same seed always gives the same draws."
    rng = np.random.default_rng(dist.seed)
    out = np.empty(0, dtype=np.float64)
    while out.size < dist.sample_count:
        need = dist.sample_count - out.size
        draws = rng.normal(dist.mean, dist.sd, size=max(2 * need, 16))
        kept = draws[(draws >= dist.lower) & (draws <= dist.upper)]
        out = np.concatenate([out, kept[:need]])
    return out


class LossScope(Enum):
    NODE = "node"
    GROUP = "group"
    NETWORK = "network"


class LossSample(NamedTuple):
    sample_index: int
    member_index: int
    shock: float
    loss_fraction: float


@dataclass(frozen=True)
class LossDistribution:
    samples: tuple[LossSample, ...]
    scope: LossScope
    observed: tuple[int, ...] = ()
    conditioning: str = ""

    def __post_init__(self):
        if not self.samples:
            msg = "a loss distribution needs at least one sample"
            raise ConfigError(msg)
        for s in self.samples:
            if not 0 <= s.loss_fraction <= 1:
                msg = f"loss fraction {s.loss_fraction} outside [0, 1]"
                raise DomainError(msg)

    @property
    def losses(self) -> np.ndarray:
        return np.array([s.loss_fraction for s in self.samples], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)


def _scope_loss(
    final_h: np.ndarray,
    impact_fraction: float,
    values: np.ndarray,
    scope: LossScope,
    observed: tuple[int, ...],
) -> float:
    if scope is LossScope.NETWORK:
        return impact_fraction
    if scope is LossScope.NODE:
        return float(final_h[observed[0]])
    idx = list(observed)
    weight = float(values[idx].sum())
    loss = float(np.dot(final_h[idx], values[idx])) / weight
    return min(max(loss, 0.0), 1.0)


def loss_distribution(
    ensemble: Sequence[WeightedNetwork],
    population: BankPopulation,
    shocked: Nodes,
    shocks: Sequence[float],
    scope: LossScope | str = LossScope.NETWORK,
    observed: Optional[Nodes] = None,
    jobs: Optional[int] = None,
    conditioning: str = "",
) -> LossDistribution:
    """
    One DebtRank run per (shock sample, ensemble member) with psi = sample
    on every shocked node. The loss is h_i(T) of the observed node, the
    value-weighted mean h over an observed group, or the network impact
    fraction. Samples come out sample-major: all members for shock 0, then
    all members for shock 1, and so on.
    """
    scope = LossScope(scope)
    shocks = [float(x) for x in shocks]
    if not shocks:
        msg = "loss distribution needs at least one shock sample"
        raise ConfigError(msg)
    if not ensemble:
        msg = "loss distribution needs a non-empty ensemble"
        raise ConfigError(msg)
    shocked_nodes = _node_set(shocked)
    _check_node_range(shocked_nodes, population.n, "shocked")

    observed_nodes: tuple[int, ...] = ()
    if scope is not LossScope.NETWORK:
        if observed is None:
            msg = f"scope {scope.value!r} needs observed node(s)"
            raise ConfigError(msg)
        observed_nodes = _node_set(observed)
        _check_node_range(observed_nodes, population.n, "observed")
        if scope is LossScope.NODE and len(observed_nodes) != 1:
            msg = f"node scope observes exactly one node, got {list(observed_nodes)}"
            raise ConfigError(msg)
        overlap = set(observed_nodes) & set(shocked_nodes)
        if overlap:
            msg = f"observed nodes {sorted(overlap)} are also shocked"
            raise ConfigError(msg)

    values = population.market_caps
    matrices = parallel_map(lambda net: build_impact_matrix(net, population), ensemble, jobs)
    tasks = [(s, m) for s in range(len(shocks)) for m in range(len(matrices))]

    def work(task: tuple[int, int]) -> LossSample:
        s, m = task
        W = matrices[m]
        result = debtrank(W, ShockVector.on(W.n, shocked_nodes, shocks[s]), values)
        loss = _scope_loss(result.final_h, result.impact_fraction, values, scope, observed_nodes)
        return LossSample(s, m, shocks[s], loss)

    samples = parallel_map(work, tasks, jobs)
    logger.info("loss distribution (%s scope): %d samples", scope.value, len(samples))
    return LossDistribution(
        samples=tuple(samples),
        scope=scope,
        observed=observed_nodes,
        conditioning=conditioning or f"shocked {list(shocked_nodes)}",
    )


def write_losses(losses: LossDistribution, path: str | os.PathLike[str]) -> None:
    frame = pd.DataFrame(
        [
            (s.sample_index, s.member_index, format_float(s.shock), format_float(s.loss_fraction))
            for s in losses.samples
        ],
        columns=LOSS_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_losses(
    path: str | os.PathLike[str], scope: LossScope | str = LossScope.NETWORK
) -> LossDistribution:
    path = Path(path)
    frame = read_table(path, LOSS_COLUMNS)
    samples = tuple(
        LossSample(
            parse_cell(int, s, "sample_index", row),
            parse_cell(int, m, "member_index", row),
            parse_cell(float, x, "shock", row),
            parse_cell(float, loss, "loss_fraction", row),
        )
        for row, (s, m, x, loss) in enumerate(frame.itertuples(index=False), start=1)
    )
    return LossDistribution(samples=samples, scope=LossScope(scope), conditioning=path.name)


@dataclass(frozen=True)
class VaRReport:
    alpha: float
    var_value: float
    n_samples: int

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "var_value": self.var_value, "n_samples": self.n_samples}


def value_at_risk(
    losses: LossDistribution | Sequence[float], alpha: float = DEFAULT_ALPHA
) -> VaRReport:
    """
    Empirical VaR: the smallest sample l such that at most a 1 - alpha share
    of the samples is strictly greater than l.
    """
    if not 0 < alpha < 1:
        msg = f"alpha must lie in (0, 1), got {alpha}"
        raise DomainError(msg)
    values = losses.losses if isinstance(losses, LossDistribution) else np.asarray(losses, dtype=np.float64)
    if values.size == 0:
        msg = "value at risk needs at least one loss sample"
        raise ConfigError(msg)

    ordered = np.sort(values)
    n = len(ordered)
    # samples strictly above ordered[k]
    above = n - np.searchsorted(ordered, ordered, side="right")
    allowed = 1 - Fraction(repr(float(alpha)))
    k = next(k for k in range(n) if Fraction(int(above[k]), n) <= allowed)
    return VaRReport(alpha=float(alpha), var_value=float(ordered[k]), n_samples=n)


def write_var(report: VaRReport, path: str | os.PathLike[str]) -> None:
    write_json(path, report.as_dict())


def read_var(path: str | os.PathLike[str]) -> VaRReport:
    data = read_json(path)
    try:
        return VaRReport(
            alpha=float(data["alpha"]),
            var_value=float(data["var_value"]),
            n_samples=int(data["n_samples"]),
        )
    except KeyError as e:
        msg = f"VaR report is missing {e.args[0]!r}"
        raise SchemaError(msg) from None
    except (TypeError, ValueError):
        msg = f"{Path(path).name}: non-numeric VaR field"
        raise ParseError(msg) from None
