from __future__ import annotations

import logging
import os
import re
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from contagion_lab.balance_sheets import BankPopulation
from contagion_lab.common import format_float, parallel_map, parse_cell, read_table
from contagion_lab.contagion import (
    ALGORITHMS,
    Algorithm,
    build_impact_matrix,
    unit_default_impact,
)
from contagion_lab.errors import ConfigError, SchemaError
from contagion_lab.weights import WeightedNetwork

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 10
DEFAULT_FACTOR = 0.3
DEFAULT_BINS = 10

LONG_COLUMNS = ["node", "step", "algorithm", "member", "impact_fraction"]
AGGREGATE_COLUMNS = ["node", "step", "algorithm", "mean", "min", "max"]

_TOP_K = re.compile(r"^top(\d+)$", flags=re.IGNORECASE)


@dataclass(frozen=True)
class DecaySchedule:
    """Step t carries market caps factor**(t-1) * base_caps; step 1 is the base."""

    steps: int
    factor: float
    base_caps: tuple[float, ...]

    def caps_at(self, step: int) -> np.ndarray:
        if not 1 <= step <= self.steps:
            msg = f"step must lie in 1..{self.steps}, got {step}"
            raise ConfigError(msg)
        return self.factor ** (step - 1) * np.asarray(self.base_caps, dtype=np.float64)

    def population_at(self, population: BankPopulation, step: int) -> BankPopulation:
        return population.with_market_caps(
            self.caps_at(step), label=f"{population.label}@step{step}"
        )


def build_decay_schedule(
    population: BankPopulation,
    steps: int = DEFAULT_STEPS,
    factor: float = DEFAULT_FACTOR,
) -> DecaySchedule:
    if not 0 < factor < 1:
        msg = f"decay factor must lie in (0, 1), got {factor}"
        raise ConfigError(msg)
    if steps < 1:
        msg = f"steps must be at least 1, got {steps}"
        raise ConfigError(msg)
    return DecaySchedule(
        steps=steps,
        factor=factor,
        base_caps=tuple(float(c) for c in population.market_caps),
    )


def select_nodes(population: BankPopulation, selection: str) -> list[int]:
    """
    Parse a node selector: `topK` (K largest banks by total assets),
    `all`, or a comma separated list of ids.
    """
    selection = selection.strip()
    if selection.lower() == "all":
        return list(range(population.n))
    match = _TOP_K.match(selection)
    if match:
        nodes = population.top_k_by_total_assets(int(match.group(1)))
        check_nodes(nodes, population.n)
        return nodes
    try:
        nodes = [int(part) for part in selection.split(",") if part.strip()]
    except ValueError:
        msg = f"cannot parse node selection {selection!r}"
        raise ConfigError(msg) from None
    check_nodes(nodes, population.n)
    return nodes


def check_nodes(nodes: Sequence[int], n: int) -> None:
    if not nodes:
        msg = "node selection is empty"
        raise ConfigError(msg)
    for node in nodes:
        if not 0 <= node < n:
            msg = f"node {node} outside 0..{n - 1}"
            raise ConfigError(msg)


class AggregateRow(NamedTuple):
    node: int
    step: int
    algorithm: str
    mean: float
    min: float
    max: float


@dataclass(frozen=True)
class SweepResult:
    """`impacts[a, k, t, m]`: algorithm a, node nodes[k], step steps[t], member m."""

    nodes: tuple[int, ...]
    steps: tuple[int, ...]
    algorithms: tuple[str, ...]
    impacts: np.ndarray

    @property
    def members(self) -> int:
        return self.impacts.shape[3]

    def cell(self, node: int, step: int, algorithm: Algorithm | str) -> np.ndarray:
        algorithm = Algorithm(algorithm).value
        try:
            a = self.algorithms.index(algorithm)
            k = self.nodes.index(node)
            t = self.steps.index(step)
        except ValueError:
            msg = f"no sweep cell for node={node}, step={step}, algorithm={algorithm}"
            raise ConfigError(msg) from None
        return self.impacts[a, k, t]

    def aggregates(self) -> list[AggregateRow]:
        rows = []
        for k, node in enumerate(self.nodes):
            for t, step in enumerate(self.steps):
                for a, algorithm in enumerate(self.algorithms):
                    values = self.impacts[a, k, t]
                    lo, hi = float(values.min()), float(values.max())
                    mean = min(max(float(values.mean()), lo), hi)
                    rows.append(AggregateRow(node, step, algorithm, mean, lo, hi))
        return rows

    def long_rows(self) -> Iterator[tuple[int, int, str, int, float]]:
        for k, node in enumerate(self.nodes):
            for t, step in enumerate(self.steps):
                for a, algorithm in enumerate(self.algorithms):
                    for m in range(self.members):
                        yield node, step, algorithm, m, float(self.impacts[a, k, t, m])


def _member_step_impacts(
    task: tuple[WeightedNetwork, BankPopulation],
    nodes: Sequence[int],
    algorithms: Sequence[Algorithm],
) -> np.ndarray:
    network, population = task
    W = build_impact_matrix(network, population)
    values = population.market_caps
    out = np.zeros((len(algorithms), len(nodes)), dtype=np.float64)
    for a, algorithm in enumerate(algorithms):
        for k, node in enumerate(nodes):
            out[a, k] = unit_default_impact(W, values, algorithm, node)
    return out


def run_failure_sweep(
    ensemble: Sequence[WeightedNetwork],
    schedule: DecaySchedule,
    nodes: Sequence[int],
    algorithms: Sequence[Algorithm | str] = tuple(ALGORITHMS),
    jobs: Optional[int] = None,
) -> SweepResult:
    """
    Unit default of every selected node, at every decay step, on every
    ensemble member, under each algorithm. Weights and topologies stay
    fixed; only the impact matrix is rebuilt from each step's caps.
    """
    if not ensemble:
        msg = "the failure sweep needs a non-empty ensemble"
        raise ConfigError(msg)
    n = ensemble[0].n
    check_nodes(nodes, n)
    algs = [Algorithm(a) for a in dict.fromkeys(algorithms)]
    if not algs:
        msg = "select at least one algorithm"
        raise ConfigError(msg)
    if len(schedule.base_caps) != n:
        msg = f"schedule covers {len(schedule.base_caps)} banks, networks have {n}"
        raise ConfigError(msg)

    steps = list(range(1, schedule.steps + 1))
    tasks = [
        (network, schedule.population_at(network.population, step))
        for network in ensemble
        for step in steps
    ]

    def work(task):
        return _member_step_impacts(task, nodes, algs)

    results = parallel_map(work, tasks, jobs)
    logger.info(
        "failure sweep: %d members x %d steps x %d nodes x %d algorithms",
        len(ensemble),
        len(steps),
        len(nodes),
        len(algs),
    )

    impacts = np.zeros((len(algs), len(nodes), len(steps), len(ensemble)))
    for idx, block in enumerate(results):
        m, t = divmod(idx, len(steps))
        impacts[:, :, t, m] = block
    return SweepResult(
        nodes=tuple(int(x) for x in nodes),
        steps=tuple(steps),
        algorithms=tuple(a.value for a in algs),
        impacts=impacts,
    )


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def rows(self) -> list[tuple[float, float, int]]:
        return [
            (float(lo), float(hi), int(c))
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)
        ]


def histogram(values: Sequence[float], bins: int = DEFAULT_BINS) -> Histogram:
    "Equal-width bins over [0, 1]; the last bin is closed."
    if bins < 1:
        msg = f"bins must be at least 1, got {bins}"
        raise ConfigError(msg)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        msg = "cannot build a histogram of no values"
        raise ConfigError(msg)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return Histogram(bin_edges=edges, counts=counts)


def impact_histogram(
    sweep: SweepResult,
    node: int,
    step: int,
    algorithm: Algorithm | str,
    bins: int = DEFAULT_BINS,
) -> Histogram:
    return histogram(sweep.cell(node, step, algorithm), bins)


def write_histogram(hist: Histogram, path: str | os.PathLike[str]) -> None:
    frame = pd.DataFrame(
        [(format_float(lo), format_float(hi), c) for lo, hi, c in hist.rows()],
        columns=["bin_lo", "bin_hi", "count"],
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def write_sweep(
    sweep: SweepResult,
    long_path: str | os.PathLike[str],
    aggregate_path: str | os.PathLike[str],
) -> None:
    long_frame = pd.DataFrame(
        [
            (node, step, alg, m, format_float(x))
            for node, step, alg, m, x in sweep.long_rows()
        ],
        columns=LONG_COLUMNS,
    )
    long_frame.to_csv(long_path, index=False, lineterminator="\n")

    agg_frame = pd.DataFrame(
        [
            (r.node, r.step, r.algorithm, format_float(r.mean), format_float(r.min), format_float(r.max))
            for r in sweep.aggregates()
        ],
        columns=AGGREGATE_COLUMNS,
    )
    agg_frame.to_csv(aggregate_path, index=False, lineterminator="\n")


def read_sweep(long_path: str | os.PathLike[str]) -> SweepResult:
    frame = read_table(long_path, LONG_COLUMNS)
    records = [
        (
            parse_cell(int, node, "node", row),
            parse_cell(int, step, "step", row),
            alg.strip(),
            parse_cell(int, m, "member", row),
            parse_cell(float, x, "impact_fraction", row),
        )
        for row, (node, step, alg, m, x) in enumerate(frame.itertuples(index=False), start=1)
    ]
    if any(m < 0 for _, _, _, m, _ in records):
        msg = f"{Path(long_path).name}: negative member index"
        raise SchemaError(msg)
    nodes = tuple(dict.fromkeys(r[0] for r in records))
    steps = tuple(sorted({r[1] for r in records}))
    algorithms = tuple(dict.fromkeys(r[2] for r in records))
    members = max((r[3] for r in records), default=-1) + 1

    impacts = np.zeros((len(algorithms), len(nodes), len(steps), members))
    for node, step, alg, m, x in records:
        impacts[algorithms.index(alg), nodes.index(node), steps.index(step), m] = x
    return SweepResult(nodes=nodes, steps=steps, algorithms=algorithms, impacts=impacts)


class RankRow(NamedTuple):
    node: int
    mean: float
    min: float
    max: float


def ensemble_ranking(
    ensemble: Sequence[WeightedNetwork],
    population: BankPopulation,
    algorithm: Algorithm | str = Algorithm.DEBTRANK,
    nodes: Optional[Sequence[int]] = None,
    jobs: Optional[int] = None,
) -> list[RankRow]:
    """
    Systemic importance of each node across the ensemble under the given
    balance sheets, sorted by mean impact (descending), then id.
    """
    if not ensemble:
        msg = "ranking needs a non-empty ensemble"
        raise ConfigError(msg)
    nodes = list(range(population.n)) if nodes is None else list(nodes)
    check_nodes(nodes, population.n)
    algorithm = Algorithm(algorithm)
    blocks = parallel_map(
        lambda network: _member_step_impacts((network, population), nodes, [algorithm])[0],
        ensemble,
        jobs,
    )
    impacts = np.vstack(blocks)
    rows = []
    for k, node in enumerate(nodes):
        col = impacts[:, k]
        lo, hi = float(col.min()), float(col.max())
        rows.append(RankRow(node, min(max(float(col.mean()), lo), hi), lo, hi))
    return sorted(rows, key=lambda r: (-r.mean, r.node))


RANK_COLUMNS = ["node", "mean", "min", "max"]


def write_ranking(rows: Sequence[RankRow], path: str | os.PathLike[str]) -> None:
    frame = pd.DataFrame(
        [(r.node, format_float(r.mean), format_float(r.min), format_float(r.max)) for r in rows],
        columns=RANK_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_ranking(path: str | os.PathLike[str]) -> list[RankRow]:
    frame = read_table(path, RANK_COLUMNS)
    return [
        RankRow(
            parse_cell(int, node, "node", row),
            parse_cell(float, mean, "mean", row),
            parse_cell(float, lo, "min", row),
            parse_cell(float, hi, "max", row),
        )
        for row, (node, mean, lo, hi) in enumerate(frame.itertuples(index=False), start=1)
    ]
