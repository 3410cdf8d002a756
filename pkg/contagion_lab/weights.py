from __future__ import annotations

import logging
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property

import numpy as np
import pandas as pd

from contagion_lab.balance_sheets import BankPopulation
from contagion_lab.common import parse_cell, read_table
from contagion_lab.errors import ConfigError, SchemaError
from contagion_lab.topology import Topology

logger = logging.getLogger(__name__)

# mil USD lent per transfer, and the global sweep cap
DEFAULT_INCREMENT = 0.01
DEFAULT_MAX_SWEEPS = 500

_GRID_EPS = 1e-9
EDGE_COLUMNS = ["src", "dst", "weight"]

Edge = tuple[int, int]


def grid_capacity(amounts: np.ndarray, increment: float) -> list[int]:
    "How many whole increments fit under each amount."
    return [int(math.floor(a / increment + _GRID_EPS)) for a in amounts]


def _decimals(increment: float) -> int:
    exponent = Decimal(repr(increment)).normalize().as_tuple().exponent
    return max(2, -int(exponent))


@dataclass(frozen=True)
class WeightedNetwork:
    """
    Lending amounts on a topology. `units[(i, j)]` counts increments that
    bank i lends to bank j, so w_ij = units * increment.
    """

    population: BankPopulation
    topology: Topology
    units: Mapping[Edge, int] = field(default_factory=dict)
    increment: float = DEFAULT_INCREMENT
    sweeps: int = 0

    def __post_init__(self):
        if self.topology.n != self.population.n:
            msg = f"topology has {self.topology.n} nodes, population has {self.population.n} banks"
            raise ConfigError(msg)
        edges = set(self.topology.edges)
        for edge, count in self.units.items():
            if edge not in edges:
                msg = f"weight on {edge} which is not a topology edge"
                raise SchemaError(msg)
            if count < 0:
                msg = f"negative weight on {edge}"
                raise SchemaError(msg)

    @property
    def n(self) -> int:
        return self.topology.n

    def weight(self, i: int, j: int) -> float:
        return self.units.get((i, j), 0) * self.increment

    @property
    def weights(self) -> dict[Edge, float]:
        return {e: u * self.increment for e, u in self.units.items()}

    @cached_property
    def exposures(self) -> np.ndarray:
        "Dense matrix with w_ij in row i (lender), column j (borrower)."
        mat = np.zeros((self.n, self.n), dtype=np.float64)
        for (i, j), u in self.units.items():
            mat[i, j] = u * self.increment
        return mat

    def lent_units(self) -> list[int]:
        out = [0] * self.n
        for (i, _), u in self.units.items():
            out[i] += u
        return out

    def borrowed_units(self) -> list[int]:
        out = [0] * self.n
        for (_, j), u in self.units.items():
            out[j] += u
        return out

    @property
    def total_lent(self) -> float:
        return sum(self.units.values()) * self.increment


def assign_weights(
    topology: Topology,
    population: BankPopulation,
    increment: float = DEFAULT_INCREMENT,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> WeightedNetwork:
    """
    Round-robin lending heuristic.

    Each sweep visits lenders in ascending id; every lender adds one
    `increment` to each successor in ascending id, unless that would push
    its total lending past its interbank assets or the borrower's total
    borrowing past its interbank liabilities. Stops after a sweep without
    any transfer or after `max_sweeps` sweeps.

    Runs of sweeps in which every still-open edge transfers are applied in
    one step; the outcome is the same as sweeping them one by one.
    """
    if topology.n != population.n:
        msg = f"topology has {topology.n} nodes, population has {population.n} banks"
        raise ConfigError(msg)
    if increment <= 0:
        msg = f"increment must be positive, got {increment}"
        raise ConfigError(msg)
    if max_sweeps < 1:
        msg = f"max_sweeps must be at least 1, got {max_sweeps}"
        raise ConfigError(msg)

    edges = sorted(topology.edges)
    lender_left = grid_capacity(population.interbank_assets, increment)
    borrower_left = grid_capacity(population.interbank_liabilities, increment)
    units = [0] * len(edges)

    sweeps = 0
    while sweeps < max_sweeps:
        active = [
            k for k, (i, j) in enumerate(edges) if lender_left[i] > 0 and borrower_left[j] > 0
        ]
        if not active:
            break

        out_deg: dict[int, int] = {}
        in_deg: dict[int, int] = {}
        for k in active:
            i, j = edges[k]
            out_deg[i] = out_deg.get(i, 0) + 1
            in_deg[j] = in_deg.get(j, 0) + 1

        jump = min(
            min(lender_left[i] // d for i, d in out_deg.items()),
            min(borrower_left[j] // d for j, d in in_deg.items()),
            max_sweeps - sweeps,
        )
        if jump >= 1:
            for k in active:
                units[k] += jump
            for i, d in out_deg.items():
                lender_left[i] -= jump * d
            for j, d in in_deg.items():
                borrower_left[j] -= jump * d
            sweeps += jump
            continue

        moved = 0
        for k in active:
            i, j = edges[k]
            if lender_left[i] > 0 and borrower_left[j] > 0:
                units[k] += 1
                lender_left[i] -= 1
                borrower_left[j] -= 1
                moved += 1
        sweeps += 1
        if moved == 0:
            break

    logger.debug("weights assigned on %d edges after %d sweeps", len(edges), sweeps)
    return WeightedNetwork(
        population=population,
        topology=topology,
        units=dict(zip(edges, units)),
        increment=increment,
        sweeps=sweeps,
    )


def prune_zero_edges(network: WeightedNetwork) -> WeightedNetwork:
    return WeightedNetwork(
        population=network.population,
        topology=network.topology,
        units={e: u for e, u in network.units.items() if u != 0},
        increment=network.increment,
        sweeps=network.sweeps,
    )


def constraint_violations(network: WeightedNetwork) -> int:
    """
    Number of lenders lending more than their interbank assets plus the
    number of borrowers owing more than their interbank liabilities,
    compared on the increment grid.
    """
    pop = network.population
    lender_cap = grid_capacity(pop.interbank_assets, network.increment)
    borrower_cap = grid_capacity(pop.interbank_liabilities, network.increment)
    lent = network.lent_units()
    borrowed = network.borrowed_units()
    return sum(a > c for a, c in zip(lent, lender_cap)) + sum(
        b > c for b, c in zip(borrowed, borrower_cap)
    )


def write_weighted_network(network: WeightedNetwork, path: str | os.PathLike[str]) -> None:
    """`src,dst,weight` for every topology edge, zero weights included."""
    step = Decimal(repr(network.increment))
    quantum = Decimal(1).scaleb(-_decimals(network.increment))
    rows = [
        (i, j, str((network.units.get((i, j), 0) * step).quantize(quantum)))
        for i, j in sorted(network.topology.edges)
    ]
    frame = pd.DataFrame(rows, columns=EDGE_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_weighted_network(
    path: str | os.PathLike[str],
    population: BankPopulation,
    increment: float = DEFAULT_INCREMENT,
    seed: int = 0,
    sweeps: int = 0,
) -> WeightedNetwork:
    frame = read_table(path, EDGE_COLUMNS)
    step = Decimal(repr(increment))

    def to_units(text: str) -> int:
        return int((Decimal(text) / step).to_integral_value())

    edges = []
    units = {}
    for row, (i, j, w) in enumerate(frame.itertuples(index=False), start=1):
        edge = (parse_cell(int, i, "src", row), parse_cell(int, j, "dst", row))
        edges.append(edge)
        units[edge] = parse_cell(to_units, w, "weight", row)
    topology = Topology(n=population.n, edges=tuple(sorted(edges)), seed=seed)
    return WeightedNetwork(
        population=population,
        topology=topology,
        units=units,
        increment=increment,
        sweeps=sweeps,
    )
