from __future__ import annotations

import logging
import math
import os
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property, partial
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from contagion_lab.balance_sheets import BankPopulation
from contagion_lab.common import (
    mix_seed,
    parallel_map,
    parse_cell,
    read_json,
    read_table,
    write_json,
)
from contagion_lab.errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
    SchemaError,
)

logger = logging.getLogger(__name__)

DEFAULT_ENSEMBLE_SIZE = 50
MAX_BISECTIONS = 200
MAX_BRACKET_DOUBLINGS = 2000
RELATIVE_TOLERANCE = 1e-9


def edge_probability(z: float, y_i: float, y_j: float) -> float:
    """
    Fitness-model link probability z*y_i*y_j / (1 + z*y_i*y_j).

    With latent fitness x_i = sqrt(z) * y_i this is x_i*x_j / (1 + x_i*x_j).
    """
    if z < 0 or y_i < 0 or y_j < 0:
        msg = f"edge_probability needs non-negative inputs, got z={z}, y_i={y_i}, y_j={y_j}"
        raise DomainError(msg)
    zyy = z * y_i * y_j
    if math.isinf(zyy):
        return 1.0
    return zyy / (1.0 + zyy)


def probability_matrix(z: float, fitness: np.ndarray) -> np.ndarray:
    "p_ij for every ordered pair, zero diagonal."
    zyy = z * np.outer(fitness, fitness)
    p = zyy / (1.0 + zyy)
    np.fill_diagonal(p, 0.0)
    return p


def expected_edges(z: float, fitness: np.ndarray) -> float:
    "Sum of p_ij over ordered pairs i != j."
    return float(probability_matrix(z, fitness).sum())


@dataclass(frozen=True)
class FitnessCalibration:
    z: float
    fitness_proxy: tuple[float, ...]
    target_edges: float
    achieved_expected_edges: float

    @property
    def n(self) -> int:
        return len(self.fitness_proxy)

    @cached_property
    def probabilities(self) -> np.ndarray:
        return probability_matrix(self.z, np.asarray(self.fitness_proxy))

    @property
    def residual(self) -> float:
        return abs(self.achieved_expected_edges - self.target_edges)

    @property
    def edge_count_sd(self) -> float:
        "Standard deviation of the sampled edge count, sqrt(sum p(1-p))."
        p = self.probabilities
        return math.sqrt(float((p * (1.0 - p)).sum()))


def calibrate_z(
    population: BankPopulation,
    target_edges: float,
    tol: Optional[float] = None,
    max_iter: int = MAX_BISECTIONS,
) -> FitnessCalibration:
    """
    Find z so that the expected number of directed edges equals `target_edges`.

    The expected-edge sum rises strictly from 0 to N(N-1) as z grows, so the
    root is bracketed by doubling an upper bound and then bisected.
    """
    fitness = population.total_assets
    n = population.n
    supremum = n * (n - 1)
    if not 0 < target_edges < supremum:
        msg = f"target_edges must lie in (0, {supremum}) for {n} banks, got {target_edges}"
        raise InfeasibleError(msg)
    if tol is None:
        tol = RELATIVE_TOLERANCE * target_edges

    lo, hi = 0.0, 1.0 / float(fitness.max()) ** 2
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if expected_edges(hi, fitness) > target_edges:
            break
        lo, hi = hi, hi * 2.0
    else:
        msg = f"could not bracket z for target_edges={target_edges}"
        raise ConvergenceError(msg)

    z = hi
    achieved = expected_edges(z, fitness)
    for iteration in range(max_iter):
        z = 0.5 * (lo + hi)
        achieved = expected_edges(z, fitness)
        if abs(achieved - target_edges) <= tol:
            logger.debug("calibrated z=%r after %d bisections", z, iteration + 1)
            break
        if achieved < target_edges:
            lo = z
        else:
            hi = z
        if not lo < 0.5 * (lo + hi) < hi:
            break

    if abs(achieved - target_edges) > tol:
        msg = (
            f"bisection stopped at z={z!r} with expected edges {achieved!r},"
            f" target {target_edges} +/- {tol}"
        )
        raise ConvergenceError(msg)

    return FitnessCalibration(
        z=z,
        fitness_proxy=tuple(float(y) for y in fitness),
        target_edges=float(target_edges),
        achieved_expected_edges=achieved,
    )


@dataclass(frozen=True)
class Topology:
    n: int
    edges: tuple[tuple[int, int], ...]
    seed: int = 0

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                msg = f"self-loop on node {i}"
                raise SchemaError(msg)
            if not (0 <= i < self.n and 0 <= j < self.n):
                msg = f"edge ({i}, {j}) outside 0..{self.n - 1}"
                raise SchemaError(msg)

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray, seed: int = 0) -> Topology:
        src, dst = np.nonzero(adjacency)
        edges = tuple((int(i), int(j)) for i, j in zip(src, dst) if i != j)
        return cls(n=adjacency.shape[0], edges=edges, seed=seed)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            src, dst = zip(*self.edges)
            adj[list(src), list(dst)] = True
        return adj

    def successors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
        return [sorted(s) for s in out]


def sample_topology(calibration: FitnessCalibration, seed: int) -> Topology:
    "One independent Bernoulli(p_ij) draw per ordered pair."
    rng = np.random.default_rng(seed)
    draws = rng.random((calibration.n, calibration.n))
    adjacency = draws < calibration.probabilities
    np.fill_diagonal(adjacency, False)
    return Topology.from_adjacency(adjacency, seed=seed)


@dataclass(frozen=True)
class TopologyEnsemble:
    members: tuple[Topology, ...]
    calibration: FitnessCalibration
    master_seed: int

    def __len__(self) -> int:
        return len(self.members)

    @property
    def edge_counts(self) -> list[int]:
        return [m.edge_count for m in self.members]


def sample_ensemble(
    calibration: FitnessCalibration,
    size: int = DEFAULT_ENSEMBLE_SIZE,
    master_seed: int = 0,
    jobs: Optional[int] = None,
) -> TopologyEnsemble:
    if size < 1:
        msg = f"ensemble size must be at least 1, got {size}"
        raise ConfigError(msg)
    seeds = [mix_seed(master_seed, k) for k in range(size)]
    _ = calibration.probabilities  # computed once, shared read-only by workers
    members = parallel_map(partial(sample_topology, calibration), seeds, jobs)
    logger.info("sampled %d topologies (master seed %d)", size, master_seed)
    return TopologyEnsemble(
        members=tuple(members), calibration=calibration, master_seed=master_seed
    )


@dataclass(frozen=True)
class DensityStats:
    mean: float
    sd: float
    min: int
    max: int

    def as_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "sd": self.sd, "min": self.min, "max": self.max}


def density_stats(ensemble: TopologyEnsemble | Sequence[int]) -> DensityStats:
    """Mean, sample sd (divisor size-1), min and max of member edge counts."""
    counts = (
        ensemble.edge_counts
        if isinstance(ensemble, TopologyEnsemble)
        else [int(c) for c in ensemble]
    )
    if not counts:
        msg = "density statistics need a non-empty ensemble"
        raise ConfigError(msg)
    arr = np.asarray(counts, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    mean = float(arr.mean())
    return DensityStats(
        mean=float(min(max(mean, arr.min()), arr.max())),
        sd=sd,
        min=int(arr.min()),
        max=int(arr.max()),
    )


def density_histogram(
    ensemble: TopologyEnsemble, bins: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    "Frequency distribution of member edge counts: (counts, bin_edges)."
    counts, edges = np.histogram(ensemble.edge_counts, bins=bins)
    return counts, edges


@dataclass(frozen=True)
class DegreeDistribution:
    in_degree: tuple[int, ...]
    out_degree: tuple[int, ...]
    frequency: dict[int, int] = field(default_factory=dict)

    @property
    def total_degree(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.in_degree, self.out_degree))


def degree_distribution(topology: Topology) -> DegreeDistribution:
    "Per-node degrees plus a {total degree: node count} table."
    adj = topology.adjacency()
    in_deg = tuple(int(d) for d in adj.sum(axis=0))
    out_deg = tuple(int(d) for d in adj.sum(axis=1))
    freq = Counter(a + b for a, b in zip(in_deg, out_deg))
    return DegreeDistribution(
        in_degree=in_deg, out_degree=out_deg, frequency=dict(sorted(freq.items()))
    )


def write_topology(
    topology: Topology,
    path: str | os.PathLike[str],
    calibration: Optional[FitnessCalibration] = None,
) -> Path:
    """
    Write `src,dst` rows to `path` and a sidecar `<path>.json` holding
    {n, seed, z, target_edges}. Returns the sidecar path.
    """
    path = Path(path)
    frame = pd.DataFrame(list(topology.edges), columns=["src", "dst"])
    frame.to_csv(path, index=False, lineterminator="\n")
    sidecar = path.with_suffix(".json")
    write_json(
        sidecar,
        {
            "n": topology.n,
            "seed": topology.seed,
            "z": calibration.z if calibration else None,
            "target_edges": calibration.target_edges if calibration else None,
        },
    )
    return sidecar


def read_topology(path: str | os.PathLike[str]) -> Topology:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    frame = read_table(path, ["src", "dst"])
    edges = tuple(
        sorted(
            (parse_cell(int, i, "src", row), parse_cell(int, j, "dst", row))
            for row, (i, j) in enumerate(frame.itertuples(index=False), start=1)
        )
    )
    try:
        return Topology(n=int(meta["n"]), edges=edges, seed=int(meta["seed"]))
    except KeyError as e:
        msg = f"{path.with_suffix('.json').name}: missing key {e.args[0]!r}"
        raise SchemaError(msg) from None
