from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import partial
from typing import Optional, Union

import numpy as np

from contagion_lab.balance_sheets import BankPopulation
from contagion_lab.common import parallel_map, write_json
from contagion_lab.errors import ConfigError, DomainError, ValidationError
from contagion_lab.weights import WeightedNetwork

logger = logging.getLogger(__name__)

# h within this distance of 1 counts as a default
DEFAULT_TOLERANCE = 1e-12


class NodeState(IntEnum):
    UNDISTRESSED = 0
    DISTRESSED = 1
    INACTIVE = 2


class Algorithm(Enum):
    DEBTRANK = "debtrank"
    CASCADE = "cascade"


ALGORITHMS = [Algorithm.DEBTRANK.value, Algorithm.CASCADE.value]


@dataclass(frozen=True)
class ImpactMatrix:
    """
    `entries[j, i]` is the fraction of bank i's capital lost when bank j
    defaults: min(1, w_ij / C_i) for lending w_ij from i to j.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            msg = f"impact matrix must be square, got shape {e.shape}"
            raise ConfigError(msg)
        if e.size and (e.min() < 0 or e.max() > 1):
            msg = "impact matrix entries must lie in [0, 1]"
            raise DomainError(msg)
        if np.any(np.diag(e) != 0):
            msg = "impact matrix must have a zero diagonal"
            raise DomainError(msg)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def empty(cls, n: int) -> ImpactMatrix:
        return cls(np.zeros((n, n), dtype=np.float64))


@dataclass(frozen=True)
class ShockVector:
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.float64)
        if psi.ndim != 1:
            msg = "shock vector must be one-dimensional"
            raise DomainError(msg)
        if psi.size and (not np.all(np.isfinite(psi)) or psi.min() < 0 or psi.max() > 1):
            msg = f"shock entries must lie in [0, 1], got {psi.tolist()}"
            raise DomainError(msg)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def on(cls, n: int, nodes: Union[int, Iterable[int]], level: float = 1.0) -> ShockVector:
        "`level` on every node in `nodes`, zero elsewhere."
        psi = np.zeros(n, dtype=np.float64)
        idx = [nodes] if isinstance(nodes, (int, np.integer)) else list(nodes)
        for i in idx:
            if not 0 <= i < n:
                msg = f"shocked node {i} outside 0..{n - 1}"
                raise ConfigError(msg)
        psi[idx] = level
        return cls(psi)

    @property
    def distressed(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.psi > 0))


@dataclass
class ContagionState:
    h: np.ndarray
    s: np.ndarray
    t: int = 1


@dataclass(frozen=True)
class ContagionResult:
    final_h: np.ndarray
    impact_currency: float
    impact_fraction: float
    defaulted: frozenset[int]
    steps: int
    history: tuple[np.ndarray, ...] = field(default=(), repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "final_h": [float(x) for x in self.final_h],
            "impact_currency": float(self.impact_currency),
            "impact_fraction": float(self.impact_fraction),
            "defaulted": sorted(self.defaulted),
            "steps": self.steps,
        }


def write_result(result: ContagionResult, path: str | os.PathLike[str]) -> None:
    write_json(path, result.as_dict())


def build_impact_matrix(
    network: WeightedNetwork, population: Optional[BankPopulation] = None
) -> ImpactMatrix:
    """
    Lender-capital impact matrix. `population` overrides the network's own
    balance sheets, which is how decayed capitalisations are applied.
    """
    population = population or network.population
    if population.n != network.n:
        msg = f"network has {network.n} nodes, population has {population.n} banks"
        raise ConfigError(msg)
    caps = population.market_caps
    if np.any(caps <= 0):
        bad = int(np.flatnonzero(caps <= 0)[0])
        msg = f"bank {bad} has non-positive market capitalisation"
        raise ValidationError(msg)
    entries = np.minimum(1.0, network.exposures / caps[:, None]).T.copy()
    np.fill_diagonal(entries, 0.0)
    return ImpactMatrix(entries)


def _as_shock(shock: ShockVector | Sequence[float]) -> ShockVector:
    return shock if isinstance(shock, ShockVector) else ShockVector(np.asarray(shock))


def _check_inputs(W: ImpactMatrix, shock: ShockVector, values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if not (W.n == len(shock.psi) == len(v)):
        msg = f"size mismatch: W is {W.n}x{W.n}, psi has {len(shock.psi)}, values {len(v)}"
        raise ConfigError(msg)
    if v.size and v.min() <= 0:
        msg = "economic values must be positive"
        raise DomainError(msg)
    return v


def _propagate(
    W: ImpactMatrix,
    shock: ShockVector,
    values: np.ndarray,
    algorithm: Algorithm,
    keep_history: bool,
) -> ContagionResult:
    entries = W.entries
    h_start = shock.psi.copy()
    state = ContagionState(
        h=h_start.copy(),
        s=np.where(
            h_start > 0, NodeState.DISTRESSED, NodeState.UNDISTRESSED
        ).astype(np.int8),
    )
    history = [state.h.copy()] if keep_history else []

    while True:
        distressed = state.s == NodeState.DISTRESSED
        if not distressed.any():
            break
        inflow = entries[distressed].T @ state.h[distressed]
        h_next = np.minimum(1.0, state.h + inflow)

        s_next = state.s.copy()
        s_next[distressed] = NodeState.INACTIVE
        undistressed = state.s == NodeState.UNDISTRESSED
        if algorithm is Algorithm.DEBTRANK:
            joining = undistressed & (h_next > 0)
        else:
            joining = undistressed & (h_next >= 1.0 - DEFAULT_TOLERANCE)
        s_next[joining] = NodeState.DISTRESSED

        state = ContagionState(h=h_next, s=s_next, t=state.t + 1)
        if keep_history:
            history.append(h_next.copy())

    impact = float(np.dot(state.h - h_start, values))
    impact = max(impact, 0.0)
    total = float(values.sum())
    fraction = min(max(impact / total, 0.0), 1.0) if total > 0 else 0.0
    defaulted = frozenset(int(i) for i in np.flatnonzero(state.h >= 1.0 - DEFAULT_TOLERANCE))
    logger.debug("%s finished after %d steps, R=%r", algorithm.value, state.t, impact)
    return ContagionResult(
        final_h=state.h,
        impact_currency=impact,
        impact_fraction=fraction,
        defaulted=defaulted,
        steps=state.t,
        history=tuple(history),
    )


def debtrank(
    W: ImpactMatrix,
    shock: ShockVector | Sequence[float],
    values: Sequence[float],
    keep_history: bool = False,
) -> ContagionResult:
    """
    DebtRank: every node with positive distress propagates its cumulative
    distress once, the step after it becomes distressed.

    R = sum_i h_i(T) v_i - sum_i h_i(1) v_i; the initial shock itself is
    not counted.
    """
    shock = _as_shock(shock)
    v = _check_inputs(W, shock, values)
    return _propagate(W, shock, v, Algorithm.DEBTRANK, keep_history)


def default_cascade(
    W: ImpactMatrix,
    shock: ShockVector | Sequence[float],
    values: Sequence[float],
    keep_history: bool = False,
) -> ContagionResult:
    """
    Default cascade: distress still accumulates everywhere, but only banks
    that reach h = 1 propagate. Shocks must be complete defaults (0 or 1).
    """
    shock = _as_shock(shock)
    if np.any((shock.psi != 0) & (shock.psi != 1)):
        msg = "the default cascade only simulates complete defaults: shocks must be 0 or 1"
        raise DomainError(msg)
    v = _check_inputs(W, shock, values)
    return _propagate(W, shock, v, Algorithm.CASCADE, keep_history)


def run_algorithm(
    algorithm: Algorithm | str,
    W: ImpactMatrix,
    shock: ShockVector | Sequence[float],
    values: Sequence[float],
) -> ContagionResult:
    algorithm = Algorithm(algorithm)
    mapping = {Algorithm.DEBTRANK: debtrank, Algorithm.CASCADE: default_cascade}
    return mapping[algorithm](W, shock, values)


def unit_default_impact(
    W: ImpactMatrix, values: Sequence[float], algorithm: Algorithm | str, node: int
) -> float:
    shock = ShockVector.on(W.n, node, 1.0)
    return run_algorithm(algorithm, W, shock, values).impact_fraction


def systemic_ranking(
    W: ImpactMatrix,
    values: Sequence[float],
    algorithm: Algorithm | str = Algorithm.DEBTRANK,
    jobs: Optional[int] = 1,
) -> list[tuple[int, float]]:
    """
    Impact fraction of a unit default on each node, largest first, ties
    broken by ascending node id.
    """
    task = partial(unit_default_impact, W, values, Algorithm(algorithm))
    impacts = parallel_map(task, range(W.n), jobs)
    ranking = [(i, float(x)) for i, x in enumerate(impacts)]
    return sorted(ranking, key=lambda item: (-item[1], item[0]))
