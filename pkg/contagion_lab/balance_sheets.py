from __future__ import annotations

import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from contagion_lab.common import parse_cell, read_table
from contagion_lab.errors import ConfigError, ParseError, SchemaError, ValidationError

try:
    from pydantic.v1 import (
        BaseModel,
        Extra,
        PositiveFloat,
        confloat,
        root_validator,
        validator,
    )
    from pydantic.v1 import ValidationError as PydanticValidationError
except ImportError:
    from pydantic import (
        BaseModel,
        Extra,
        PositiveFloat,
        confloat,
        root_validator,
        validator,
    )
    from pydantic import ValidationError as PydanticValidationError

logger = logging.getLogger(__name__)

# Figures are in millions of USD.
COLUMNS = (
    "id",
    "name",
    "total_assets",
    "market_cap",
    "interbank_assets",
    "interbank_liabilities",
)
NUMERIC_COLUMNS = COLUMNS[2:]

Fraction = confloat(ge=0.0, le=1.0)


class BankRecord(BaseModel, extra=Extra.forbid, allow_mutation=False):
    id: int
    name: Optional[str] = None
    total_assets: float
    market_cap: float
    interbank_assets: float
    interbank_liabilities: float

    @validator("id")
    def id_validator(cls, v: int):  # noqa: N805
        if v < 0:
            msg = f"id must be non-negative, got {v}"
            raise ValueError(msg)
        return v

    @validator("total_assets", "market_cap")
    def positive_validator(cls, v: float, field):  # noqa: N805
        if not np.isfinite(v) or v <= 0:
            msg = f"{field.name} must be positive, got {v}"
            raise ValueError(msg)
        return v

    @validator("interbank_liabilities")
    def liabilities_validator(cls, v: float):  # noqa: N805
        if not np.isfinite(v) or v < 0:
            msg = f"interbank_liabilities must be non-negative, got {v}"
            raise ValueError(msg)
        return v

    @root_validator(skip_on_failure=True)
    def interbank_assets_validator(cls, values):  # noqa: N805
        ib_assets = values["interbank_assets"]
        if not np.isfinite(ib_assets) or not 0 <= ib_assets <= values["total_assets"]:
            msg = (
                f"interbank_assets must lie in [0, total_assets={values['total_assets']}],"
                f" got {ib_assets}"
            )
            raise ValueError(msg)
        return values


@dataclass(frozen=True)
class BankPopulation:
    banks: tuple[BankRecord, ...]
    label: str = ""

    def __post_init__(self):
        if not self.banks:
            msg = "a bank population must not be empty"
            raise ConfigError(msg)
        for i, bank in enumerate(self.banks):
            if bank.id != i:
                msg = f"bank ids must be contiguous from 0, position {i} holds id {bank.id}"
                raise SchemaError(msg)

    def __len__(self) -> int:
        return len(self.banks)

    @property
    def n(self) -> int:
        return len(self.banks)

    @cached_property
    def total_assets(self) -> np.ndarray:
        return np.array([b.total_assets for b in self.banks], dtype=np.float64)

    @cached_property
    def market_caps(self) -> np.ndarray:
        return np.array([b.market_cap for b in self.banks], dtype=np.float64)

    @cached_property
    def interbank_assets(self) -> np.ndarray:
        return np.array([b.interbank_assets for b in self.banks], dtype=np.float64)

    @cached_property
    def interbank_liabilities(self) -> np.ndarray:
        return np.array([b.interbank_liabilities for b in self.banks], dtype=np.float64)

    def with_market_caps(self, caps: Sequence[float], label: str = "") -> BankPopulation:
        """Same balance sheets with market capitalisation replaced."""
        if len(caps) != self.n:
            msg = f"expected {self.n} market caps, got {len(caps)}"
            raise ConfigError(msg)
        banks = tuple(
            b.copy(update={"market_cap": float(c)}) for b, c in zip(self.banks, caps)
        )
        return BankPopulation(banks=banks, label=label or self.label)

    def top_k_by_total_assets(self, k: int) -> list[int]:
        "Ids of the `k` largest banks, ties broken by ascending id."
        order = sorted(range(self.n), key=lambda i: (-self.total_assets[i], i))
        return order[: max(k, 0)]


class SynthParams(BaseModel, extra=Extra.forbid):
    pareto_shape: PositiveFloat = 2.0
    pareto_scale: PositiveFloat = 100.0
    cap_fraction: tuple[Fraction, Fraction] = (0.05, 0.20)
    ib_asset_fraction: tuple[Fraction, Fraction] = (0.05, 0.30)
    ib_liab_fraction: tuple[Fraction, Fraction] = (0.05, 0.30)

    @validator("cap_fraction", "ib_asset_fraction", "ib_liab_fraction")
    def range_validator(cls, v: tuple[float, float], field):  # noqa: N805
        lo, hi = v
        if lo > hi:
            msg = f"{field.name} range is reversed: {v}"
            raise ValueError(msg)
        if field.name == "cap_fraction" and lo <= 0:
            msg = "cap_fraction must stay positive"
            raise ValueError(msg)
        return v


def load_population(path: str | os.PathLike[str], label: str = "") -> BankPopulation:
    """
    Read a balance-sheet CSV.

    The header must be exactly `id,name,total_assets,market_cap,interbank_assets,interbank_liabilities`.
    Row order defines the ids, so the `id` column has to read 0..N-1.
    """
    path = Path(path)
    frame = read_table(path, COLUMNS)
    if frame.empty:
        msg = f"{path.name}: no bank rows"
        raise SchemaError(msg)

    seen: set[int] = set()
    banks = []
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + 1
        raw_id = record.id.strip()
        if not raw_id:
            msg = f"row {row}: missing id"
            raise SchemaError(msg)
        try:
            bank_id = int(raw_id)
        except ValueError:
            msg = f"row {row}: id {raw_id!r} is not an integer"
            raise ParseError(msg) from None
        if bank_id in seen:
            msg = f"row {row}: duplicate id {bank_id}"
            raise SchemaError(msg)
        if bank_id != i:
            msg = f"row {row}: id {bank_id} breaks the 0..N-1 row order"
            raise SchemaError(msg)
        seen.add(bank_id)

        values = {c: parse_cell(float, getattr(record, c), c, row) for c in NUMERIC_COLUMNS}
        try:
            bank = BankRecord(id=bank_id, name=record.name or None, **values)
        except PydanticValidationError as e:
            msg = f"row {row}: {e.errors()[0]['msg']}"
            raise ValidationError(msg, row=row) from None
        banks.append(bank)

    logger.info("loaded %d banks from %s", len(banks), path)
    return BankPopulation(banks=tuple(banks), label=label or path.stem)


def write_population(population: BankPopulation, path: str | os.PathLike[str]) -> None:
    frame = pd.DataFrame(
        {
            "id": [b.id for b in population.banks],
            "name": [b.name or "" for b in population.banks],
            **{
                c: [repr(float(getattr(b, c))) for b in population.banks]
                for c in NUMERIC_COLUMNS
            },
        },
        columns=list(COLUMNS),
    )
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def generate_synthetic_population(
    n: int, seed: int, params: Optional[SynthParams] = None, label: str = ""
) -> BankPopulation:
    """
    Heavy-tailed stand-in for a real balance-sheet extract.

    Total assets follow a Pareto law with `params.pareto_shape` and minimum
    `params.pareto_scale`; the other attributes are uniform fractions of
    total assets. A pure function of (n, seed, params).
    """
    if n < 2:
        msg = f"a synthetic population needs at least 2 banks, got {n}"
        raise ConfigError(msg)
    params = params or SynthParams()

    rng = np.random.default_rng(seed)
    total_assets = params.pareto_scale * (1.0 + rng.pareto(params.pareto_shape, size=n))
    cap = rng.uniform(*params.cap_fraction, size=n)
    ib_assets = rng.uniform(*params.ib_asset_fraction, size=n)
    ib_liabs = rng.uniform(*params.ib_liab_fraction, size=n)

    banks = tuple(
        BankRecord(
            id=i,
            name=f"bank_{i:0{len(str(n - 1))}d}",
            total_assets=float(total_assets[i]),
            market_cap=float(cap[i] * total_assets[i]),
            interbank_assets=float(min(ib_assets[i] * total_assets[i], total_assets[i])),
            interbank_liabilities=float(ib_liabs[i] * total_assets[i]),
        )
        for i in range(n)
    )
    return BankPopulation(banks=banks, label=label or f"synthetic-n{n}-seed{seed}")


def rank_size_slope(values: Sequence[float], tail_fraction: float = 0.1) -> float:
    """
    Least-squares slope of log(value) against log(rank) over the largest
    `tail_fraction` of the values. A Pareto tail with shape a gives -1/a.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    k = max(int(len(arr) * tail_fraction), 2)
    ranks = np.arange(1, k + 1, dtype=np.float64)
    slope, _ = np.polyfit(np.log(ranks), np.log(arr[:k]), 1)
    return float(slope)
