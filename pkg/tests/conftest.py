from __future__ import annotations

from collections.abc import Sequence

import pytest

from contagion_lab.balance_sheets import BankPopulation, BankRecord, generate_synthetic_population
from contagion_lab.storage import EnsembleBundle, estimate_ensemble


def make_population(
    caps: Sequence[float],
    ib_assets: Sequence[float] | None = None,
    ib_liabilities: Sequence[float] | None = None,
    total_assets: Sequence[float] | None = None,
) -> BankPopulation:
    n = len(caps)
    ib_assets = ib_assets if ib_assets is not None else [0.0] * n
    ib_liabilities = ib_liabilities if ib_liabilities is not None else [0.0] * n
    total_assets = total_assets if total_assets is not None else [100.0] * n
    banks = tuple(
        BankRecord(
            id=i,
            name=f"b{i}",
            total_assets=total_assets[i],
            market_cap=caps[i],
            interbank_assets=ib_assets[i],
            interbank_liabilities=ib_liabilities[i],
        )
        for i in range(n)
    )
    return BankPopulation(banks=banks, label="test")


@pytest.fixture(scope="session")
def small_population() -> BankPopulation:
    return generate_synthetic_population(12, seed=3)


@pytest.fixture(scope="session")
def small_bundle(small_population: BankPopulation) -> EnsembleBundle:
    return estimate_ensemble(small_population, target_edges=30, size=4, master_seed=5, jobs=1)
