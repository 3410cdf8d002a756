from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contagion_lab.balance_sheets import (
    BankRecord,
    SynthParams,
    generate_synthetic_population,
    load_population,
    rank_size_slope,
    write_population,
)
from contagion_lab.errors import ConfigError, ParseError, SchemaError, ValidationError

HEADER = "id,name,total_assets,market_cap,interbank_assets,interbank_liabilities"


def write_csv(tmp_path, *rows: str, header: str = HEADER):
    path = tmp_path / "banks.csv"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def check_invariants(bank: BankRecord) -> None:
    assert bank.total_assets > 0
    assert bank.market_cap > 0
    assert 0 <= bank.interbank_assets <= bank.total_assets
    assert bank.interbank_liabilities >= 0


def test_load_population(tmp_path):
    path = write_csv(
        tmp_path,
        "0,alpha,100.0,10.0,20.0,15.0",
        "1,beta,50,5,5,10",
        "2,,20.5,2.5,0,1",
    )
    population = load_population(path)
    assert population.n == 3
    assert population.banks[0].name == "alpha"
    assert population.banks[2].name is None
    assert population.label == "banks"
    np.testing.assert_array_equal(population.market_caps, [10.0, 5.0, 2.5])


@pytest.mark.parametrize(
    ("rows", "row"),
    [
        (["0,a,100,10,20,15", "1,b,50,0,5,10"], 2),
        (["0,a,100,-1,20,15"], 1),
        (["0,a,0,10,0,15"], 1),
        (["0,a,100,10,20,15", "1,b,50,5,60,10"], 2),
        (["0,a,100,10,20,-3"], 1),
    ],
)
def test_load_population_validation(tmp_path, rows: list[str], row: int):
    path = write_csv(tmp_path, *rows)
    with pytest.raises(ValidationError) as excinfo:
        load_population(path)
    assert excinfo.value.row == row


@pytest.mark.parametrize(
    ("rows", "error"),
    [
        (["0,a,100,10,20,15", "0,b,50,5,5,10"], SchemaError),
        (["0,a,100,10,20,15", ",b,50,5,5,10"], SchemaError),
        (["1,a,100,10,20,15"], SchemaError),
        (["x,a,100,10,20,15"], ParseError),
        (["0,a,1e2,ten,20,15"], ParseError),
        ([], SchemaError),
    ],
)
def test_load_population_errors(tmp_path, rows: list[str], error: type[Exception]):
    path = write_csv(tmp_path, *rows)
    with pytest.raises(error):
        load_population(path)


def test_load_population_header(tmp_path):
    path = write_csv(tmp_path, "0,a,100,10,20,15", header="id,name,assets,cap,a,l")
    with pytest.raises(SchemaError, match="expected header"):
        load_population(path)


@pytest.mark.parametrize(
    ("text", "error"),
    [
        ("", SchemaError),
        ("id,name,total_assets,market_cap,interbank_assets,interbank_liabilities\n0,a,100\n", ParseError),
    ],
)
def test_load_population_malformed(tmp_path, text: str, error: type[Exception]):
    path = tmp_path / "banks.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(error, match="banks.csv|row 1"):
        load_population(path)


def test_generate_synthetic_population():
    population = generate_synthetic_population(227, seed=7)
    assert population.n == 227
    assert [b.id for b in population.banks] == list(range(227))
    for bank in population.banks:
        check_invariants(bank)


def test_generate_is_deterministic():
    a = generate_synthetic_population(227, seed=7)
    b = generate_synthetic_population(227, seed=7)
    assert a == b
    assert a != generate_synthetic_population(227, seed=8)


@pytest.mark.parametrize("n", [-1, 0, 1])
def test_generate_too_small(n: int):
    with pytest.raises(ConfigError):
        generate_synthetic_population(n, seed=0)


def test_generate_fractions():
    params = SynthParams(cap_fraction=(0.1, 0.1), ib_asset_fraction=(0.2, 0.2))
    population = generate_synthetic_population(50, seed=1, params=params)
    np.testing.assert_allclose(population.market_caps, 0.1 * population.total_assets)
    np.testing.assert_allclose(population.interbank_assets, 0.2 * population.total_assets)
    assert population.total_assets.min() >= params.pareto_scale


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cap_fraction": (0.3, 0.1)},
        {"cap_fraction": (0.0, 0.1)},
        {"ib_liab_fraction": (0.5, 1.5)},
        {"pareto_shape": -2.0},
        {"bogus": 1},
    ],
)
def test_synth_params_invalid(kwargs):
    with pytest.raises(ValueError):  # noqa: PT011
        SynthParams(**kwargs)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 60))
def test_generated_invariants(seed: int, n: int):
    for bank in generate_synthetic_population(n, seed=seed).banks:
        check_invariants(bank)


def test_rank_size_slope():
    population = generate_synthetic_population(10_000, seed=11)
    slope = rank_size_slope(population.total_assets)
    assert abs(slope + 0.5) <= 0.3

    rng = np.random.default_rng(11)
    direct = 100.0 * (1.0 + rng.pareto(2.0, size=10_000))
    assert abs(rank_size_slope(direct) + 0.5) <= 0.3


def test_write_then_load(tmp_path):
    population = generate_synthetic_population(30, seed=4)
    path = tmp_path / "pop.csv"
    write_population(population, path)
    loaded = load_population(path)
    assert loaded.banks == population.banks


def test_with_market_caps_keeps_other_fields():
    population = generate_synthetic_population(5, seed=2)
    scaled = population.with_market_caps(population.market_caps * 0.5)
    np.testing.assert_array_equal(scaled.market_caps, population.market_caps * 0.5)
    np.testing.assert_array_equal(scaled.total_assets, population.total_assets)
    np.testing.assert_array_equal(scaled.interbank_assets, population.interbank_assets)
    with pytest.raises(ConfigError):
        population.with_market_caps([1.0])


def test_top_k_by_total_assets():
    population = generate_synthetic_population(20, seed=9)
    top = population.top_k_by_total_assets(5)
    assert len(top) == 5
    assets = population.total_assets
    assert list(assets[top]) == sorted(assets, reverse=True)[:5]
