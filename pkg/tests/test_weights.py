from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contagion_lab.errors import ConfigError, ParseError, SchemaError
from contagion_lab.topology import Topology
from contagion_lab.weights import (
    WeightedNetwork,
    assign_weights,
    constraint_violations,
    grid_capacity,
    prune_zero_edges,
    read_weighted_network,
    write_weighted_network,
)
from tests.conftest import make_population


def reference_weights(topology, population, increment=0.01, max_sweeps=500):
    "One sweep at a time, one increment per edge, lenders then borrowers ascending."
    lend_cap = grid_capacity(population.interbank_assets, increment)
    borrow_cap = grid_capacity(population.interbank_liabilities, increment)
    lent = [0] * topology.n
    borrowed = [0] * topology.n
    units = {e: 0 for e in topology.edges}
    successors = topology.successors()
    for _ in range(max_sweeps):
        moved = 0
        for i in range(topology.n):
            for j in successors[i]:
                if lent[i] + 1 <= lend_cap[i] and borrowed[j] + 1 <= borrow_cap[j]:
                    units[(i, j)] += 1
                    lent[i] += 1
                    borrowed[j] += 1
                    moved += 1
        if moved == 0:
            break
    return units


def test_grid_capacity():
    assert grid_capacity(np.array([0.03, 0.05, 0.29, 0.0, 0.009]), 0.01) == [3, 5, 29, 0, 0]


def test_assign_weights_by_hand():
    population = make_population(
        caps=[1.0, 1.0, 1.0],
        ib_assets=[0.03, 0.0, 0.0],
        ib_liabilities=[0.0, 0.02, 0.05],
    )
    topology = Topology(n=3, edges=((0, 1), (0, 2)))
    network = assign_weights(topology, population)
    assert network.units == {(0, 1): 2, (0, 2): 1}
    assert network.weight(0, 1) == pytest.approx(0.02)
    assert network.weight(0, 2) == pytest.approx(0.01)
    assert network.weight(1, 0) == 0
    assert network.lent_units() == [3, 0, 0]
    assert network.borrowed_units() == [0, 2, 1]
    assert network.total_lent == pytest.approx(0.03)
    assert network.exposures[0, 1] == pytest.approx(0.02)
    assert constraint_violations(network) == 0


def test_assign_weights_sweep_cap():
    population = make_population(
        caps=[1.0, 1.0], ib_assets=[1.0, 0.0], ib_liabilities=[0.0, 1.0]
    )
    topology = Topology(n=2, edges=((0, 1),))
    network = assign_weights(topology, population, max_sweeps=7)
    assert network.units == {(0, 1): 7}
    assert network.sweeps == 7


@pytest.mark.parametrize(
    ("increment", "max_sweeps"), [(0.0, 10), (-0.01, 10), (0.01, 0)]
)
def test_assign_weights_invalid(increment: float, max_sweeps: int):
    population = make_population(caps=[1.0, 1.0])
    topology = Topology(n=2, edges=((0, 1),))
    with pytest.raises(ConfigError):
        assign_weights(topology, population, increment=increment, max_sweeps=max_sweeps)


def test_assign_weights_dimension_mismatch():
    with pytest.raises(ConfigError):
        assign_weights(Topology(n=3, edges=()), make_population(caps=[1.0, 1.0]))


@settings(max_examples=200, deadline=None)
@given(
    data=st.data(),
    n=st.integers(2, 6),
    max_sweeps=st.integers(1, 40),
)
def test_matches_literal_sweeps(data, n: int, max_sweeps: int):
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True))
    assets = data.draw(st.lists(st.integers(0, 60), min_size=n, max_size=n))
    liabilities = data.draw(st.lists(st.integers(0, 60), min_size=n, max_size=n))
    population = make_population(
        caps=[1.0] * n,
        ib_assets=[a * 0.01 for a in assets],
        ib_liabilities=[b * 0.01 for b in liabilities],
    )
    topology = Topology(n=n, edges=tuple(sorted(edges)))
    network = assign_weights(topology, population, max_sweeps=max_sweeps)
    assert network.units == reference_weights(topology, population, max_sweeps=max_sweeps)
    assert constraint_violations(network) == 0


def test_ensemble_constraints(small_bundle):
    for network in small_bundle.networks:
        assert constraint_violations(network) == 0
        assert set(network.units) == set(network.topology.edges)


def test_constraint_violations_counts():
    population = make_population(
        caps=[1.0, 1.0], ib_assets=[0.01, 0.0], ib_liabilities=[0.0, 0.01]
    )
    network = WeightedNetwork(
        population=population,
        topology=Topology(n=2, edges=((0, 1),)),
        units={(0, 1): 3},
    )
    assert constraint_violations(network) == 2


def test_weight_outside_topology():
    population = make_population(caps=[1.0, 1.0])
    with pytest.raises(SchemaError):
        WeightedNetwork(
            population=population,
            topology=Topology(n=2, edges=((0, 1),)),
            units={(1, 0): 1},
        )


def test_prune_zero_edges():
    population = make_population(caps=[1.0, 1.0, 1.0])
    network = WeightedNetwork(
        population=population,
        topology=Topology(n=3, edges=((0, 1), (0, 2))),
        units={(0, 1): 0, (0, 2): 4},
    )
    assert prune_zero_edges(network).units == {(0, 2): 4}


def test_write_read(tmp_path, small_bundle):
    network = small_bundle.networks[0]
    path = tmp_path / "member.csv"
    write_weighted_network(network, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "src,dst,weight"
    loaded = read_weighted_network(
        path, network.population, seed=network.topology.seed, sweeps=network.sweeps
    )
    assert loaded.units == network.units
    assert loaded.topology == network.topology
    np.testing.assert_array_equal(loaded.exposures, network.exposures)


@pytest.mark.parametrize(
    ("line", "column"), [("0,1,x", "weight"), ("0,1,inf", "weight"), ("a,1,0.01", "src")]
)
def test_read_bad_cell(tmp_path, line: str, column: str):
    population = make_population([0.1, 0.1], ib_assets=[0.05, 0.0], ib_liabilities=[0.0, 0.05])
    path = tmp_path / "member.csv"
    path.write_text(f"src,dst,weight\n{line}\n", encoding="utf-8")
    with pytest.raises(ParseError, match=f"row 1: cannot parse {column}"):
        read_weighted_network(path, population)


def test_read_bad_header(tmp_path):
    population = make_population([0.1, 0.1])
    path = tmp_path / "member.csv"
    path.write_text("from,to,w\n0,1,0.01\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="expected header src,dst,weight"):
        read_weighted_network(path, population)
