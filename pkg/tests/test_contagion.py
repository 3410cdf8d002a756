from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contagion_lab.contagion import (
    Algorithm,
    ImpactMatrix,
    ShockVector,
    build_impact_matrix,
    debtrank,
    default_cascade,
    run_algorithm,
    systemic_ranking,
    unit_default_impact,
    write_result,
)
from contagion_lab.errors import ConfigError, DomainError
from contagion_lab.topology import Topology
from contagion_lab.weights import WeightedNetwork
from tests.conftest import make_population

property_settings = settings(max_examples=200, deadline=None)


def brute_force(W, psi, v, cascade: bool):
    "Literal recursion with plain lists: U=0, D=1, I=2."
    n = len(psi)
    h = list(psi)
    s = [1 if x > 0 else 0 for x in psi]
    while 1 in s:
        h_next = []
        for i in range(n):
            total = h[i]
            for j in range(n):
                if s[j] == 1:
                    total += W[j][i] * h[j]
            h_next.append(min(1.0, total))
        s_next = []
        for i in range(n):
            if s[i] == 1:
                s_next.append(2)
            elif s[i] == 0 and (h_next[i] >= 1.0 - 1e-12 if cascade else h_next[i] > 0):
                s_next.append(1)
            else:
                s_next.append(s[i])
        h, s = h_next, s_next
    impact = sum(hi * vi for hi, vi in zip(h, v)) - sum(p * vi for p, vi in zip(psi, v))
    return h, impact


def random_case(rng: np.random.Generator, n: int, binary_shock: bool):
    W = rng.uniform(0, 1, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    W[rng.uniform(size=(n, n)) < 0.2] = 1.0
    np.fill_diagonal(W, 0.0)
    if binary_shock:
        psi = (rng.uniform(size=n) < 0.4).astype(float)
    else:
        psi = rng.uniform(size=n) * (rng.uniform(size=n) < 0.5)
    v = rng.uniform(1, 100, size=n)
    return W, psi, v


@pytest.mark.parametrize("algorithm", ["debtrank", "cascade"])
def test_matches_brute_force(algorithm: str):
    rng = np.random.default_rng(20240611)
    cascade = algorithm == "cascade"
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        W, psi, v = random_case(rng, n, binary_shock=cascade)
        result = run_algorithm(algorithm, ImpactMatrix(W), psi, v)
        h, impact = brute_force(W.tolist(), psi.tolist(), v.tolist(), cascade)
        np.testing.assert_allclose(result.final_h, h, rtol=0, atol=1e-12)
        assert abs(result.impact_currency - max(impact, 0.0)) <= 1e-12 * max(1.0, sum(v))


def test_two_node_example():
    W = np.array([[0.0, 0.4], [0.0, 0.0]])
    result = debtrank(ImpactMatrix(W), [0.5, 0.0], [1.0, 1.0])
    assert result.final_h[1] == pytest.approx(0.2)
    assert result.impact_currency == pytest.approx(0.2)
    assert result.impact_fraction == pytest.approx(0.1)
    assert result.defaulted == frozenset()


def test_debtrank_spreads_partial_distress():
    W = np.zeros((3, 3))
    W[0, 1] = 0.5
    W[1, 2] = 1.0
    values = [1.0, 1.0, 1.0]
    shock = ShockVector.on(3, 0)

    dr = debtrank(ImpactMatrix(W), shock, values, keep_history=True)
    np.testing.assert_allclose(dr.final_h, [1.0, 0.5, 0.5])
    assert dr.impact_fraction == pytest.approx(1 / 3)
    assert dr.defaulted == frozenset({0})
    assert dr.steps == 4
    assert len(dr.history) == 4

    dc = default_cascade(ImpactMatrix(W), shock, values)
    np.testing.assert_allclose(dc.final_h, [1.0, 0.5, 0.0])
    assert dc.impact_fraction == pytest.approx(1 / 6)


def test_cascade_chain_of_defaults():
    W = np.zeros((3, 3))
    W[0, 1] = 1.0
    W[1, 2] = 0.7
    result = default_cascade(ImpactMatrix(W), [1.0, 0.0, 0.0], [2.0, 1.0, 1.0])
    np.testing.assert_allclose(result.final_h, [1.0, 1.0, 0.7])
    assert result.defaulted == frozenset({0, 1})
    assert result.impact_currency == pytest.approx(1.7)
    assert result.impact_fraction == pytest.approx(1.7 / 4)


def test_no_shock():
    W = np.full((3, 3), 0.5)
    np.fill_diagonal(W, 0)
    result = debtrank(ImpactMatrix(W), [0, 0, 0], [1, 1, 1])
    assert result.steps == 1
    assert result.impact_currency == 0
    np.testing.assert_array_equal(result.final_h, [0, 0, 0])


class TestValidation:
    @pytest.mark.parametrize("psi", [[1.5, 0.0], [-0.1, 0.0], [float("nan"), 0.0]])
    def test_shock_out_of_range(self, psi):
        with pytest.raises(DomainError):
            debtrank(ImpactMatrix.empty(2), psi, [1.0, 1.0])

    def test_cascade_needs_binary_shock(self):
        with pytest.raises(DomainError, match="complete defaults"):
            default_cascade(ImpactMatrix.empty(2), [0.5, 0.0], [1.0, 1.0])

    def test_size_mismatch(self):
        with pytest.raises(ConfigError):
            debtrank(ImpactMatrix.empty(3), [1.0, 0.0], [1.0, 1.0])

    def test_shock_node_out_of_range(self):
        with pytest.raises(ConfigError):
            ShockVector.on(3, 5)

    @pytest.mark.parametrize(
        "entries",
        [np.array([[0.0, 1.2], [0.0, 0.0]]), np.array([[0.5, 0.0], [0.0, 0.0]])],
    )
    def test_bad_impact_matrix(self, entries):
        with pytest.raises(DomainError):
            ImpactMatrix(entries)

    def test_non_square(self):
        with pytest.raises(ConfigError):
            ImpactMatrix(np.zeros((2, 3)))

    def test_domain_error_is_value_error(self):
        with pytest.raises(ValueError):  # noqa: PT011
            ShockVector(np.array([2.0]))


def test_build_impact_matrix():
    population = make_population(
        caps=[0.04, 0.01, 1.0],
        ib_assets=[0.05, 0.05, 0.0],
        ib_liabilities=[0.0, 0.05, 0.05],
    )
    network = WeightedNetwork(
        population=population,
        topology=Topology(n=3, edges=((0, 1), (1, 2))),
        units={(0, 1): 2, (1, 2): 5},
    )
    W = build_impact_matrix(network)
    expected = np.zeros((3, 3))
    expected[1, 0] = 0.5
    expected[2, 1] = 1.0
    np.testing.assert_allclose(W.entries, expected)

    doubled = build_impact_matrix(network, population.with_market_caps([0.08, 0.02, 2.0]))
    assert doubled.entries[1, 0] == pytest.approx(0.25)
    assert doubled.entries[2, 1] == pytest.approx(1.0)


def test_unit_default_impact_and_ranking():
    W = np.zeros((3, 3))
    W[0, 1] = 0.5
    W[1, 2] = 1.0
    matrix = ImpactMatrix(W)
    values = [1.0, 1.0, 1.0]
    assert unit_default_impact(matrix, values, "debtrank", 0) == pytest.approx(1 / 3)
    assert unit_default_impact(matrix, values, Algorithm.CASCADE, 1) == pytest.approx(1 / 3)
    ranking = systemic_ranking(matrix, values, jobs=2)
    assert [node for node, _ in ranking] == [0, 1, 2]
    assert ranking[2][1] == 0


def test_ranking_ties_by_id():
    ranking = systemic_ranking(ImpactMatrix.empty(4), [1, 2, 3, 4])
    assert ranking == [(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)]


def test_write_result(tmp_path):
    W = np.zeros((2, 2))
    W[0, 1] = 1.0
    result = default_cascade(ImpactMatrix(W), [1.0, 0.0], [1.0, 3.0])
    path = tmp_path / "result.json"
    write_result(result, path)
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data == {
        "final_h": [1.0, 1.0],
        "impact_currency": 3.0,
        "impact_fraction": 0.75,
        "defaulted": [0, 1],
        "steps": 3,
    }


def _case(seed: int, n: int, cascade: bool = False):
    return random_case(np.random.default_rng(seed), n, binary_shock=cascade)


class TestProperties:
    @property_settings
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), algorithm=st.sampled_from(["debtrank", "cascade"]))
    def test_bounded_monotone_in_time(self, seed: int, n: int, algorithm: str):
        W, psi, v = _case(seed, n, cascade=algorithm == "cascade")
        if algorithm == "debtrank":
            result = debtrank(ImpactMatrix(W), psi, v, keep_history=True)
        else:
            result = default_cascade(ImpactMatrix(W), psi, v, keep_history=True)
        history = np.array(result.history)
        assert np.all(history >= 0)
        assert np.all(history <= 1)
        assert np.all(np.diff(history, axis=0) >= 0)
        assert result.steps <= n + 1
        assert 0 <= result.impact_fraction <= 1

    @property_settings
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), bump=st.floats(0, 1))
    def test_debtrank_monotone_in_shock(self, seed: int, n: int, bump: float):
        W, psi, v = _case(seed, n)
        larger = np.where(psi > 0, np.minimum(1.0, psi + bump), 0.0)
        low = debtrank(ImpactMatrix(W), psi, v)
        high = debtrank(ImpactMatrix(W), larger, v)
        assert np.all(high.final_h >= low.final_h - 1e-12)

    @property_settings
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), scale=st.floats(1, 10))
    def test_debtrank_monotone_in_weights(self, seed: int, n: int, scale: float):
        W, psi, v = _case(seed, n)
        larger = np.minimum(1.0, W * scale)
        low = debtrank(ImpactMatrix(W), psi, v)
        high = debtrank(ImpactMatrix(larger), psi, v)
        assert np.all(high.final_h >= low.final_h - 1e-12)

    @property_settings
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), extra=st.floats(0, 1))
    def test_cascade_monotone_in_weights(self, seed: int, n: int, extra: float):
        W, psi, v = _case(seed, n, cascade=True)
        larger = np.minimum(1.0, W + extra)
        np.fill_diagonal(larger, 0.0)
        low = default_cascade(ImpactMatrix(W), psi, v)
        high = default_cascade(ImpactMatrix(larger), psi, v)
        assert np.all(high.final_h >= low.final_h - 1e-12)

    @property_settings
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), c=st.floats(1e-3, 1e3))
    def test_value_scale_invariance(self, seed: int, n: int, c: float):
        W, psi, v = _case(seed, n)
        base = debtrank(ImpactMatrix(W), psi, v)
        scaled = debtrank(ImpactMatrix(W), psi, v * c)
        assert scaled.impact_fraction == pytest.approx(base.impact_fraction, abs=1e-12)
        np.testing.assert_array_equal(scaled.final_h, base.final_h)
