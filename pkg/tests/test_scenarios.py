import json

import numpy as np
import pytest

from msekit.patterns import ModelSpec, pattern_matrix
from msekit.scenarios import (
    DSE_SCENARIOS,
    MSE_SCENARIOS,
    CellProbabilities,
    ScenarioSpec,
    builtin_bundle,
    load_scenarios,
    replication_rng,
    sample_table,
    solve_cell_probabilities,
)


def _full_bits(k):
    return np.vstack([pattern_matrix(k), np.zeros((1, k))])


def _conditional_odds_ratio(q, k, pair):
    """Direct-summation oracle: OR of a pair at every level of the others."""
    bits = _full_bits(k).astype(int)
    i, j = pair
    others = [s for s in range(k) if s not in pair]
    ratios = []
    for level in range(2 ** len(others)):
        fixed = {s: (level >> idx) & 1 for idx, s in enumerate(others)}
        sel = np.ones(len(bits), dtype=bool)
        for s, v in fixed.items():
            sel &= bits[:, s] == v
        cells = {}
        for row, qv in zip(bits[sel], q[sel]):
            cells[(row[i], row[j])] = qv
        ratios.append((cells[(1, 1)] * cells[(0, 0)]) / (cells[(1, 0)] * cells[(0, 1)]))
    return ratios


def test_independence_product_form_k2():
    spec = ScenarioSpec(id="T", N=100, k=2, p=(0.5, 0.2))
    q = solve_cell_probabilities(spec).q
    # order 11, 10, 01, 00
    assert np.allclose(q, [0.1, 0.4, 0.1, 0.4], atol=1e-12)


def test_scenario1_unobserved_mass():
    q = solve_cell_probabilities(MSE_SCENARIOS[0])
    assert q.q_unobserved == pytest.approx(0.21, abs=1e-12)
    # independence: solved table equals the product form exactly
    p = MSE_SCENARIOS[0].p
    bits = _full_bits(3)
    expected = np.prod(np.where(bits == 1, p, np.subtract(1, p)), axis=1)
    assert np.allclose(q.q, expected, atol=1e-12)


@pytest.mark.parametrize("spec", MSE_SCENARIOS, ids=lambda s: s.id)
def test_all_scenarios_match_marginals_and_odds_ratios(spec):
    q = solve_cell_probabilities(spec)
    bits = _full_bits(spec.k)
    assert q.q.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(q.q > 0)
    marginals = bits.T @ q.q
    assert np.abs(marginals - np.asarray(spec.p)).max() < 1e-9
    theta = dict(spec.theta)
    from itertools import combinations

    for pair in combinations(range(spec.k), 2):
        expected = theta.get(pair, 1.0)
        for ratio in _conditional_odds_ratio(q.q, spec.k, pair):
            assert ratio == pytest.approx(expected, rel=1e-9)


def test_dse_scenarios_are_independent_two_source():
    for spec in DSE_SCENARIOS:
        assert spec.k == 2
        assert spec.generating_model == ModelSpec.independence(2)


def test_generating_model_ignores_unit_odds_ratios():
    spec = ScenarioSpec(id="T", N=50, k=3, p=(0.3, 0.3, 0.3), theta=(((0, 1), 1.0), ((1, 2), 2.0)))
    assert spec.generating_model == ModelSpec.from_pairs(3, [(1, 2)])


def test_extreme_odds_ratios_still_solve():
    spec = ScenarioSpec(id="T", N=100, k=3, p=(0.5, 0.4, 0.3), theta=(((0, 1), 25.0), ((1, 2), 0.04)))
    q = solve_cell_probabilities(spec)
    bits = _full_bits(3)
    assert np.abs(bits.T @ q.q - np.asarray(spec.p)).max() < 1e-9


def test_point_mass_sampling():
    q = CellProbabilities(2, np.array([1.0, 0.0, 0.0, 0.0]))
    table = sample_table(q, 50, replication_rng(0, "T", 0))
    assert list(table.values) == [50.0, 0.0, 0.0]


def test_observed_total_never_exceeds_population():
    q = solve_cell_probabilities(MSE_SCENARIOS[0])
    for rep in range(50):
        t = sample_table(q, 100, replication_rng(0, "S1", rep))
        assert t.observed_total() <= 100


def test_sampling_reproducible_and_stream_keyed():
    q = solve_cell_probabilities(MSE_SCENARIOS[0])
    a = sample_table(q, 100, replication_rng(5, "S1", 3))
    b = sample_table(q, 100, replication_rng(5, "S1", 3))
    assert np.array_equal(a.values, b.values)
    c = sample_table(q, 100, replication_rng(5, "S1", 4))
    d = sample_table(q, 100, replication_rng(6, "S1", 3))
    e = sample_table(q, 100, replication_rng(5, "S2", 3))
    assert any(not np.array_equal(a.values, other.values) for other in (c, d, e))


def test_mean_observed_total_tracks_expectation():
    spec = MSE_SCENARIOS[0]
    q = solve_cell_probabilities(spec)
    draws = 20_000
    totals = np.empty(draws)
    for rep in range(draws):
        totals[rep] = sample_table(q, spec.N, replication_rng(1, spec.id, rep)).observed_total()
    expected = spec.N * (1.0 - q.q_unobserved)
    assert expected == pytest.approx(79.0, abs=1e-9)
    assert totals.mean() == pytest.approx(expected, abs=0.1)
    se = totals.std(ddof=1) / np.sqrt(draws)
    assert abs(totals.mean() - expected) < 3 * se + 1e-9


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=0, k=2, p=(0.5, 0.5))
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=10, k=2, p=(0.5,))
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=10, k=2, p=(0.5, 1.0))
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=10, k=2, p=(0.5, 0.5), theta=(((0, 1), -1.0),))
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=10, k=2, p=(0.5, 0.5), theta=(((0, 2), 1.5),))
    with pytest.raises(ValueError):
        ScenarioSpec(id="T", N=10, k=3, p=(0.5, 0.5, 0.5), theta=(((0, 1), 1.5), ((1, 0), 2.0)))


def test_json_round_trip(tmp_path):
    spec = ScenarioSpec(id="S1", N=100, k=3, p=(0.5, 0.4, 0.3), theta=(((0, 1), 1.5),))
    data = spec.to_json_dict()
    assert data == {"id": "S1", "N": 100, "k": 3, "p": [0.5, 0.4, 0.3], "theta": {"AB": 1.5}}
    assert ScenarioSpec.from_json_dict(data) == spec

    path = tmp_path / "scenarios.json"
    path.write_text(json.dumps([data, MSE_SCENARIOS[1].to_json_dict()]))
    loaded = load_scenarios(str(path))
    assert loaded == (spec, MSE_SCENARIOS[1])

    path_single = tmp_path / "one.json"
    path_single.write_text(json.dumps(data))
    assert load_scenarios(str(path_single)) == (spec,)


def test_builtin_bundles():
    assert len(builtin_bundle("dse")) == 7
    assert len(builtin_bundle("mse")) == 14
    assert load_scenarios("builtin:dse") == DSE_SCENARIOS
    with pytest.raises(ValueError):
        builtin_bundle("nope")
    # expected mean observed totals for the two-source grid
    for spec, expected_mean_n in zip(DSE_SCENARIOS, (60.0, 54.5, 245.0, 200.0, 3700.0, 3625.0, 27.75)):
        q = solve_cell_probabilities(spec)
        assert spec.N * (1 - q.q_unobserved) == pytest.approx(expected_mean_n, abs=0.01)


def test_table2_grid_shape():
    by_id = {s.id: s for s in MSE_SCENARIOS}
    assert by_id["S1"].generating_model == ModelSpec.independence(3)
    assert by_id["S4"].generating_model == ModelSpec.from_pairs(3, [(0, 1)])
    assert by_id["S7"].generating_model == ModelSpec.from_pairs(3, [(0, 1), (1, 2)])
    assert by_id["S10"].generating_model == ModelSpec.saturated(3)
    assert by_id["S13"].k == 4 and by_id["S13"].generating_model == ModelSpec.independence(4)
    assert by_id["S14"].generating_model == ModelSpec.from_pairs(4, [(0, 1), (0, 3), (1, 2), (2, 3)])
    assert by_id["S13"].N == 20_000
