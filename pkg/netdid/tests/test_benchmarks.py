"""
Unit tests for the exposure-mapping and standard DID comparators.
"""
import numpy as np
import pytest

from netdid.app.benchmarks import (
    _merge_degenerate_levels,
    build_exposure,
    canonical_ipw_did,
    canonical_twfe,
    dr_did_benchmark,
    modified_twfe,
    ols_coefficient_influence,
    xu_estimator,
)
from netdid.app.estimators import EstimationError, build_panel
from netdid.app.graph import build_network_from_edges, treated_neighbor_counts
from netdid.app.numerics import InvalidInputError, replication_rng


def random_panel(seed, n=120, dy=None, edges=True):
    rng = replication_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, min(n, i + 4)) if rng.uniform() < 0.4] if edges else []
    net = build_network_from_edges(n, pairs)
    z = rng.standard_normal(n)
    D = (rng.uniform(size=n) < 0.5).astype(int)
    D[:2] = (0, 1)
    Y1 = rng.standard_normal(n)
    delta = dy(z, D, net) if dy is not None else rng.standard_normal(n)
    return build_panel(z, D, Y1, Y1 + delta, net, L=3, K=1)


def test_exposure_levels():
    """S = (0, 1, 2, 5): oracle (0, 1, 2, 3) and fm (0, 0, 1, 1)."""
    S = np.array([0, 1, 2, 5])
    assert list(build_exposure("oracle", S).values) == [0, 1, 2, 3]
    assert list(build_exposure("fm", S).values) == [0, 0, 1, 1]


def test_misspecified_mapping_without_flips_is_oracle():
    """Flip rate 0 leaves the oracle levels untouched."""
    S = np.arange(12) % 5
    mapping = build_exposure("mo", S, rng=replication_rng(1), flip_rate=0.0)
    assert np.array_equal(mapping.values, build_exposure("oracle", S).values)


def test_misspecified_mapping_flips_exact_share():
    """Exactly round(0.3 n) units move, each to a different valid level."""
    S = replication_rng(2).integers(0, 6, size=100)
    oracle = build_exposure("oracle", S).values
    mapping = build_exposure("mo", S, rng=replication_rng(3))
    assert mapping.kind == "mo"
    assert np.sum(mapping.values == oracle) == 70
    assert set(np.unique(mapping.values)) <= {0, 1, 2, 3}


def test_misspecified_mapping_reproducible():
    """The same generator state reproduces the same flips."""
    S = np.arange(50) % 4
    a = build_exposure("mo", S, rng=replication_rng(9)).values
    b = build_exposure("mo", S, rng=replication_rng(9)).values
    assert np.array_equal(a, b)


def test_misspecified_mapping_from_seed():
    """A seed alone fixes the flips and is kept on the mapping."""
    S = np.arange(50) % 4
    first = build_exposure("mo", S, seed=14)
    second = build_exposure("mo", S, seed=14)
    assert first.rng_seed == 14
    assert np.array_equal(first.values, second.values)
    assert build_exposure("mo", S, rng=replication_rng(14), seed=14).rng_seed is None


def test_exposure_input_validation():
    """Negative counts, unknown kinds and mis-sized custom levels are rejected."""
    with pytest.raises(InvalidInputError):
        build_exposure("oracle", np.array([0, -1]))
    with pytest.raises(InvalidInputError):
        build_exposure("nearest", np.array([0, 1]))
    with pytest.raises(InvalidInputError):
        build_exposure("custom", np.array([0, 1]), values=np.array([1]))
    with pytest.raises(InvalidInputError):
        build_exposure("mo", np.array([0, 1]), flip_rate=1.5)


def test_degenerate_level_is_merged():
    """A level holding only treated units folds into its nearest neighbor."""
    levels, merged = _merge_degenerate_levels(np.array([0, 0, 1, 1, 2]), np.array([0, 1, 0, 1, 1]))
    assert merged
    assert list(levels) == [0, 0, 1, 1, 1]


def test_constant_mapping_reduces_to_canonical_ipw():
    """A single exposure level adds nothing to the propensity model."""
    data = random_panel(4)
    mapping = build_exposure("custom", np.zeros(data.n, dtype=int), values=np.zeros(data.n, dtype=int))
    stratified = xu_estimator(data, mapping, method="IPW")
    canonical = canonical_ipw_did(data)
    assert stratified.point == pytest.approx(canonical.point, abs=1e-12)
    assert stratified.label == "exposure_ipw_custom"
    assert canonical.label == "canonical_ipw"


def test_exposure_estimator_labels_and_shape():
    """Labels follow exposure_<method>_<kind>; influence covers every unit."""
    data = random_panel(5)
    S = treated_neighbor_counts(data.network, data.D, 1)
    report = xu_estimator(data, build_exposure("oracle", S), method="DR")
    assert report.label == "exposure_dr_oracle"
    assert report.method == "DR"
    assert report.influence.shape == (data.n,)
    assert report.point == pytest.approx(report.influence.mean())


def test_exposure_estimator_unknown_method():
    """Only IPW and DR are available."""
    data = random_panel(6)
    with pytest.raises(InvalidInputError):
        xu_estimator(data, build_exposure("fm", np.zeros(data.n, dtype=int)), method="OLS")


def test_twfe_recovers_pure_treatment_effect():
    """dY = 2 D gives a TWFE coefficient of 2."""
    data = random_panel(7, dy=lambda z, D, net: 2.0 * D)
    report = canonical_twfe(data)
    assert report.point == pytest.approx(2.0, abs=1e-9)
    assert report.method == "OLS"


def test_twfe_invariant_to_constant_shift():
    """A common trend does not move the coefficient."""
    data = random_panel(8)
    base = canonical_twfe(data).point
    moved = build_panel(data.z, data.D, data.Y1, data.Y2 + 5.0, data.network, L=3, K=1)
    assert canonical_twfe(moved).point == pytest.approx(base, abs=1e-9)


def test_modified_twfe_equals_canonical_without_exposure():
    """No edges: the exposure column is all zero, dropped, and nothing changes."""
    data = random_panel(9, edges=False)
    modified = modified_twfe(data)
    assert modified.diagnostics["exposure_dropped"]
    assert modified.point == pytest.approx(canonical_twfe(data).point, abs=1e-12)


def test_modified_twfe_separates_spillover():
    """dY = 0.8 D + 0.5 1{S >= 1} gives a treatment coefficient of 0.8."""

    def trend(z, D, net):
        return 0.8 * D + 0.5 * (treated_neighbor_counts(net, D, 1) >= 1)

    data = random_panel(10, dy=trend)
    report = modified_twfe(data)
    assert not report.diagnostics["exposure_dropped"]
    assert report.point == pytest.approx(0.8, abs=1e-9)


def test_dr_did_constant_trend_is_zero():
    """A constant dY leaves nothing to attribute to treatment."""
    data = random_panel(11, dy=lambda z, D, net: np.full(z.shape, 1.5))
    assert dr_did_benchmark(data).point == pytest.approx(0.0, abs=1e-8)


def test_dr_did_recovers_linear_effect():
    """dY = 1 + 0.5 z + 2 D: the outcome model is exact and the estimate is 2."""
    data = random_panel(12, dy=lambda z, D, net: 1.0 + 0.5 * z + 2.0 * D)
    report = dr_did_benchmark(data)
    assert report.label == "dr_did"
    assert report.point == pytest.approx(2.0, abs=1e-4)


def test_ols_influence_averages_to_coefficient():
    """Mean of the linearization is the coefficient itself."""
    rng = replication_rng(13)
    X = np.column_stack((np.ones(60), rng.standard_normal((60, 2))))
    y = rng.standard_normal(60)
    beta, phi = ols_coefficient_influence(X, y, 1)
    assert phi.mean() == pytest.approx(beta, abs=1e-9)


def test_benchmarks_need_overlap():
    """All-control samples cannot identify any effect."""
    net = build_network_from_edges(4, [(0, 1)])
    data = build_panel(np.zeros(4), np.zeros(4), np.zeros(4), np.ones(4), net, L=1, K=1)
    for estimator in (canonical_twfe, modified_twfe, canonical_ipw_did, dr_did_benchmark):
        with pytest.raises(EstimationError):
            estimator(data)
