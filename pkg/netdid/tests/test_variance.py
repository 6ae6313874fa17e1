"""
Unit tests for the network-HAC variance and Wald intervals.
"""
import itertools
import math

import numpy as np
import pytest

from netdid.app.estimators import build_panel, estimate_all
from netdid.app.graph import build_network_from_edges, distance_shells
from netdid.app.models import HacConfig, VarianceReport
from netdid.app.numerics import InvalidInputError, replication_rng
from netdid.app.variance import attach_variance, coverage_indicator, hac_variance, kernel_weight, wald_quantile


def brute_force_hac(net, phi, kernel, bandwidth):
    n = len(phi)
    centered = np.asarray(phi, dtype=float) - np.mean(phi)
    total = 0.0
    for s in range(int(math.floor(bandwidth)) + 1):
        omega = 0.0
        for i in range(n):
            for j in range(n):
                if net.dist[i, j] == s:
                    omega += centered[i] * centered[j]
        weight = 1.0 if s == 0 else kernel_weight(kernel, s / bandwidth)
        total += weight * omega / n
    return total


def path3():
    return build_network_from_edges(3, [(0, 1), (1, 2)])


def test_kernel_weights():
    """Bartlett and Parzen values at reference points."""
    assert kernel_weight("bartlett", 0.0) == 1.0
    assert kernel_weight("bartlett", 0.5) == 0.5
    assert kernel_weight("bartlett", 1.2) == 0.0
    assert kernel_weight("parzen", 0.0) == 1.0
    assert kernel_weight("parzen", 0.5) == pytest.approx(0.25)
    assert kernel_weight("parzen", 0.75) == pytest.approx(0.03125)
    assert kernel_weight("parzen", 1.5) == 0.0


def test_kernel_rejects_negative_argument():
    """Kernel arguments are distances, never negative."""
    with pytest.raises(InvalidInputError):
        kernel_weight("bartlett", -0.1)


def test_wald_quantile():
    """alpha = 0.05 uses z = 1.959964."""
    assert wald_quantile(0.05) == pytest.approx(1.959964, abs=1e-6)


def test_zero_bandwidth_is_centered_second_moment():
    """b_n = 0 keeps only the s = 0 shell."""
    phi = np.array([1.0, 2.0, 4.0])
    report = hac_variance(phi, distance_shells(path3(), 2), HacConfig(bandwidth=0.0), 0.05, point=phi.mean())
    assert report.v_hat == pytest.approx(np.mean((phi - phi.mean()) ** 2), abs=1e-12)
    assert report.s_max_used == 0


def test_three_node_path_by_hand():
    """phi = (1, 0, -1), Bartlett, b_n = 2: V = 2/3."""
    report = hac_variance(np.array([1.0, 0.0, -1.0]), distance_shells(path3(), 2), HacConfig(bandwidth=2.0), 0.05, point=0.0)
    assert report.autocovariances[0] == pytest.approx(2 / 3, abs=1e-12)
    assert report.autocovariances[1] == pytest.approx(0.0, abs=1e-12)
    assert report.autocovariances[2] == pytest.approx(-2 / 3, abs=1e-12)
    assert report.v_hat == pytest.approx(2 / 3, abs=1e-12)


def test_constant_influence_has_zero_width_interval():
    """Constant phi has zero variance."""
    report = hac_variance(np.full(3, 0.7), distance_shells(path3(), 2), HacConfig(), 0.05, point=0.7)
    assert report.v_hat == 0.0
    assert report.ci == (0.7, 0.7)
    longer = hac_variance(np.full(10, 0.1), distance_shells(build_network_from_edges(10, [(0, 1)]), 2), HacConfig(), 0.05, point=0.1)
    assert longer.v_hat == 0.0
    assert longer.se == 0.0


def test_disconnected_network_ignores_bandwidth():
    """No shells beyond 0: every bandwidth gives the s = 0 term."""
    net = build_network_from_edges(4, [])
    phi = np.array([0.3, -1.0, 2.0, 0.1])
    shells = distance_shells(net, 5)
    base = hac_variance(phi, shells, HacConfig(bandwidth=0.0), 0.05, point=0.0).v_hat
    for bandwidth in (1.0, 2.5, 5.0):
        assert hac_variance(phi, shells, HacConfig(bandwidth=bandwidth), 0.05, point=0.0).v_hat == pytest.approx(base, abs=1e-12)


def test_shift_invariance():
    """Adding a constant to phi leaves V unchanged."""
    phi = replication_rng(4).standard_normal(3)
    shells = distance_shells(path3(), 2)
    a = hac_variance(phi, shells, HacConfig(bandwidth=2.0), 0.05, point=0.0).v_hat
    b = hac_variance(phi + 5.0, shells, HacConfig(bandwidth=2.0), 0.05, point=0.0).v_hat
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_matches_brute_force(n):
    """Shell sums agree with an explicit double loop over unit pairs."""
    rng = replication_rng(50 + n)
    possible = list(itertools.combinations(range(n), 2))
    for _ in range(25):
        edges = [e for e in possible if rng.uniform() < 0.5]
        net = build_network_from_edges(n, edges)
        shells = distance_shells(net, 3)
        phi = rng.standard_normal(n)
        for kernel, bandwidth in itertools.product(["bartlett", "parzen"], [0.0, 1.0, 1.5, 2.0, 3.0]):
            report = hac_variance(phi, shells, HacConfig(kernel=kernel, bandwidth=bandwidth), 0.05, point=0.0)
            expected = brute_force_hac(net, phi, kernel, bandwidth)
            if expected >= 0:
                assert report.v_hat == pytest.approx(expected, abs=1e-12)
                assert not report.floored
            else:
                assert report.floored


def test_negative_variance_is_floored():
    """Alternating signs across K_{3,3} drive V below zero; it is floored."""
    net = build_network_from_edges(6, [(i, j) for i in range(3) for j in range(3, 6)])
    phi = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    report = hac_variance(phi, distance_shells(net, 2), HacConfig(bandwidth=2.0), 0.05, point=0.0)
    assert report.floored
    assert report.v_hat == pytest.approx(report.autocovariances[0] * 1e-6)
    assert report.se > 0


def test_bartlett_monotone_for_nonnegative_autocovariances():
    """Smoothly varying phi on a path: the shells used have non-negative
    autocovariances and V grows with the Bartlett bandwidth."""
    net = build_network_from_edges(6, [(i, i + 1) for i in range(5)])
    phi = np.array([4.0, 3.0, 1.0, -1.0, -3.0, -4.0])
    shells = distance_shells(net, 2)
    reports = [hac_variance(phi, shells, HacConfig(bandwidth=b), 0.05, point=0.0) for b in (0.0, 1.0, 1.5, 2.0, 2.5, 2.9)]
    assert all(value >= 0 for value in reports[-1].autocovariances.values())
    values = [r.v_hat for r in reports]
    assert values == sorted(values)


def test_bandwidth_rule_uses_multiple_of_range():
    """Without an explicit bandwidth, b_n = c * K."""
    assert HacConfig().resolve_bandwidth(1) == 2.0
    assert HacConfig(bandwidth_multiplier=1.5).resolve_bandwidth(2) == 3.0
    assert HacConfig(bandwidth=0.5).resolve_bandwidth(3) == 0.5


def test_bandwidth_beyond_shells_rejected():
    """Shells must cover floor(b_n)."""
    with pytest.raises(InvalidInputError):
        hac_variance(np.zeros(3), distance_shells(path3(), 1), HacConfig(bandwidth=2.0), 0.05, point=0.0)


def test_subset_units():
    """With a unit subset only those units enter the shell sums."""
    phi = np.array([1.0, -1.0])
    report = hac_variance(phi, distance_shells(path3(), 2), HacConfig(bandwidth=2.0), 0.05, point=0.0, units=np.array([0, 2]))
    # units 0 and 2 are two hops apart, where the Bartlett weight is 0
    assert report.autocovariances[1] == 0.0
    assert report.autocovariances[2] == pytest.approx(-1.0)
    assert report.v_hat == pytest.approx(1.0)
    assert report.n == 2


def test_interval_and_coverage():
    """CI is point +- z * sqrt(V / n); coverage is a closed-interval check."""
    phi = np.array([1.0, 2.0, 4.0])
    report = hac_variance(phi, distance_shells(path3(), 2), HacConfig(bandwidth=0.0), 0.05, point=2.0)
    half = 1.959964 * math.sqrt(report.v_hat / 3)
    assert report.ci[0] == pytest.approx(2.0 - half, abs=1e-5)
    assert report.ci[1] == pytest.approx(2.0 + half, abs=1e-5)

    interval = VarianceReport(v_hat=1, autocovariances={}, s_max_used=0, bandwidth=0, kernel="bartlett", alpha=0.05, ci=(0.0, 1.0), se=1, n=1)
    assert coverage_indicator(interval, 0.5)
    assert coverage_indicator(interval, 1.0)
    assert not coverage_indicator(interval, 1.2)


def test_attach_variance_to_estimates():
    """Variance is attached to estimator reports over their own unit sets."""
    rng = replication_rng(31)
    n = 80
    net = build_network_from_edges(n, [(i, i + 1) for i in range(n - 1)] + [(i, i + 2) for i in range(0, n - 2, 3)])
    data = build_panel(rng.standard_normal(n), rng.integers(0, 2, size=n), rng.standard_normal(n), rng.standard_normal(n), net, L=3, K=1)
    shells = distance_shells(net, 2)
    for report in estimate_all(data).values():
        with_variance = attach_variance(report, shells, HacConfig(), 0.1, K=1)
        assert with_variance.variance.n == report.units.shape[0]
        assert with_variance.variance.alpha == 0.1
        lo, hi = with_variance.variance.ci
        assert lo <= report.point <= hi
