import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatclt import stats
from heatclt.errors import DomainError, InsufficientData

# max_x |phi(x - 0.5) - phi(x)| by brute-force search on a 1e-6 grid over [-10, 10]
SUP_SHIFT_HALF = 0.11850127600107142


def test_variance_of_two_points():
    s2, _ = stats.estimate_variance(stats.EnsembleStats.from_samples([1.0, -1.0]))
    assert s2 == pytest.approx(2.0)


def test_variance_of_constant_samples():
    s2, se = stats.estimate_variance(np.full(10, 3.3))
    assert s2 == pytest.approx(0.0, abs=1e-24)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_variance_needs_two_samples():
    with pytest.raises(InsufficientData):
        stats.estimate_variance([1.0])


def test_variance_standard_error_is_calibrated():
    g = np.random.default_rng(1)
    ests, ses = [], []
    for _ in range(400):
        s2, se = stats.estimate_variance(g.standard_normal(200))
        ests.append(s2)
        ses.append(se)
    assert np.std(ests) == pytest.approx(np.mean(ses), rel=0.1)


@settings(max_examples=40, deadline=None)
@given(data=st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60), cut1=st.integers(0, 60),
       cut2=st.integers(0, 60))
def test_merge_matches_single_pass_and_is_associative(data, cut1, cut2):
    x = np.array(data)
    i, j = sorted((min(cut1, x.size), min(cut2, x.size)))
    a, b, c = (stats.EnsembleStats.from_samples(p) for p in (x[:i], x[i:j], x[j:]))
    whole = stats.EnsembleStats.from_samples(x)
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    scale = 1 + np.max(np.abs(x)) ** 4 * x.size
    for m in (left, right):
        assert m.n == whole.n
        assert m.mean == pytest.approx(whole.mean, abs=1e-9 * (1 + np.max(np.abs(x))))
        assert m.M2 == pytest.approx(whole.M2, rel=1e-9, abs=1e-9 * scale ** 0.5)
        assert m.M4 == pytest.approx(whole.M4, rel=1e-7, abs=1e-9 * scale)
        assert list(m.samples) == list(x)


def test_merge_sums_diagnostics():
    a = stats.EnsembleStats.from_samples([1.0, 2.0], diverged=1)
    b = stats.EnsembleStats.from_samples([3.0], diverged=2)
    assert a.merge(b).diagnostics["diverged"] == 3


def test_kde_of_many_normals_is_close_to_phi():
    g = np.random.default_rng(5)
    est = stats.kde_density(g.standard_normal(10 ** 6))
    assert stats.sup_distance(est) < 0.01


def test_kde_of_ten_thousand_normals():
    g = np.random.default_rng(6)
    x = g.standard_normal(10 ** 4)
    est = stats.kde_density(x)
    assert stats.sup_distance(est) < 0.05
    assert est.mass() == pytest.approx(1.0, abs=1e-3)
    assert np.all(est.values >= 0)
    assert est.bandwidth == pytest.approx(1.06 * np.std(x, ddof=1) * 1e4 ** -0.2)


def test_kde_errors():
    with pytest.raises(DomainError):
        stats.kde_density(np.zeros(500))
    with pytest.raises(InsufficientData):
        stats.kde_density(np.ones(99))


def test_distances_of_phi_are_zero():
    est = stats.DensityEstimate.from_function(stats.normal_pdf)
    assert stats.sup_distance(est) == 0.0
    assert stats.tv_distance(est) == 0.0


def test_sup_distance_of_shifted_normal():
    est = stats.DensityEstimate.from_function(lambda x: stats.normal_pdf(x - 0.5))
    assert stats.sup_distance(est) == pytest.approx(SUP_SHIFT_HALF, abs=1e-5)


def test_tv_distance_of_shifted_normal():
    est = stats.DensityEstimate.from_function(lambda x: stats.normal_pdf(x - 1.0))
    assert stats.tv_distance(est) == pytest.approx(0.38292, abs=1e-4)
    assert stats.normal_tv_shift(1.0) == pytest.approx(0.3829249225480262, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(-3, 3), sd=st.floats(0.3, 3))
def test_tv_distance_bounded(mu, sd):
    est = stats.DensityEstimate.from_function(lambda x: stats.normal_pdf((x - mu) / sd) / sd)
    assert 0.0 <= stats.tv_distance(est) <= 1.0
    assert stats.sup_distance(est) >= 0.0


def test_normalize():
    g = np.random.default_rng(2)
    x = 3.0 * g.standard_normal(50_000)
    f = stats.normalize(x)
    assert np.var(f, ddof=1) == pytest.approx(1.0)
    assert abs(np.mean(f)) < 3 / math.sqrt(x.size)
    assert np.allclose(stats.normalize(x, 3.0), x / 3.0)
    with pytest.raises(DomainError):
        stats.normalize(x, 0.0)


def test_ks_test_and_critical_value():
    g = np.random.default_rng(3)
    stat, p = stats.ks_test(g.standard_normal(5000))
    assert p > 0.01
    assert stat < stats.ks_critical(5000, 0.01)
    stat, p = stats.ks_test(g.standard_normal(5000) + 0.2)
    assert p < 0.01


def test_fit_rate_exact_power_law():
    N = np.array([16, 32, 64, 128, 256, 512], dtype=float)
    fit = stats.fit_rate(N, 7 * N ** -0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert stats.fit_rate(N, np.full(N.size, 0.3)).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_log_corrected_model():
    N = 2.0 ** np.arange(4, 13)
    d = np.sqrt(np.log(N)) / np.sqrt(N)
    fit = stats.fit_rate(N, d, case=3)
    assert -0.5 < fit.slope < -0.35
    assert fit.log_corrected is not None


def test_fit_rate_drops_nonpositive_and_needs_three_points():
    N = np.array([16, 32, 64, 128.0])
    with pytest.warns(RuntimeWarning):
        fit = stats.fit_rate(N, [0.2, 0.0, 0.1, 0.07])
    assert fit.N.size == 3
    with pytest.raises(InsufficientData):
        with pytest.warns(RuntimeWarning):
            stats.fit_rate(N, [0.2, -1.0, 0.0, 0.1])


def test_fit_rate_drops_pre_asymptotic_point():
    N = np.array([16, 32, 64, 128, 256, 512.0])
    d = N ** -0.5
    d[0] = 5.0
    fit = stats.fit_rate(N, d)
    assert fit.dropped_smallest
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


def test_nonincreasing_within():
    assert stats.nonincreasing_within([0.1, 0.08, 0.085, 0.05], [0.005] * 4)
    assert not stats.nonincreasing_within([0.05, 0.08], [0.005] * 2)


def test_trimmed_inverse_moment():
    x = np.array([0.5, 1.0, 2.0, -1.0])
    assert stats.trimmed_inverse_moment(x, trim=0.0) == pytest.approx((4 + 1 + 0.25) / 3)
    with pytest.raises(InsufficientData):
        stats.trimmed_inverse_moment([-1.0, 0.0])
