import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson, trapezoid

from heatclt import kernels
from heatclt.errors import DomainError

# g_alpha values from scipy.stats.levy_stable (S1, scale 1) and direct
# Fourier-cosine quadrature, computed once outside the package.
G15_AT = {0.0: 0.2873527514521645, 1.0: 0.20203815960784044, 3.0: 0.03150942}
G125_AT_2_5 = 0.04775873618318588


def test_gaussian_density_at_zero():
    assert kernels.eval_stable_density(2.0, 0.0) == pytest.approx((4 * math.pi) ** -0.5, abs=1e-12)


def test_cauchy_density_at_zero():
    assert kernels.eval_stable_density(1.0, 0.0) == pytest.approx(1 / math.pi, abs=1e-12)


@pytest.mark.parametrize("x", sorted(G15_AT))
def test_stable_density_alpha_1_5_matches_reference(x):
    ref = G15_AT[x]
    assert kernels.eval_stable_density(1.5, x) == pytest.approx(ref, abs=1e-8)
    assert kernels.eval_stable_density(1.5, x, method="table") == pytest.approx(ref, abs=1e-6)


def test_stable_density_alpha_1_5_at_zero_is_gamma_formula():
    assert kernels.eval_stable_density(1.5, 0.0) == pytest.approx(math.gamma(5 / 3) / math.pi, abs=1e-9)


def test_stable_density_alpha_1_25():
    assert kernels.eval_stable_density(1.25, 2.5) == pytest.approx(G125_AT_2_5, abs=1e-8)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_quadrature_matches_closed_forms(alpha):
    xs = np.linspace(0, 6, 13)
    num = kernels.eval_stable_density(alpha, xs, method="quad")
    exact = kernels.eval_stable_density(alpha, xs)
    assert np.max(np.abs(num - exact)) < 1e-8


@pytest.mark.parametrize("alpha", [0.0, -1.0, 2.5, float("nan")])
def test_alpha_out_of_range(alpha):
    with pytest.raises(DomainError):
        kernels.eval_stable_density(alpha, 0.0)


def test_green_examples():
    assert kernels.eval_green(2.0, 0.5, 0.0) == pytest.approx((4 * math.pi * 0.5) ** -0.5, abs=1e-12)
    assert kernels.eval_green(1.0, 2.0, 1.0) == pytest.approx(2 / (5 * math.pi), abs=1e-12)
    assert kernels.eval_green(1.5, 3.0, 0.0) == pytest.approx(0.13814479410284528, abs=1e-9)


def test_green_alpha2_is_gaussian_with_variance_2t():
    x = np.linspace(-5, 5, 21)
    t = 0.7
    ref = np.exp(-x ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t)
    assert np.allclose(kernels.eval_green(2.0, t, x), ref, atol=1e-14)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_green_rejects_nonpositive_time(t):
    with pytest.raises(DomainError):
        kernels.eval_green(1.5, t, 0.0)


def test_heat_examples():
    assert kernels.eval_heat(1.0, 0.0) == pytest.approx((2 * math.pi) ** -0.5, abs=1e-14)
    assert kernels.eval_heat(1.0, np.array([0.0, 0.0]), d=2) == pytest.approx(1 / (2 * math.pi), abs=1e-14)
    assert kernels.eval_heat(1.0, 2.0) == pytest.approx(0.5 * kernels.eval_heat(0.25, 1.0), abs=1e-15)


def test_pinned_examples():
    assert kernels.eval_pinned(0.5, 1.0, 0.0, 0.0) == pytest.approx((2 * math.pi * 0.25) ** -0.5, abs=1e-12)
    s, t, x = 0.3, 2.0, 1.7
    peak = (2 * math.pi * s * (t - s) / t) ** -0.5
    assert kernels.eval_pinned(s, t, x, s * x / t) == pytest.approx(peak, abs=1e-12)
    y = np.linspace(-20, 20, 40001)
    assert trapezoid(kernels.eval_pinned(0.3, 1.0, 2.0, y), y) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("s,t", [(0.0, 1.0), (1.0, 1.0), (1.5, 1.0)])
def test_pinned_domain(s, t):
    with pytest.raises(DomainError):
        kernels.eval_pinned(s, t, 0.0, 0.0)


@pytest.mark.parametrize("alpha", [1.25, 1.5])
def test_stable_table_invariants(alpha):
    tab = kernels.stable_table(alpha)
    assert np.all(tab.values >= 0)
    assert 1 - 1e-4 <= tab.mass() <= 1.0
    assert np.all(np.diff(tab.values) <= 1e-15)   # unimodal on x >= 0
    assert tab(-2.0) == tab(2.0)


@pytest.mark.parametrize("alpha,tol", [(2.0, 1e-6), (1.5, 1e-3), (1.0, 1e-3), (1.25, 1e-3)])
def test_semigroup(alpha, tol):
    assert kernels.semigroup_gap(alpha, 1.0, 0.5) < tol


@pytest.mark.parametrize("alpha", [1.0, 1.25, 1.5, 2.0])
def test_unit_mass(alpha):
    assert abs(kernels.green_mass(alpha, 1.0) - 1.0) < 1e-4


@pytest.mark.parametrize("alpha", [1.25, 1.5, 2.0])
def test_half_power_scaling(alpha):
    ratio = kernels.half_power_integral(alpha, 16.0) / kernels.half_power_integral(alpha, 1.0)
    assert ratio == pytest.approx(16 ** (1 / (2 * alpha)), rel=1e-2)


def test_heat_chapman_kolmogorov():
    y = np.linspace(-40, 40, 8001)
    val = simpson(kernels.eval_heat(0.4, 1.1 - y) * kernels.eval_heat(0.9, y), x=y)
    assert val == pytest.approx(kernels.eval_heat(1.3, 1.1), abs=1e-10)


@pytest.mark.parametrize("alpha", [1.25, 1.5, 2.0])
def test_pointwise_bound_single_constant(alpha):
    xs = np.linspace(-10, 10, 81)
    C = kernels.pointwise_bound_constant(alpha, [0.1, 1.0, 10.0], xs)
    for t in (0.1, 1.0, 10.0):
        g = kernels.eval_green(alpha, t, xs, method="table")
        assert np.all(g ** 2 <= C * t ** (-1 / alpha) * g * (1 + 1e-12))
    # the constant is the peak value g_alpha(0)
    assert C == pytest.approx(kernels.eval_stable_density(alpha, 0.0), rel=1e-6)


@pytest.mark.parametrize("builder", [
    lambda: kernels.fractional_kernel(1.5, 0.01, 0.1, 256),
    lambda: kernels.heat_kernel(0.02, 0.1, 128),
    lambda: kernels.heat_kernel(0.02, 0.1, 64, d=2),
    lambda: kernels.pinned_kernel(0.3, 1.0, 0.05, 256, x=1.0),
])
def test_kernel_table_invariants(builder):
    tab = builder()
    assert np.all(tab.row >= 0)
    assert tab.mass() == pytest.approx(1 - tab.eps_trunc, abs=1e-12)
    assert 0 <= tab.eps_trunc < 1e-3


def test_kernel_table_symbol_is_exact_multiplier():
    tab = kernels.heat_kernel(0.05, 0.05, 64)
    w = kernels.grid_frequencies(64, 0.05)
    assert np.allclose(tab.symbol(), np.exp(-0.5 * 0.05 * w ** 2))


def test_convolve_preserves_constants():
    tab = kernels.fractional_kernel(2.0, 0.05, 0.1, 128)
    out = tab.convolve(np.ones(128))
    assert np.allclose(out, tab.mass())


def test_identity_residuals_pass():
    rows = kernels.identity_residuals(1.5)
    assert {r[0] for r in rows} >= {"semigroup", "unit_mass", "half_power_scaling", "heat_scaling"}
    assert all(r[-1] for r in rows)


@settings(max_examples=30, deadline=None)
@given(alpha=st.sampled_from([1.25, 1.5, 2.0]),
       t=st.floats(0.05, 20.0), x=st.floats(-30.0, 30.0))
def test_green_scaling_law(alpha, t, x):
    lam = t ** (1 / alpha)
    lhs = kernels.eval_green(alpha, t, x, method="table")
    rhs = kernels.eval_stable_density(alpha, x / lam, method="table") / lam
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)
    assert lhs >= 0
    assert kernels.eval_green(alpha, t, -x, method="table") == lhs


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0.01, 10.0), theta=st.floats(0.1, 10.0), x=st.floats(-5.0, 5.0))
def test_heat_scaling_property(t, theta, x):
    assert kernels.eval_heat(t, theta * x) == pytest.approx(
        kernels.eval_heat(t / theta ** 2, x) / theta, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-50.0, 50.0))
def test_stable_cdf_consistent_with_density(x):
    # d/dx F(x) = g(x) by a centred difference
    h = 1e-3
    deriv = (kernels.stable_cdf(1.5, x + h) - kernels.stable_cdf(1.5, x - h)) / (2 * h)
    assert deriv == pytest.approx(kernels.eval_stable_density(1.5, x), abs=1e-6)


@pytest.mark.parametrize("alpha", [1.05, 1.25, 1.5, 1.9])
def test_stable_cdf_continuous_across_series_switch(alpha):
    below = kernels.stable_cdf(alpha, 19.999999)
    above = kernels.stable_cdf(alpha, 20.0)
    assert above - below == pytest.approx(1e-6 * kernels.eval_stable_density(alpha, 20.0), abs=1e-12)
    assert kernels.stable_cdf(alpha, -1e6) + kernels.stable_cdf(alpha, 1e6) == pytest.approx(1.0, abs=1e-14)
