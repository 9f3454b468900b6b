import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from heatclt import functionals as fn
from heatclt import noise, oracle
from heatclt.errors import DomainError, UnsupportedError

GAUSS = noise.NoiseSpec.from_name("gaussian")
CAUCHY = noise.NoiseSpec.from_name("cauchy")


@pytest.fixture(scope="module")
def case1_sol():
    return oracle.solve_covariance(case=1, alpha=2.0, t=1.0, N=1024)


@pytest.fixture(scope="module")
def case2_sol():
    return oracle.solve_covariance(case=2, t=1.0, N=1024, spec=GAUSS)


def test_fejer_mass_is_pi():
    assert fn.fejer_integral() == pytest.approx(math.pi, abs=1e-10)
    assert fn.fejer_weight(0.0) == 0.5
    assert fn.fejer_weight(1e-9) == pytest.approx(0.5)


def test_fejer_tail_matches_quadrature():
    ref = integrate.quad(lambda z: (1 - math.cos(z)) / z ** 2, 5.0, 5.0 + 2000 * math.pi, limit=5000)[0]
    ref += 1 / (5.0 + 2000 * math.pi)   # remaining tail of the mean 1/z^2 part
    assert fn.fejer_tail(5.0) == pytest.approx(ref, abs=1e-6)


def test_window_spectrum():
    w = fn.WindowSpectrum(N=8.0)
    assert w.factor(0.0) == 0.5
    assert w(0.0) == 1.0
    w2 = fn.WindowSpectrum(N=8.0, d=2)
    assert w2(np.zeros(2)) == 1.0
    # Fourier transform of (I_N * I~_N)(x) = (N - |x|)_+ / N^2
    for z in (0.1, 0.37, 1.0):
        ref = 2 * integrate.quad(lambda x: (8 - x) / 64 * math.cos(z * x), 0, 8)[0]
        assert w(z) == pytest.approx(ref, abs=1e-12)


def test_phi_N_examples():
    assert fn.phi_N(0.5, 50.0, 1.0, 100.0, 2.0) == pytest.approx(1.0, abs=1e-6)
    # heavy tails: "deep inside" means distance of order 1e5 for mass 1e-6
    assert fn.phi_N(0.5, 5e5, 1.0, 1e6, 1.5) == pytest.approx(1.0, abs=1e-6)
    assert fn.phi_N(0.5, -1e5, 1.0, 10.0, 1.5) == pytest.approx(0.0, abs=1e-6)
    assert fn.phi_N(0.5, -500.0, 1.0, 100.0, 2.0) == pytest.approx(0.0, abs=1e-6)
    assert fn.phi_N(0.0, 0.0, 1.0, 1000.0, 2.0) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainError):
        fn.phi_N(1.0, 0.0, 1.0, 10.0, 2.0)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.0, 0.95), y=st.floats(-20, 40), alpha=st.sampled_from([1.5, 2.0]))
def test_phi_N_is_a_probability(s, y, alpha):
    v = fn.phi_N(s, y, 1.0, 16.0, alpha)
    assert -1e-12 <= v <= 1 + 1e-12


def test_M1_at_s_equal_t():
    assert fn.M1_eval(1.0, 1.0, 64.0, 2.0, 80.0) == pytest.approx(64 / 80, rel=1e-12)


@pytest.mark.parametrize("alpha,s,N", [(2.0, 0.0, 16.0), (2.0, 0.6, 64.0), (1.5, 0.3, 16.0), (1.25, 0.5, 8.0)])
def test_M1_fourier_form_equals_real_space_form(alpha, s, N):
    assert fn.M1_eval(s, 1.0, N, alpha, 3.0) == pytest.approx(fn.M1_direct(s, 1.0, N, alpha, 3.0), rel=1e-7)


def test_M1_restriction_lower_bound():
    for s in (0.0, 0.5, 0.9):
        full = fn.M1_eval(s, 1.0, 64.0, 2.0, 80.0)
        part = fn.M1_eval(s, 1.0, 64.0, 2.0, 80.0, z_range=(1.0, 2.0))
        assert 0 < part <= full


def test_M1_limit_is_reciprocal_integral_of_m2(case1_sol):
    vals = [fn.M1_eval(0.5, 1.0, N, 2.0, oracle.variance_of_average(case1_sol, N)[0])
            for N in (16, 64, 256, 1024)]
    limit = 1 / oracle.limit_ratio_case1(2.0, 1.0)
    gaps = np.abs(np.array(vals) - limit)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 2e-3


@settings(max_examples=20, deadline=None)
@given(s1=st.floats(0.0, 1.0), s2=st.floats(0.0, 1.0), N=st.floats(2.0, 500.0))
def test_M1_nondecreasing_in_s(s1, s2, N):
    lo, hi = sorted((s1, s2))
    assert fn.M1_eval(lo, 1.0, N, 1.5, 1.0) <= fn.M1_eval(hi, 1.0, N, 1.5, 1.0) * (1 + 1e-10)


def test_M1_domain():
    with pytest.raises(DomainError):
        fn.M1_eval(1.2, 1.0, 10.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        fn.M1_eval(0.5, 1.0, 10.0, 2.0, 0.0)


def test_M2_bounded_by_total_mass(case2_sol):
    for N in (16, 64, 256):
        var = oracle.variance_of_average(case2_sol, N)[0]
        for s in (0.55, 0.75, 0.95):
            m2 = fn.M23_eval(2, s, 1.0, N, 1, GAUSS, var)
            assert 0 < m2 <= N * GAUSS.total_mass / var


def test_M2_is_N_independent(case2_sol):
    vals = []
    for N in (16, 64, 256, 1024):
        var = oracle.variance_of_average(case2_sol, N)[0]
        vals.append(fn.M23_eval(2, 0.75, 1.0, N, 1, GAUSS, var))
    assert max(vals) / min(vals) < 1.05
    # limit: fhat(0) / int Sigma
    assert vals[-1] == pytest.approx(1 / oracle.integral_sigma(case2_sol), rel=5e-3)


def test_M2_two_dimensional_separable():
    one = fn.M23_eval(2, 0.5, 1.0, 10.0, 1, CAUCHY, 1.0)
    two = fn.M23_eval(2, 0.5, 1.0, 10.0, 2, noise.NoiseSpec("cauchy_kernel", 2), 1.0)
    assert two == pytest.approx(one ** 2, rel=1e-12)


def test_M3_times_s_log_N_bounded():
    vals = []
    for N in (math.e ** 2, 64.0, 512.0, 4096.0):
        sigma2 = N * math.log(N)   # t f(R) N log N with t = 1, f(R) = 1
        for s in (0.55, 0.75, 0.95):
            vals.append(s * math.log(N) * fn.M23_eval(3, s, 1.0, N, 1, GAUSS, sigma2))
    assert max(vals) <= 1.0 + 1e-9   # t fhat(0) / 1


def test_M23_errors():
    with pytest.raises(DomainError):
        fn.M23_eval(2, 0.5, 1.0, 10.0, 1, noise.NoiseSpec.from_name("white"), 1.0)
    with pytest.raises(DomainError):
        fn.M23_eval(4, 0.5, 1.0, 10.0, 1, GAUSS, 1.0)
    with pytest.raises(DomainError):
        fn.M23_eval(2, 0.0, 1.0, 10.0, 1, GAUSS, 1.0)


def test_dirichlet_identity_examples():
    lhs, rhs, gap = fn.dirichlet_identity(1, 2.0)
    assert lhs == pytest.approx(math.pi, abs=1e-8)
    assert rhs == pytest.approx(math.pi, abs=1e-12)
    assert gap < 1e-8
    assert fn.dirichlet_identity(1, 1.5)[2] < 1e-6
    assert fn.dirichlet_identity(2, 2.0)[2] < 1e-5


@settings(max_examples=10, deadline=None)
@given(k=st.integers(1, 3), alpha=st.floats(1.05, 2.0))
def test_dirichlet_identity_property(k, alpha):
    assert fn.dirichlet_identity(k, alpha)[2] < 1e-5 * fn.dirichlet_identity(k, alpha)[1]


def test_dirichlet_identity_limits():
    with pytest.raises(UnsupportedError):
        fn.dirichlet_identity(4, 2.0)
    with pytest.raises(DomainError):
        fn.dirichlet_identity(1, 1.0)


def test_log_bound_calibration_and_trend():
    C = fn.log_bound_constant(1.0)
    lhs, rhs, ok = fn.log_bound_check(math.e ** 2, 1.0)
    assert ok and lhs == pytest.approx(rhs, rel=1e-12)
    assert C == pytest.approx(lhs / 4)
    ratios = [fn.log_bound_lhs(math.e ** k) / k ** 2 for k in (2, 3, 4)]
    assert ratios[0] >= ratios[1] >= ratios[2]


def test_log_bound_inner_integrand_finite_near_zero():
    # the z -> 0 integrand (1 - cos z)/z^2 * inner(N^2/z^2) behaves like log(1/z)^2 / 2
    vals = fn._log_inner(np.array([1e20, 1e30])) * fn.fejer_weight(np.array([1e-8, 1e-13]))
    assert np.all(np.isfinite(vals))


def test_log_bound_domain():
    with pytest.raises(DomainError):
        fn.log_bound_check(2.0)
