"""Deterministic functionals built on the Fejer-type weight (1 - cos z)/z^2."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import DomainError, UnsupportedError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def fejer_weight(z):
    """``(1 - cos z) / z^2`` with the removable singularity at 0 (value 1/2)."""
    z = np.asarray(z, dtype=float)
    return 0.5 * np.sinc(z / (2.0 * np.pi)) ** 2


def fejer_tail(z0):
    """Exact ``int_{z0}^inf (1 - cos z)/z^2 dz`` for ``z0 > 0``."""
    si, _ = special.sici(z0)
    return 1.0 / z0 - math.cos(z0) / z0 + (math.pi / 2.0 - si)


def _panels(edges):
    lo, hi = edges[:-1, None], edges[1:, None]
    z = 0.5 * (hi - lo) * _GL_X[None, :] + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * _GL_W[None, :]
    return z.ravel(), w.ravel()


def fejer_integral(weight=None, z_min=0.0, z_max=None, tol=1e-13):
    """``int (1 - cos z)/z^2 w(z) dz`` over ``{z_min <= |z| <= z_max}`` for even ``w``.

    The half line is cut into panels one cosine period long with Gauss-Legendre
    nodes on each. Without an explicit ``z_max`` the panels stop once
    ``w(Z) * 2/Z`` drops below ``tol``; the remainder is ``w(Z)`` times the exact
    tail of the bare weight (``w`` is assumed nonincreasing in ``|z|``).
    """
    period = 2.0 * math.pi
    finite = z_max is not None
    if not finite:
        z_max = period
        if weight is not None:
            while float(weight(np.array([z_max]))[0]) * 2.0 / z_max > tol and z_max < 1e9:
                z_max *= 2.0
        else:
            z_max = 64.0 * period
    n_pan = max(1, int(math.ceil((z_max - z_min) / period)))
    edges = np.linspace(z_min, z_max, n_pan + 1)
    z, w = _panels(edges)
    vals = fejer_weight(z)
    if weight is not None:
        vals = vals * weight(z)
    total = float(np.dot(w, vals))
    if not finite:
        wz = 1.0 if weight is None else float(weight(np.array([z_max]))[0])
        total += wz * fejer_tail(z_max)
    return 2.0 * total


@dataclass(frozen=True)
class WindowSpectrum:
    """Fourier transform of ``I_N * I~_N`` with ``I_N = N^-d 1_[0,N]^d``.

    ``factor(z) = (1 - cos(N z)) / (N z)^2`` tends to 1/2 at ``z = 0``; the full
    transform is ``prod_j 2 factor(z_j)``, equal to 1 at the origin.
    """

    N: float
    d: int = 1

    def factor(self, z):
        return fejer_weight(self.N * np.asarray(z, dtype=float))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.d == 1:
            return 2.0 * self.factor(z)
        return np.prod([2.0 * self.factor(z[..., j]) for j in range(self.d)], axis=0)


def phi_N(s, y, t, N, alpha):
    """``int_0^N G_alpha(t - s, x - y) dx``."""
    if not (0.0 <= s < t):
        raise DomainError("need 0 <= s < t")
    scale = (t - s) ** (1.0 / alpha)
    return float(kernels.stable_cdf(alpha, (N - y) / scale) - kernels.stable_cdf(alpha, -y / scale))


def M1_eval(s, t, N, alpha, sigma2_N, z_range=None):
    """``N/(pi sigma^2) int (1 - cos z)/z^2 exp(-2(t - s)|z|^alpha / N^alpha) dz``.

    ``z_range=(a, b)`` restricts the integral to ``a <= |z| <= b``.
    """
    if not (0.0 <= s <= t):
        raise DomainError("need 0 <= s <= t")
    if not sigma2_N > 0:
        raise DomainError("sigma2_N must be positive")
    c = 2.0 * (t - s) / N ** alpha
    weight = None if c == 0 else (lambda z: np.exp(-c * np.abs(z) ** alpha))
    if z_range is None:
        val = fejer_integral(weight)
    else:
        val = fejer_integral(weight, z_min=z_range[0], z_max=z_range[1])
    return N / (math.pi * sigma2_N) * val


def M1_direct(s, t, N, alpha, sigma2_N):
    """The same quantity as a real-space double integral over the window:
    ``sigma^-2 int_0^N int_0^N G_alpha(2(t - s), x1 - x2) dx1 dx2``."""
    if not (0.0 <= s < t):
        raise DomainError("need 0 <= s < t")
    tau = 2.0 * (t - s)
    scale = tau ** (1.0 / alpha)
    # 2 int_0^N (N - z) G(tau, z) dz, split where the kernel lives
    edges = np.unique(np.clip(np.concatenate([[0.0], scale * np.geomspace(1e-3, 1e4, 60), [N]]), 0, N))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda z: (N - z) * kernels.eval_green(alpha, tau, z), a, b,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return 2.0 * total / sigma2_N


def _spectral_axis(spec):
    if spec.kind == "gaussian_kernel":
        return lambda x: np.exp(-0.5 * x * x)
    return lambda x: math.pi * np.exp(-np.abs(x))


def M23_eval(which, s, t, N, d, spec, sigma2_N):
    """Fourier-side functionals of the colored cases.

    ``which=2``: ``N^d/(pi^d sigma^2) int prod_j (1 - cos w_j)/w_j^2
    exp(-(t - s)|w|^2/N^2) fhat(w/N) dw``.
    ``which=3`` (d = 1): ``N t/(s pi sigma^2) int (1 - cos w)/w^2
    exp(-t (t - s) w^2/(s N^2)) fhat(t w/(s N)) dw``.
    """
    if not spec.colored:
        raise DomainError("these functionals need a colored noise spec")
    if not (0.0 < s < t):
        raise DomainError("need 0 < s < t")
    if not sigma2_N > 0:
        raise DomainError("sigma2_N must be positive")
    fh = _spectral_axis(spec)
    if which == 2:
        c = (t - s) / N ** 2
        one = fejer_integral(lambda w: np.exp(-c * w * w) * fh(w / N))
        return N ** d / (math.pi ** d * sigma2_N) * one ** d
    if which == 3:
        if d != 1:
            raise DomainError("the case-3 functional is one-dimensional")
        c = t * (t - s) / (s * N ** 2)
        k = t / (s * N)
        one = fejer_integral(lambda w: np.exp(-c * w * w) * fh(k * w))
        return N * t / (s * math.pi * sigma2_N) * one
    raise DomainError("which must be 2 or 3")


def dirichlet_identity(k, alpha):
    """Simplex integral of ``[(1 - r_1)(r_1 - r_2)...(r_{k-1} - r_k) r_k]^(-1/alpha)``.

    Returns ``(lhs, rhs, gap)`` with ``lhs`` from nested adaptive quadrature
    (algebraic endpoint weights) and ``rhs`` from Gamma functions.
    """
    if k not in (1, 2, 3):
        raise UnsupportedError("only k in {1, 2, 3} is supported")
    if not (1.0 < alpha <= 2.0):
        raise DomainError("alpha must lie in (1, 2]")
    a = 1.0 / alpha
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)

    def J(level, x):
        # J_0(x) = x^-a;  J_l(x) = int_0^x (x - r)^-a J_{l-1}(r) dr, which behaves
        # like x^e_l, so the algebraic weight absorbs both endpoint singularities
        x = max(x, 1e-300)   # quadrature may sample the endpoint
        if level == 0:
            return x ** (-a)
        e_prev = (level - 1) * (1.0 - a) - a
        val, _ = integrate.quad(lambda r: J(level - 1, r) * max(r, 1e-300) ** (-e_prev), 0.0, x,
                                weight="alg", wvar=(e_prev, -a), **opts)
        return val

    lhs = J(k, 1.0)
    rhs = special.gamma(1.0 - a) ** (k + 1) / special.gamma((k + 1) * (1.0 - a))
    return lhs, rhs, abs(lhs - rhs)


def _log_inner(a):
    """``int_0^inf e^-theta log(1 + a theta)^2 d theta`` for an array of ``a > 0``.

    With ``theta = e^u`` the integrand is smooth in ``u``; Gauss-Legendre panels
    cover ``theta`` in ``[1e-6/a, 60]`` and the piece below uses ``log1p(x) ~ x``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    lo = np.minimum(np.log(1e-6 / a), -10.0)
    hi = math.log(60.0)
    n_pan = 96
    frac, wts = _panels(np.linspace(0.0, 1.0, n_pan + 1))
    u = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    th = np.exp(u)
    f = np.exp(-th) * np.log1p(a[:, None] * th) ** 2 * th
    body = (hi - lo) * (f @ wts)
    th0 = np.exp(lo)
    return body + a * a * th0 ** 3 / 3.0


def log_bound_lhs(N, t=1.0):
    """``int (1 - cos z)/z^2 int_0^inf e^-theta log(1 + N^2 theta/(t z^2))^2 d theta dz``."""
    if N < math.e:
        raise DomainError("need N >= e")
    c = N * N / t
    # geometric panels toward the integrable log^2 singularity at z = 0
    edges = np.concatenate([[0.0], np.geomspace(1e-12, 1.0, 50), 1.0 + 2.0 * np.pi * np.arange(1, 400)])
    z, w = _panels(edges)
    vals = _log_inner(c / (z * z)) * fejer_weight(z)
    body = float(np.dot(w, vals))
    # past the last panel the inner integral is below 2 (c/z^2)^2 and the weight below 2/z^2
    zmax = edges[-1]
    tail = 4.0 * c * c / (5.0 * zmax ** 5)
    return 2.0 * (body + tail)


@lru_cache(maxsize=8)
def log_bound_constant(t=1.0):
    """``C_t`` fitted once from ``lhs(e^2) = C_t (log e^2)^2``."""
    return log_bound_lhs(math.e ** 2, t) / 4.0


def log_bound_check(N, t=1.0):
    """``(lhs, rhs, pass)`` for the bound ``lhs(N) <= C_t (log N)^2``."""
    lhs = log_bound_lhs(N, t)
    rhs = log_bound_constant(t) * math.log(N) ** 2
    return lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-12))
