"""Ensemble statistics, density estimates, distances to N(0,1) and rate fits."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, InsufficientData

GRID = np.round(np.arange(-500, 501) * 0.01, 10)


@dataclass
class EnsembleStats:
    """Streaming central moments (up to order 4) of the averages ``A_N``.

    ``merge`` combines two ensembles with the pairwise update formulas, so the
    result matches a single pass over the concatenated data.
    """

    n: int = 0
    mean: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M4: float = 0.0
    samples: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    keep_samples: bool = True

    @classmethod
    def from_samples(cls, values, keep_samples=True, **diagnostics):
        x = np.asarray(values, dtype=float).ravel()
        ens = cls(keep_samples=keep_samples)
        if x.size == 0:
            return ens
        mu = float(np.mean(x))
        d = x - mu
        ens.n, ens.mean = int(x.size), mu
        ens.M2 = float(np.sum(d ** 2))
        ens.M3 = float(np.sum(d ** 3))
        ens.M4 = float(np.sum(d ** 4))
        if keep_samples:
            ens.samples = list(x)
        ens.diagnostics = {k: float(v) for k, v in diagnostics.items()}
        return ens

    def update(self, values):
        return self.merge(EnsembleStats.from_samples(values, self.keep_samples))

    def merge(self, other):
        """Return the ensemble of both inputs (neither input is modified)."""
        if other.n == 0:
            return _copy(self)
        if self.n == 0:
            return _copy(other)
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        mean = self.mean + nb * d_n
        M2 = self.M2 + other.M2 + delta * d_n * na * nb
        M3 = (self.M3 + other.M3 + delta * d_n * d_n * na * nb * (na - nb)
              + 3.0 * d_n * (na * other.M2 - nb * self.M2))
        M4 = (self.M4 + other.M4
              + delta * d_n ** 3 * na * nb * (na * na - na * nb + nb * nb)
              + 6.0 * d_n * d_n * (na * na * other.M2 + nb * nb * self.M2)
              + 4.0 * d_n * (na * other.M3 - nb * self.M3))
        diag = {}
        for key in set(self.diagnostics) | set(other.diagnostics):
            diag[key] = self.diagnostics.get(key, 0.0) + other.diagnostics.get(key, 0.0)
        keep = self.keep_samples and other.keep_samples
        return EnsembleStats(n, mean, M2, M3, M4,
                             (self.samples + other.samples) if keep else [], diag, keep)

    @property
    def variance(self):
        return self.M2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def skewness(self):
        if self.n < 3 or self.M2 == 0:
            return math.nan
        return math.sqrt(self.n) * self.M3 / self.M2 ** 1.5

    @property
    def sample_array(self):
        return np.asarray(self.samples, dtype=float)


def _copy(e):
    return EnsembleStats(e.n, e.mean, e.M2, e.M3, e.M4, list(e.samples), dict(e.diagnostics),
                         e.keep_samples)


def estimate_variance(ens):
    """Unbiased sample variance and its standard error.

    The standard error uses ``sqrt((mu4 - (n - 3)/(n - 1) s^4) / n)``.
    """
    if not isinstance(ens, EnsembleStats):
        ens = EnsembleStats.from_samples(ens, keep_samples=False)
    n = ens.n
    if n < 2:
        raise InsufficientData("need at least two samples")
    s2 = ens.M2 / (n - 1)
    if n < 4:
        return s2, math.nan
    mu4 = ens.M4 / n
    se2 = (mu4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n
    return s2, math.sqrt(max(se2, 0.0))


def normal_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2.0 * math.pi)


@dataclass
class DensityEstimate:
    """Density values on ``grid`` (bandwidth ``h`` for kernel estimates)."""

    grid: np.ndarray
    values: np.ndarray
    bandwidth: float = math.nan

    @classmethod
    def from_function(cls, fn, grid=None):
        g = GRID if grid is None else np.asarray(grid, dtype=float)
        return cls(g, np.asarray(fn(g), dtype=float))

    def mass(self):
        return float(integrate.trapezoid(self.values, self.grid))


def silverman_bandwidth(samples):
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def kde_density(samples, grid=None, chunk=4096):
    """Gaussian kernel density estimate with Silverman's bandwidth."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 100:
        raise InsufficientData("kernel density estimate needs at least 100 samples")
    h = silverman_bandwidth(x)
    if not h > 0:
        raise DomainError("samples are degenerate (zero spread)")
    g = GRID if grid is None else np.asarray(grid, dtype=float)
    out = np.zeros(g.size)
    for lo in range(0, x.size, chunk):
        u = (g[None, :] - x[lo:lo + chunk, None]) / h
        out += np.exp(-0.5 * u * u).sum(axis=0)
    out /= x.size * h * math.sqrt(2.0 * math.pi)
    return DensityEstimate(g, out, h)


def sup_distance(est):
    """``max |est - phi|`` over the grid."""
    return float(np.max(np.abs(est.values - normal_pdf(est.grid))))


def tv_distance(est):
    """Half the L1 distance to ``phi`` (trapezoid on the grid), clipped to [0, 1]."""
    diff = np.abs(est.values - normal_pdf(est.grid))
    return float(min(max(0.5 * integrate.trapezoid(diff, est.grid), 0.0), 1.0))


def normalize(samples, sigma=None):
    """``F_N = A_N / sigma``; ``sigma`` defaults to the sample standard deviation."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if sigma is None:
        sigma = float(np.std(x, ddof=1))
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return x / sigma


def ks_test(samples):
    """Kolmogorov-Smirnov statistic and p-value against N(0, 1)."""
    res = stats.kstest(np.asarray(samples, dtype=float), "norm")
    return float(res.statistic), float(res.pvalue)


def ks_critical(n, level=0.01):
    """Asymptotic critical value of the one-sample KS statistic."""
    return float(stats.kstwobign.isf(level) / math.sqrt(n))


def distance_bootstrap(samples, n_boot=40, seed=0, sigma=None):
    """Bootstrap standard errors of ``(sup_distance, tv_distance)`` for ``F_N``.

    Each resample is renormalized by its own standard deviation unless a fixed
    ``sigma`` is supplied.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    gen = np.random.default_rng(seed)
    sups, tvs = [], []
    for _ in range(n_boot):
        xb = x[gen.integers(0, x.size, x.size)]
        est = kde_density(normalize(xb, sigma))
        sups.append(sup_distance(est))
        tvs.append(tv_distance(est))
    return float(np.std(sups, ddof=1)), float(np.std(tvs, ddof=1))


@dataclass
class RateFit:
    """Least-squares line through ``(log N, log distance)``."""

    slope: float
    intercept: float
    r2: float
    N: np.ndarray
    distance: np.ndarray
    dropped_smallest: bool = False
    log_corrected: tuple = None   # (slope, intercept, r2) against log(N / log N)


def _ols(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def fit_rate(N, distance, case=1, drop_smallest=True, min_gain=0.05):
    """Fit ``log distance = slope * log N + intercept``.

    Nonpositive distances are dropped with a warning. The smallest ``N`` is
    excluded when that raises R^2 by more than ``min_gain``. For case 3 the fit
    against ``log(N / log N)`` is reported as well.
    """
    N = np.asarray(N, dtype=float)
    d = np.asarray(distance, dtype=float)
    ok = np.isfinite(d) & (d > 0)
    if not np.all(ok):
        warnings.warn(f"dropping {int(np.sum(~ok))} nonpositive distances", RuntimeWarning,
                      stacklevel=2)
    N, d = N[ok], d[ok]
    if N.size < 3:
        raise InsufficientData("rate fit needs at least three positive points")
    order = np.argsort(N)
    N, d = N[order], d[order]
    slope, icpt, r2 = _ols(np.log(N), np.log(d))
    dropped = False
    if drop_smallest and N.size >= 4:
        s2, i2, r22 = _ols(np.log(N[1:]), np.log(d[1:]))
        if r22 > r2 + min_gain:
            slope, icpt, r2, dropped = s2, i2, r22, True
            N, d = N[1:], d[1:]
    alt = None
    if case == 3:
        if np.any(N <= math.e):
            raise DomainError("the log-corrected fit needs N > e")
        alt = _ols(np.log(N / np.log(N)), np.log(d))
    return RateFit(slope, icpt, r2, N, d, dropped, alt)


def nonincreasing_within(values, ses, k=2.0):
    """True when each value exceeds none of its predecessors by more than ``k`` SE."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(ses, dtype=float)
    for j in range(1, v.size):
        for i in range(j):
            if v[j] - v[i] > k * math.hypot(s[i], s[j]):
                return False
    return True


def normal_tv_shift(mu):
    """Total variation between N(0,1) and N(mu,1): ``2 Phi(|mu|/2) - 1``."""
    return float(2.0 * special.ndtr(abs(mu) / 2.0) - 1.0)


def trimmed_inverse_moment(values, p=2, trim=1e-3):
    """Mean of ``u^-p`` over positive values, dropping the top ``trim`` fraction."""
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x) & (x > 0)]
    if x.size == 0:
        raise InsufficientData("no positive samples")
    inv = np.sort(x ** (-p))
    keep = max(1, int(math.floor(inv.size * (1.0 - trim))))
    return float(np.mean(inv[:keep]))
