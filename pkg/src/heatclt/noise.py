"""Driving noise: space-time white noise and spatially colored noise with
covariance ``delta(t - s) f(x - y)``, plus the Dalang functional.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import rng
from .errors import DomainError, EmbeddingError

KINDS = ("white", "gaussian_kernel", "cauchy_kernel")
ALIASES = {"white": "white", "gaussian": "gaussian_kernel", "cauchy": "cauchy_kernel",
           "gaussian_kernel": "gaussian_kernel", "cauchy_kernel": "cauchy_kernel"}

EIGEN_TOL = 1e-10


@dataclass(frozen=True)
class NoiseSpec:
    """Spatial covariance ``f`` and its Fourier transform ``fhat``.

    ``gaussian_kernel``: ``f = p_1``, ``fhat(w) = exp(-|w|^2 / 2)``.
    ``cauchy_kernel``: ``f(x) = prod (1 + x_j^2)^-1``, ``fhat = pi^d prod exp(-|w_j|)``.
    ``white``: ``f = delta_0`` (no density), ``fhat = 1``.
    """

    kind: str
    d: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.d not in (1, 2):
            raise DomainError("only d in {1, 2} is supported")

    @classmethod
    def from_name(cls, name, d=1):
        try:
            return cls(ALIASES[name], d)
        except KeyError:
            raise DomainError(f"unknown noise kind {name!r}") from None

    @property
    def colored(self):
        return self.kind != "white"

    def f(self, z):
        """Covariance density at offset ``z`` (last axis = coordinates when d > 1)."""
        if not self.colored:
            raise DomainError("white noise has no covariance density")
        z = np.asarray(z, dtype=float)
        if self.d > 1:
            parts = [self._f1(z[..., j]) for j in range(self.d)]
            return np.prod(parts, axis=0)
        return self._f1(z)

    def _f1(self, z):
        if self.kind == "gaussian_kernel":
            return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        return 1.0 / (1.0 + z * z)

    def fhat(self, w):
        """Fourier transform of ``f`` (last axis = coordinates when d > 1)."""
        w = np.asarray(w, dtype=float)
        if self.d > 1:
            return np.prod([self._fhat1(w[..., j]) for j in range(self.d)], axis=0)
        return self._fhat1(w)

    def _fhat1(self, w):
        if self.kind == "white":
            return np.ones_like(w)
        if self.kind == "gaussian_kernel":
            return np.exp(-0.5 * w * w)
        return np.pi * np.exp(-np.abs(w))

    def f_axis(self, z):
        """One-dimensional factor of ``f`` (both colored specs are separable)."""
        return self._f1(np.asarray(z, dtype=float))

    def fhat_axis(self, w):
        return self._fhat1(np.asarray(w, dtype=float))

    @property
    def total_mass(self):
        """``f(R^d)``; equal to 1 for all three specs (``delta_0`` included)."""
        if self.kind == "cauchy_kernel":
            return math.pi ** self.d
        return 1.0


def spectral_mass(spec, d=None):
    """``int fhat`` over R^d; ``math.inf`` for white noise."""
    d = spec.d if d is None else d
    if spec.kind == "white":
        return math.inf
    if spec.kind == "gaussian_kernel":
        return (2.0 * math.pi) ** (d / 2.0)
    return (2.0 * math.pi) ** d


def upsilon(beta, spec, alpha=2.0, d=None):
    """Dalang functional ``(2 pi)^-d int fhat(y) / (beta + |y|^alpha) dy``.

    Returns ``math.inf`` when the integral diverges (white noise with
    ``alpha <= d``).
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    d = spec.d if d is None else d
    if not (0.0 < alpha <= 2.0):
        raise DomainError("alpha must lie in (0, 2]")
    if spec.kind == "white" and alpha <= d:
        return math.inf
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=400)
    if d == 1:
        val, _ = integrate.quad(lambda y: spec.fhat_axis(y) / (beta + y ** alpha), 0.0, np.inf, **opts)
        return 2.0 * val / (2.0 * math.pi)
    if spec.kind == "cauchy_kernel":
        inner = lambda y2, y1: spec.fhat(np.array([y1, y2])) / (beta + math.hypot(y1, y2) ** alpha)
        val, _ = integrate.dblquad(inner, 0.0, np.inf, 0.0, np.inf, epsabs=1e-10, epsrel=1e-8)
        return 4.0 * val / (2.0 * math.pi) ** 2
    # isotropic spectral density: polar coordinates
    radial = lambda r: r * spec.fhat_axis(r) / (beta + r ** alpha)
    val, _ = integrate.quad(radial, 0.0, np.inf, **opts)
    return 2.0 * math.pi * val / (2.0 * math.pi) ** 2


# ------------------------------------------------------------------- grids

@dataclass(frozen=True)
class Grid:
    """Regular grid with ``n`` cells of width ``dx`` along each of ``d`` axes."""

    n: int
    dx: float
    d: int = 1

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def length(self):
        return self.n * self.dx


@dataclass
class NoiseSlice:
    """Noise mass per cell for one time step."""

    increments: np.ndarray
    dt: float
    dx: float
    seed_path: tuple


def sample_white_slice(grid, dt, rng_state, tag=0):
    """I.i.d. centred Gaussians with variance ``dt * dx^d`` per cell.

    ``rng_state`` is the ``(seed, replica, step)`` triple.
    """
    if dt < 0 or grid.dx <= 0:
        raise DomainError("dt must be >= 0 and dx > 0")
    seed, replica, step = rng_state
    z = rng.normals(seed, replica, step, grid.shape, tag)
    return NoiseSlice(z * math.sqrt(dt * grid.dx ** grid.d), dt, grid.dx, tuple(rng_state))


def embedding_size(n):
    """Smallest power of two that is at least ``2n``."""
    return 1 << int(math.ceil(math.log2(max(2 * n, 2))))


def _torus_offsets(m, dx):
    k = np.arange(m)
    return np.where(k <= m // 2, k, k - m) * dx


def circulant_eigenvalues(cov, m, dx, d=1, periodic_sum=False):
    """Eigenvalues (``rfftn`` layout) of the circulant matrix of ``cov``.

    ``cov`` is a separable one-dimensional covariance callable; in d = 2 the
    row is the outer product. With ``periodic_sum`` the covariance is wrapped
    onto the torus (sum over periodic images) instead of truncated.
    """
    off = _torus_offsets(m, dx)
    row1 = cov(off)
    if periodic_sum:
        length = m * dx
        for shift in range(1, 64):
            extra = cov(off + shift * length) + cov(off - shift * length)
            row1 = row1 + extra
            if np.max(np.abs(extra)) < 1e-17 * np.max(np.abs(row1)):
                break
    lam1 = np.fft.fft(row1).real
    if d == 1:
        lam = lam1[: m // 2 + 1]
    else:
        lam = np.multiply.outer(lam1, lam1[: m // 2 + 1])
    top = float(np.max(lam))
    low = float(np.min(lam))
    if low < -EIGEN_TOL * top:
        raise EmbeddingError(f"negative circulant eigenvalue {low:.3e} (max {top:.3e})", low / top)
    return np.maximum(lam, 0.0)


MAX_TORUS = 1 << 22


@lru_cache(maxsize=64)
def _colored_sqrt_eigs(spec, n, dx, periodic, torus=None):
    if periodic:
        return n, np.sqrt(circulant_eigenvalues(spec.f_axis, n, dx, spec.d, periodic_sum=True))
    if torus is not None:
        return torus, np.sqrt(circulant_eigenvalues(spec.f_axis, torus, dx, spec.d))
    # Heavy-tailed covariances on fine grids need a longer torus; keep doubling.
    m = embedding_size(n)
    while True:
        try:
            return m, np.sqrt(circulant_eigenvalues(spec.f_axis, m, dx, spec.d))
        except EmbeddingError:
            if 2 * m > MAX_TORUS:
                raise
            m *= 2


def embedding_torus(spec, n, dx):
    """Torus length (cells per axis) used to embed an ``n``-cell grid."""
    return _colored_sqrt_eigs(spec, n, dx, False)[0]


def colored_field(z, sqrt_eigs, n):
    """Apply the circulant square root to white normals ``z`` and keep ``n`` cells per axis."""
    d = sqrt_eigs.ndim
    axes = tuple(range(-d, 0))
    m_shape = z.shape[-d:]
    x = np.fft.irfftn(np.fft.rfftn(z, axes=axes) * sqrt_eigs, s=m_shape, axes=axes)
    idx = (Ellipsis,) + (slice(0, n),) * d
    return x[idx]


def sample_colored_slice(grid, dt, spec, rng_state, periodic=False, tag=0, torus=None):
    """Stationary Gaussian cell masses with ``Cov(j, k) = dt dx^(2d) f((j - k) dx)``.

    By default the grid is embedded in a torus of at least twice its length
    (power of two), doubled until the circulant is nonnegative unless a fixed
    ``torus`` is given, in which case an EmbeddingError is raised instead.
    With ``periodic=True`` the grid itself is the torus and
    ``f`` is wrapped over periodic images, which suits periodic solvers.
    """
    if not spec.colored:
        raise DomainError("use sample_white_slice for white noise")
    if spec.d != grid.d:
        raise DomainError("noise and grid dimensions differ")
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    seed, replica, step = rng_state
    m, root = _colored_sqrt_eigs(spec, grid.n, grid.dx, periodic, torus)
    if dt == 0:
        return NoiseSlice(np.zeros(grid.shape), dt, grid.dx, tuple(rng_state))
    z = rng.normals(seed, replica, step, (m,) * grid.d, tag)
    x = colored_field(z, root, grid.n)
    amp = math.sqrt(dt) * grid.dx ** grid.d
    return NoiseSlice(x * amp, dt, grid.dx, tuple(rng_state))


def noise_density_batch(grid, dt, spec, seed, replicas, step, periodic=True, tag=0):
    """Noise densities ``dW / dx^d`` for several replicas at one step.

    Returns an array of shape ``(len(replicas), *grid.shape)``.
    """
    nb = len(replicas)
    if not spec.colored:
        out = np.empty((nb,) + grid.shape)
        rng.fill_normals(out, seed, replicas, step, tag)
        out *= math.sqrt(dt / grid.dx ** grid.d)
        return out
    m, root = _colored_sqrt_eigs(spec, grid.n, grid.dx, periodic)
    z = np.empty((nb,) + (m,) * grid.d)
    rng.fill_normals(z, seed, replicas, step, tag)
    return colored_field(z, root, grid.n) * math.sqrt(dt)


def empirical_covariance(slices, max_lag):
    """Lag covariances (lags 0..max_lag) and Monte-Carlo standard errors.

    ``slices`` has shape ``(n_samples, n_cells)``; each lag averages all cell
    pairs of that lag within a sample, and the standard error is computed
    across samples, so within-sample correlation is accounted for.
    """
    x = np.asarray(slices, dtype=float)
    n_samples, n = x.shape
    # slices are centred by construction, so the sample mean is not removed
    est = np.empty(max_lag + 1)
    se = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        per = np.mean(x[:, : n - lag] * x[:, lag:], axis=1)
        est[lag] = per.mean()
        se[lag] = per.std(ddof=1) / math.sqrt(n_samples)
    return est, se


def covariance_check(spec, n_slices=100_000, n_cells=64, dx=0.1, dt=0.01, seed=0,
                     max_lag=10, n_se=4.0, batch=2048):
    """Compare lag covariances of sampled colored slices with ``dt dx^2 f(k dx)``.

    Returns rows ``(lag, estimate, target, se, pass)`` with pass meaning the
    estimate lies within ``n_se`` standard errors of the target.
    """
    if not spec.colored or spec.d != 1:
        raise DomainError("covariance_check needs a one-dimensional colored spec")
    m, root = _colored_sqrt_eigs(spec, n_cells, dx, False)
    amp = math.sqrt(dt) * dx
    sums = np.zeros(max_lag + 1)
    sq = np.zeros(max_lag + 1)
    done = 0
    while done < n_slices:
        nb = min(batch, n_slices - done)
        z = np.empty((nb, m))
        rng.fill_normals(z, seed, range(done, done + nb), 0)
        x = colored_field(z, root, n_cells) * amp
        for lag in range(max_lag + 1):
            per = np.mean(x[:, : n_cells - lag] * x[:, lag:], axis=1)
            sums[lag] += per.sum()
            sq[lag] += np.dot(per, per)
        done += nb
    est = sums / n_slices
    se = np.sqrt(np.maximum(sq / n_slices - est ** 2, 0.0) / (n_slices - 1))
    lags = np.arange(max_lag + 1)
    target = dt * dx * dx * spec.f_axis(lags * dx)
    return [(int(k), float(e), float(tg), float(s), bool(abs(e - tg) <= n_se * s))
            for k, e, tg, s in zip(lags, est, target, se)]
