"""Time stepping of the mild solutions on a periodic grid.

Cases 1 and 2 use a one-step mild Euler scheme executed in Fourier space:

    u_{k+1} = P u_k + Q (u_k xi_k),

where ``P`` is the exact one-step semigroup multiplier, ``xi_k = dW_k / dx^d``
is the noise density of step ``k`` and ``Q`` is the multiplier whose square
is the time average of ``P(tau)^2`` over the step, so the conditional variance
of the stochastic increment is exact for a frozen field.

Case 3 (Dirac initial condition) is simulated for ``U = u / p_t`` in the
scaled coordinate ``xi = y / s``, where the bridge kernel becomes a plain heat
kernel of variance ``1/s_k - 1/s_{k+1}``.
"""

import math
import time as _time
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft
from scipy import special

from . import kernels, rng
from .errors import DomainError, SimulationDiverged, UnsupportedError
from .noise import Grid, NoiseSpec, noise_density_batch

TAG_NOISE = 0
TAG_SLIVER = 1


@dataclass
class SimConfig:
    """Run parameters. ``nx`` counts grid cells per unit length."""

    case: int = 1
    alpha: float = 2.0
    t: float = 1.0
    N: float = 32.0
    d: int = 1
    nx: int = 4
    nt: int = 32
    pad: float = None
    seed: int = 0
    replicas: int = 1
    mesh_grading: float = 2.0
    noise: str = None
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.case not in (1, 2, 3):
            raise DomainError(f"case must be 1, 2 or 3, got {self.case}")
        if self.noise is None:
            self.noise = "white" if self.case == 1 else "gaussian"
        spec = NoiseSpec.from_name(self.noise, self.d)
        if self.case == 1:
            if self.d != 1:
                raise DomainError("case 1 is one-dimensional")
            if not (1.0 < self.alpha <= 2.0):
                raise DomainError("case 1 needs alpha in (1, 2]")
            if spec.colored:
                raise DomainError("case 1 is driven by white noise")
        else:
            if self.alpha != 2.0:
                raise DomainError(f"case {self.case} uses the heat kernel (alpha = 2)")
        if self.case == 2 and self.d == 2 and not spec.colored:
            raise DomainError("white noise in d = 2 has no function-valued solution")
        if self.case == 3:
            if self.d != 1:
                raise DomainError("case 3 is one-dimensional")
            if not spec.colored:
                raise DomainError("case 3 needs a colored noise with finite spectral mass")
        if self.t <= 0 or self.N <= 0:
            raise DomainError("t and N must be positive")
        if self.nx < 1 or self.nt < 1:
            raise DomainError("nx and nt must be positive")
        if self.replicas < 0 or self.seed < 0:
            raise DomainError("seed and replicas must be nonnegative")
        if self.pad is None:
            self.pad = default_pad(self)
        if self.pad < 0:
            raise DomainError("pad must be nonnegative")

    @property
    def spec(self):
        return NoiseSpec.from_name(self.noise, self.d)

    @property
    def dx(self):
        return 1.0 / self.nx

    @property
    def dt(self):
        return self.t / self.nt

    def with_(self, **changes):
        return replace(self, **changes)


def default_pad(cfg):
    """Padding width: ``6 (2t)^(1/alpha)`` (case 1) or ``6 sqrt(t)`` (cases 2-3),
    doubled while the torus wrap leaks more than ``1e-3`` of kernel mass."""
    if cfg.case == 1:
        pad = 6.0 * (2.0 * cfg.t) ** (1.0 / cfg.alpha)
    else:
        pad = 6.0 * math.sqrt(cfg.t)
    while wrap_leakage(cfg, pad) > 1e-3:
        pad *= 2.0
    return pad


def wrap_leakage(cfg, pad):
    """Mass of the two-point kernel ``G(2t, .)`` beyond the wrap distance ``2 pad``.

    With a flat initial condition a zero-noise run stays exactly flat on the
    torus, so the leakage across the padding is measured on the kernel that
    carries correlations instead.
    """
    r = 2.0 * pad
    if r <= 0:
        return 1.0
    if cfg.case == 1:
        scale = (2.0 * cfg.t) ** (1.0 / cfg.alpha)
        return 2.0 * (1.0 - kernels.stable_cdf(cfg.alpha, r / scale))
    # heat kernel with variance 2t, widened by the unit-scale noise correlation
    return float(special.erfc(max(r - 3.0, 0.0) / (2.0 * math.sqrt(cfg.t))))


# ------------------------------------------------------------------ fields

@dataclass
class Field:
    """Solution values at one time. Cell ``m`` has centre ``(m + 1/2) dx``;
    the averaging window ``[0, N]^d`` occupies the first cells of each axis."""

    values: np.ndarray
    time: float
    dx: float
    d: int = 1
    window_cells: int = 0

    def positions(self):
        n = self.values.shape[-1]
        return (np.arange(n) + 0.5) * self.dx

    @property
    def neg_fraction(self):
        return float(np.mean(self.values < 0))


@dataclass
class TangentField:
    """``D_{s*, y*} u(t, .)`` on the grid."""

    s_star: float
    y_star: float
    values: np.ndarray
    time: float
    dx: float

    @property
    def neg_fraction(self):
        return float(np.mean(self.values < 0))


@dataclass
class BatchResult:
    """Per-replica outputs of one batch."""

    replicas: np.ndarray
    N_list: tuple
    A: np.ndarray
    neg_fraction: np.ndarray
    diverged_step: np.ndarray
    runtime_ms: np.ndarray
    probes: np.ndarray = None
    fields: np.ndarray = None


# ------------------------------------------------------------------ lattice

@dataclass
class Lattice:
    """Grid, multipliers and window bookkeeping for cases 1-2."""

    cfg: SimConfig
    grid: Grid
    lam: np.ndarray          # generator symbol on the rfftn layout
    P: np.ndarray
    Q: np.ndarray

    @property
    def axes(self):
        return tuple(range(-self.grid.d, 0))

    def forward(self, v):
        return sfft.rfftn(v, axes=self.axes)

    def inverse(self, v):
        return sfft.irfftn(v, s=self.grid.shape, axes=self.axes)

    def window_cells(self, N):
        k = N * self.cfg.nx
        if abs(k - round(k)) > 1e-9:
            raise DomainError(f"N = {N} is not a whole number of cells at nx = {self.cfg.nx}")
        k = int(round(k))
        if k > self.grid.n:
            raise DomainError("window exceeds the grid")
        return k

    def average(self, u, N):
        """``int_{[0,N]^d} (u - 1)`` by the midpoint rule; batched over rows."""
        k = self.window_cells(N)
        idx = (Ellipsis,) + (slice(0, k),) * self.grid.d
        s = np.sum(u[idx] - 1.0, axis=self.axes)
        return s * self.grid.dx ** self.grid.d


def generator_symbol(case, alpha, w2_or_abs):
    """``lambda(w)`` with ``P(dt) = exp(-dt lambda)``."""
    if case == 1:
        return w2_or_abs ** alpha
    return 0.5 * w2_or_abs ** 2


def step_multipliers(lam, dt):
    """Exact semigroup ``P`` and variance-matched noise multiplier ``Q``."""
    x = dt * lam
    P = np.exp(-x)
    small = x < 1e-8
    xs = np.where(small, 1.0, x)
    q2 = np.where(small, 1.0 - x, -np.expm1(-2.0 * xs) / (2.0 * xs))
    return P, np.sqrt(q2)


def build_lattice(cfg, N_max=None):
    """Periodic grid covering ``[0, N_max]^d`` plus padding on each side."""
    N_max = cfg.N if N_max is None else N_max
    cells = int(math.ceil((N_max + 2.0 * cfg.pad) * cfg.nx))
    n = sfft.next_fast_len(max(cells, 8), real=True)
    grid = Grid(n, cfg.dx, cfg.d)
    w = kernels.grid_frequencies(n, cfg.dx)
    if cfg.d == 1:
        absw = np.abs(w[: n // 2 + 1])
    else:
        absw = np.sqrt(np.add.outer(w * w, (w * w)[: n // 2 + 1]))
    lam = generator_symbol(cfg.case, cfg.alpha, absw)
    P, Q = step_multipliers(lam, cfg.dt)
    return Lattice(cfg, grid, lam, P, Q)


def _noise(lat, replicas, step):
    cfg = lat.cfg
    xi = noise_density_batch(lat.grid, cfg.dt, cfg.spec, cfg.seed, replicas, step, periodic=True)
    if cfg.noise_scale != 1.0:
        xi *= cfg.noise_scale
    return xi


def _euler_step(lat, u, xi):
    return lat.inverse(lat.P * lat.forward(u) + lat.Q * lat.forward(u * xi))


def simulate_batch(cfg, replicas, N_list=None, probes=None, keep_fields=False, lattice=None):
    """Simulate several replicas together (cases 1-2).

    ``probes`` is a list of cell indices whose values at time ``t`` are
    returned. Replicas whose field becomes non-finite are reported through
    ``diverged_step`` (``-1`` when healthy) and get NaN averages.
    """
    if cfg.case == 3:
        return case3_batch(cfg, replicas, N_list, probes=probes, keep_fields=keep_fields)
    replicas = np.asarray(list(replicas), dtype=np.int64)
    N_list = (cfg.N,) if N_list is None else tuple(N_list)
    lat = lattice or build_lattice(cfg, max(N_list))
    nb = replicas.size
    start = _time.perf_counter()
    u = np.ones((nb,) + lat.grid.shape)
    diverged = np.full(nb, -1, dtype=np.int64)
    for k in range(cfg.nt):
        u = _euler_step(lat, u, _noise(lat, replicas, k))
        bad = ~np.isfinite(u.reshape(nb, -1)).all(axis=1)
        newly = bad & (diverged < 0)
        diverged[newly] = k
    elapsed = (_time.perf_counter() - start) * 1e3 / max(nb, 1)
    A = np.stack([lat.average(u, N) for N in N_list], axis=1)
    A[diverged >= 0] = np.nan
    neg = np.mean(u.reshape(nb, -1) < 0, axis=1)
    pr = None
    if probes is not None:
        flat = u.reshape(nb, -1)
        pr = flat[:, np.asarray(probes, dtype=np.int64)]
    return BatchResult(replicas, N_list, A, neg, diverged, np.full(nb, elapsed), pr,
                       u if keep_fields else None)


def simulate_path(cfg, replica):
    """One replica: the field at time ``t`` and the window average ``A_N``."""
    if not (0 <= replica < max(cfg.replicas, 1)):
        raise DomainError("replica index outside the configured range")
    res = simulate_batch(cfg, [replica], keep_fields=True)
    if res.diverged_step[0] >= 0:
        raise SimulationDiverged(int(res.diverged_step[0]))
    values = res.fields[0]
    fld = Field(values, cfg.t, cfg.dx, cfg.d if cfg.case != 3 else 1,
                int(round(cfg.N * cfg.nx)))
    return fld, float(res.A[0, 0])


# ------------------------------------------------------ recorded noise paths

def record_noise(cfg, replica, lattice=None):
    """Noise densities ``xi_k`` of one replica, shape ``(nt, *grid)``."""
    lat = lattice or build_lattice(cfg)
    return np.stack([_noise(lat, [replica], k)[0] for k in range(cfg.nt)])


def coarsen_noise(noise_path, factor):
    """Aggregate consecutive steps (sums of Brownian increments)."""
    nt = noise_path.shape[0]
    if nt % factor:
        raise DomainError("number of steps must be divisible by the factor")
    return noise_path.reshape((nt // factor, factor) + noise_path.shape[1:]).sum(axis=1)


def simulate_with_noise(cfg, noise_path, lattice=None):
    """Euler scheme driven by a recorded noise path."""
    lat = lattice or build_lattice(cfg)
    if noise_path.shape[0] != cfg.nt:
        raise DomainError("noise path length differs from nt")
    u = np.ones(lat.grid.shape)
    for k in range(cfg.nt):
        u = _euler_step(lat, u, noise_path[k])
        if not np.all(np.isfinite(u)):
            raise SimulationDiverged(k)
    return Field(u, cfg.t, cfg.dx, cfg.d, int(round(cfg.N * cfg.nx)))


def picard_solve(cfg, noise_path, n_iter, lattice=None, return_gaps=False):
    """Picard iteration ``u_{n+1} = 1 + sum_j K_{k-j} * (u_n(t_j) xi_j)``.

    The kernel of lag ``m`` is the semigroup at the step midpoint,
    ``P((m - 1/2) dt)``. Intended for small grids (<= 128 cells, <= 64 steps).
    """
    lat = lattice or build_lattice(cfg)
    if lat.grid.n ** lat.grid.d > 128 or cfg.nt > 64:
        warnings.warn("picard_solve is meant for small grids", stacklevel=2)
    nt = cfg.nt
    if noise_path.shape[0] != nt:
        raise DomainError("noise path length differs from nt")
    u = np.ones((nt + 1,) + lat.grid.shape)
    gaps = []
    lags = np.arange(1, nt + 1)
    kern = np.exp(-np.multiply.outer((lags - 0.5) * cfg.dt, lat.lam))
    for _ in range(n_iter):
        src = lat.forward(u[:-1] * noise_path)           # (nt, ...)
        new = np.ones_like(u)
        for k in range(1, nt + 1):
            acc = np.sum(kern[k - np.arange(k) - 1] * src[:k], axis=0)
            new[k] = 1.0 + lat.inverse(acc)
        gaps.append(float(np.sqrt(np.mean((new[-1] - u[-1]) ** 2))))
        u = new
    if len(gaps) > 5 and not gaps[-1] < gaps[4]:
        warnings.warn("Picard iterates are not contracting", RuntimeWarning, stacklevel=2)
    fld = Field(u[-1], cfg.t, cfg.dx, cfg.d, int(round(cfg.N * cfg.nx)))
    return (fld, gaps) if return_gaps else fld


# --------------------------------------------------------- exact lattice moments

def lattice_moments(cfg, N_list=None, lattice=None):
    """Exact second moments of the Euler scheme (cases 1-2).

    Returns ``(cov_row, var_A)`` where ``cov_row`` is ``Cov[u_m, u_0]`` over
    the periodic grid at time ``t`` and ``var_A`` lists ``Var[A_N]``.
    """
    N_list = (cfg.N,) if N_list is None else tuple(N_list)
    lat = lattice or build_lattice(cfg, max(N_list))
    g = lat.grid
    spec = cfg.spec
    if spec.colored:
        off = kernels.grid_offsets(g.n, g.dx)
        r1 = np.zeros(g.n)
        length = g.n * g.dx
        for shift in range(-50, 51):
            r1 += spec.f_axis(off + shift * length)
        r_xi = r1 if g.d == 1 else np.multiply.outer(r1, r1)
        r_xi = r_xi * cfg.dt
    else:
        r_xi = np.zeros(g.shape)
        r_xi[(0,) * g.d] = cfg.dt / g.dx ** g.d
    r_xi = r_xi * cfg.noise_scale ** 2
    c = np.zeros(g.shape)
    P2, Q2 = lat.P ** 2, lat.Q ** 2
    for _ in range(cfg.nt):
        c = lat.inverse(P2 * lat.forward(c) + Q2 * lat.forward((1.0 + c) * r_xi))
    var = []
    for N in N_list:
        k = lat.window_cells(N)
        # number of cell pairs in the window at each periodic offset
        m = np.arange(g.n)
        cnt1 = np.clip(k - m, 0, None) + np.where(m > 0, np.clip(k - (g.n - m), 0, None), 0)
        cnt1 = cnt1.astype(float)
        cnt = cnt1 if g.d == 1 else np.multiply.outer(cnt1, cnt1)
        var.append(float(np.sum(cnt * c)) * g.dx ** (2 * g.d))
    return c, np.array(var)


# ------------------------------------------------------------------- tangents

def tangent_batch(cfg, replicas, s_indices, y_index, lattice=None):
    """Base paths and tangent fields ``D_{s*, y*} u(t, .)`` sharing one noise path.

    ``s_indices`` are mesh indices ``k*`` (``s* = k* dt``); the tangent starts at
    ``t_{k*+1}`` from the impulse ``G(dt, . - y*) u(s*, y*)`` and then follows the
    same recursion as the base field. Returns ``(u_t, D_t)`` with shapes
    ``(B, n)`` and ``(B, len(s_indices), n)``.
    """
    if cfg.case == 3 or cfg.d != 1:
        raise UnsupportedError("tangent fields are implemented for cases 1-2 in d = 1")
    lat = lattice or build_lattice(cfg)
    replicas = np.asarray(list(replicas), dtype=np.int64)
    nb, n = replicas.size, lat.grid.n
    s_indices = [int(k) for k in s_indices]
    if any(k < 0 or k >= cfg.nt for k in s_indices):
        raise DomainError("s* must lie on the time mesh before t")
    if cfg.case == 1:
        row = kernels.fractional_kernel(cfg.alpha, cfg.dt, cfg.dx, n).row
    else:
        row = kernels.heat_kernel(cfg.dt, cfg.dx, n).row
    impulse = np.roll(row, y_index)
    u = np.ones((nb, n))
    D = np.zeros((nb, len(s_indices), n))
    for k in range(cfg.nt):
        xi = _noise(lat, replicas, k)
        D = _euler_step(lat, D, xi[:, None, :])
        for j, ks in enumerate(s_indices):
            if ks == k:
                D[:, j, :] = impulse[None, :] * u[:, y_index, None]
        u = _euler_step(lat, u, xi)
    return u, D


def tangent_field(cfg, replica, s_star, y_star):
    """``D_{s*, y*} u(t, .)`` for one replica; ``s*`` and ``y*`` snap to the mesh."""
    k = int(round(s_star / cfg.dt))
    if abs(k * cfg.dt - s_star) > 1e-9 or not 0 <= k < cfg.nt:
        raise DomainError("s* must lie on the time mesh before t")
    j = int(round(y_star / cfg.dx - 0.5))
    _, D = tangent_batch(cfg, [replica], [k], j)
    return TangentField(s_star, (j + 0.5) * cfg.dx, D[0, 0], cfg.t, cfg.dx)


# ------------------------------------------------------------------- case 3

def graded_mesh(t, K, gamma):
    """``s_k = t (k / K)^gamma`` for ``k = 0..K``."""
    return t * (np.arange(K + 1) / K) ** gamma


def _spectral_pieces(spec, w, r, wr):
    """``log(fhat(w / r) / r)`` for nodes ``r`` (rows) and frequencies ``w``."""
    x = np.abs(w)[None, :] / r[:, None]
    if spec.kind == "gaussian_kernel":
        logf = -0.5 * x * x
    else:
        logf = math.log(math.pi) - x
    return logf - np.log(r)[:, None] + np.log(wr)[:, None]


def _logsumexp(a, axis=0):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _legendre(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def _sliver_nodes(s1, panels=30, per_panel=8):
    edges = s1 * np.concatenate([[0.0], 0.5 ** np.arange(panels - 1, -1, -1)])
    rs, ws = zip(*(_legendre(a, b, per_panel) for a, b in zip(edges[:-1], edges[1:])))
    return np.concatenate(rs), np.concatenate(ws)


@dataclass
class _NoisePlan:
    factor: int      # coarse spacing = factor * dxi
    m: int           # coarse torus cells
    root: np.ndarray  # sqrt of circulant eigenvalues (rfft layout)


@dataclass
class Case3Plan:
    """Precomputed multipliers and noise plans for the scaled case-3 scheme."""

    cfg: SimConfig
    s: np.ndarray
    dxi: float
    n: int
    window_cells: dict
    P: list
    Q: list
    noise: list
    sliver: _NoisePlan


def _plan_noise(n, dxi, ell, spectral_density):
    """Spectral synthesis plan for a stationary field with correlation length ``ell``.

    The coarse spacing is the largest power-of-two multiple of ``dxi`` not
    exceeding ``ell / 16`` and the torus covers the grid plus ``8 ell``.
    """
    factor = 1
    while 2 * factor * dxi <= ell / 16.0 and 2 * factor < n:
        factor *= 2
    h = factor * dxi
    cells = int(math.ceil((n * dxi + 8.0 * ell) / h)) + 2
    m = sfft.next_fast_len(cells, real=True)
    w = 2.0 * np.pi * np.fft.rfftfreq(m, d=h)
    dens = spectral_density(w, m * h)
    return _NoisePlan(factor, m, np.sqrt(np.maximum(dens, 0.0) / h))


def _sample_planned(plan, n, seed, replicas, step, tag):
    z = np.empty((len(replicas), plan.m))
    rng.fill_normals(z, seed, replicas, step, tag)
    coarse = sfft.irfft(sfft.rfft(z, axis=-1) * plan.root, plan.m, axis=-1)
    if plan.factor == 1:
        return coarse[:, :n]
    f = plan.factor
    idx = np.arange(n)
    i0, frac = idx // f, (idx % f) / f
    return coarse[:, i0] * (1.0 - frac) + coarse[:, i0 + 1] * frac


def build_case3_plan(cfg, N_max=None):
    """Mesh, grid and per-step multipliers for the scaled case-3 scheme."""
    N_max = cfg.N if N_max is None else N_max
    t, K = cfg.t, cfg.nt
    if K < 2:
        raise DomainError("case 3 needs at least two mesh steps")
    spec = NoiseSpec.from_name(cfg.noise, 1)
    s = graded_mesh(t, K, cfg.mesh_grading)
    dxi = 1.0 / (cfg.nx * t)
    spread = math.sqrt(1.0 / s[1] - 1.0 / t)
    pad_xi = 6.0 * spread + cfg.pad / t
    cells = int(math.ceil((N_max / t + 2.0 * pad_xi) / dxi))
    n = sfft.next_fast_len(cells, real=True)
    w = 2.0 * np.pi * np.fft.rfftfreq(n, d=dxi)
    P, Q, plans = [], [], []
    for k in range(1, K):
        a, b = s[k], s[k + 1]
        beta = 1.0 / a - 1.0 / b
        P.append(np.exp(-0.5 * beta * w * w))
        r, wr = _legendre(a, b, 24)
        base = _spectral_pieces(spec, w, r, wr)
        damp = -np.multiply.outer(1.0 / r - 1.0 / b, w * w)
        Q.append(np.exp(0.5 * (_logsumexp(base + damp) - _logsumexp(base))))

        def dens(ww, _length, r=r, wr=wr):
            return np.exp(_logsumexp(_spectral_pieces(spec, ww, r, wr)))
        plans.append(_plan_noise(n, dxi, 1.0 / a, dens))
    s1 = s[1]
    rs, ws = _sliver_nodes(s1)

    def sliver_density(ww, length):
        pieces = _spectral_pieces(spec, ww, rs, ws) - np.multiply.outer(1.0 / rs - 1.0 / s1, ww * ww)
        out = np.exp(_logsumexp(pieces))
        # zero mode: the density has a log singularity at 0; use its bin average
        half = math.pi / length
        nodes, wts = _legendre(0.0, half, 32)
        p0 = _spectral_pieces(spec, nodes, rs, ws) - np.multiply.outer(1.0 / rs - 1.0 / s1, nodes ** 2)
        out[0] = float(np.sum(wts * np.exp(_logsumexp(p0)))) / half
        return out
    sliver = _plan_noise(n, dxi, 1.0 / s1, sliver_density)
    return Case3Plan(cfg, s, dxi, n, {}, P, Q, plans, sliver)


def case3_batch(cfg, replicas, N_list=None, probes=None, keep_fields=False, plan=None):
    """Simulate ``U = u / p_t`` for several replicas (case 3).

    In ``xi = y / s`` the update from ``s_k`` to ``s_{k+1}`` is
    ``W <- P_k * (W + W dZ_k)`` with the noise multiplier matched to the exact
    conditional variance. The initial slice ``[0, s_1]`` is drawn as the
    first-order Gaussian field it produces from ``U = 1``.
    """
    replicas = np.asarray(list(replicas), dtype=np.int64)
    N_list = (cfg.N,) if N_list is None else tuple(N_list)
    plan = plan or build_case3_plan(cfg, max(N_list))
    n, nb = plan.n, replicas.size
    start = _time.perf_counter()
    amp = cfg.noise_scale
    W = 1.0 + amp * _sample_planned(plan.sliver, n, cfg.seed, replicas, 0, TAG_SLIVER)
    diverged = np.full(nb, -1, dtype=np.int64)
    for k in range(len(plan.P)):
        dz = amp * _sample_planned(plan.noise[k], n, cfg.seed, replicas, k + 1, TAG_NOISE)
        W = sfft.irfft(plan.P[k] * sfft.rfft(W, axis=-1) + plan.Q[k] * sfft.rfft(W * dz, axis=-1),
                       n, axis=-1)
        bad = ~np.isfinite(W).all(axis=1)
        diverged[bad & (diverged < 0)] = k + 1
    elapsed = (_time.perf_counter() - start) * 1e3 / max(nb, 1)
    A = np.empty((nb, len(N_list)))
    for j, N in enumerate(N_list):
        cells = N / (cfg.t * plan.dxi)
        if abs(cells - round(cells)) > 1e-9:
            raise DomainError(f"N = {N} is not a whole number of cells")
        A[:, j] = cfg.t * plan.dxi * np.sum(W[:, : int(round(cells))] - 1.0, axis=1)
    A[diverged >= 0] = np.nan
    neg = np.mean(W < 0, axis=1)
    pr = W[:, np.asarray(probes, dtype=np.int64)] if probes is not None else None
    return BatchResult(replicas, N_list, A, neg, diverged, np.full(nb, elapsed), pr,
                       W if keep_fields else None)


def simulate_case3(cfg, replica):
    """One case-3 replica: ``U(t, .)`` (cell ``m`` at ``x = (m + 1/2) dx``) and ``A_N``."""
    if cfg.case != 3:
        raise DomainError("simulate_case3 needs a case-3 configuration")
    res = case3_batch(cfg, [replica], keep_fields=True)
    if res.diverged_step[0] >= 0:
        raise SimulationDiverged(int(res.diverged_step[0]))
    fld = Field(res.fields[0], cfg.t, cfg.dx, 1, int(round(cfg.N * cfg.nx)))
    return fld, float(res.A[0, 0])
