"""Green kernels of the fractional heat operator, the Gaussian heat kernel and
the pinned (bridge) kernel.

Conventions: ``G_alpha(t, .)`` has Fourier symbol ``exp(-t |xi|^alpha)``, so
``G_2(t, .)`` is the normal density with variance ``2t``. The heat kernel
``p_t`` is the normal density with variance ``t`` per coordinate.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, signal, special

from .errors import DomainError

# Fourier cutoff: exp(-XI_EXPONENT) is far below double-precision relevance.
XI_EXPONENT = 40.0

_TABLE_POINTS = 2 ** 20
_TABLE_XI_STEP = 1.0e-3


def _check_alpha(alpha):
    if not (0.0 < alpha <= 2.0) or not np.isfinite(alpha):
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")


def _check_time(t, name="t"):
    if not t > 0:
        raise DomainError(f"{name} must be positive, got {t}")


def tail_constant(alpha):
    """Constant ``c`` in ``g_alpha(x) ~ c |x|^(-1-alpha)`` for ``alpha < 2``."""
    _check_alpha(alpha)
    if alpha == 2.0:
        return 0.0
    return special.gamma(1.0 + alpha) * np.sin(np.pi * alpha / 2.0) / np.pi


def fourier_cutoff(alpha):
    """Frequency beyond which ``exp(-xi^alpha)`` is negligible."""
    return XI_EXPONENT ** (1.0 / alpha)


def _density_quad(alpha, x):
    x = abs(float(x))
    xi_max = fourier_cutoff(alpha)
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=500)
    fun = lambda s: np.exp(-s ** alpha)
    if x == 0.0:
        val, _ = integrate.quad(fun, 0.0, xi_max, **opts)
    else:
        val, _ = integrate.quad(fun, 0.0, xi_max, weight="cos", wvar=x, **opts)
    return max(val / np.pi, 0.0)


def _closed_form_density(alpha, x):
    x = np.asarray(x, dtype=float)
    if alpha == 2.0:
        return np.exp(-x * x / 4.0) / np.sqrt(4.0 * np.pi)
    if alpha == 1.0:
        return 1.0 / (np.pi * (1.0 + x * x))
    return None


def eval_stable_density(alpha, x, method="exact"):
    """Symmetric alpha-stable density ``g_alpha(x) = G_alpha(1, x)``.

    ``method="exact"`` uses the closed forms for alpha in {1, 2} and adaptive
    Fourier-cosine quadrature otherwise; ``"quad"`` forces quadrature for every
    alpha; ``"table"`` interpolates the cached FFT table.
    """
    _check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise DomainError("x must be finite")
    if method == "exact":
        closed = _closed_form_density(alpha, x_arr)
        if closed is not None:
            return closed if x_arr.ndim else float(closed)
        method = "quad"
    if method == "quad":
        out = np.vectorize(lambda v: _density_quad(alpha, v), otypes=[float])(x_arr)
        return out if x_arr.ndim else float(out)
    if method == "table":
        out = stable_table(alpha)(x_arr)
        return out if x_arr.ndim else float(out)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class StableDensity:
    """Tabulated ``g_alpha`` on ``grid`` (x >= 0, by symmetry).

    Values beyond the grid follow the power-law tail ``c |x|^(-1-alpha)``
    (zero for alpha = 2).
    """

    alpha: float
    grid: np.ndarray
    values: np.ndarray
    tail_cutoff: float
    tail_c: float = field(default=0.0)

    def __call__(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        out = np.interp(ax, self.grid, self.values)
        far = ax > self.grid[-1]
        if np.any(far):
            if self.tail_c > 0:
                out = np.where(far, self.tail_c * np.maximum(ax, 1.0) ** (-1.0 - self.alpha), out)
            else:
                out = np.where(far, 0.0, out)
        return out

    def mass(self):
        """Trapezoid mass over the symmetric tabulated range."""
        return 2.0 * integrate.trapezoid(self.values, self.grid)

    def tail_mass(self):
        """Mass beyond the tabulated radius, from the tail asymptotic."""
        if self.tail_c == 0.0:
            r = self.grid[-1]
            return float(special.erfc(r / 2.0))
        r = self.grid[-1]
        return 2.0 * self.tail_c * r ** (-self.alpha) / self.alpha


def tabulate_stable_density(alpha, n_points=_TABLE_POINTS, xi_step=_TABLE_XI_STEP):
    """Tabulate ``g_alpha`` by a trapezoid Fourier inversion evaluated with one FFT.

    Only the first quarter of the FFT period is kept, so aliased copies of the
    heavy tail contribute at most ``g_alpha`` evaluated beyond that radius.
    Small negative ripples are clamped to zero.
    """
    _check_alpha(alpha)
    half = n_points // 2
    xi = xi_step * np.arange(half + 1)
    spec = np.exp(-xi ** alpha)
    vals = np.fft.irfft(spec, n_points) * n_points * xi_step / (2.0 * np.pi)
    dx = 2.0 * np.pi / (n_points * xi_step)
    keep = n_points // 4
    grid = dx * np.arange(keep)
    values = np.maximum(vals[:keep], 0.0)
    return StableDensity(alpha=float(alpha), grid=grid, values=values,
                         tail_cutoff=float(xi[-1]), tail_c=tail_constant(alpha))


@lru_cache(maxsize=16)
def stable_table(alpha):
    """Cached table for ``alpha``; closed forms are tabulated directly."""
    _check_alpha(alpha)
    closed = _closed_form_density(alpha, 0.0)
    if closed is None:
        return tabulate_stable_density(alpha)
    grid = np.linspace(0.0, 2000.0, 400_001)
    return StableDensity(alpha=float(alpha), grid=grid,
                         values=_closed_form_density(alpha, grid),
                         tail_cutoff=np.inf, tail_c=tail_constant(alpha))


def eval_green(alpha, t, x, method="exact"):
    """``G_alpha(t, x) = t^(-1/alpha) g_alpha(x t^(-1/alpha))``."""
    _check_alpha(alpha)
    _check_time(t)
    scale = t ** (1.0 / alpha)
    return eval_stable_density(alpha, np.asarray(x, dtype=float) / scale, method) / scale


# beyond this |x| the asymptotic tail series is accurate to ~1e-14
_CDF_SERIES_FROM = 20.0


def stable_cdf(alpha, x):
    """Distribution function of ``g_alpha``."""
    _check_alpha(alpha)
    x = float(x)
    if alpha == 2.0:
        return float(special.ndtr(x / np.sqrt(2.0)))
    if alpha == 1.0:
        return 0.5 + np.arctan(x) / np.pi
    if x == 0.0:
        return 0.5
    if abs(x) >= _CDF_SERIES_FROM:
        k = np.arange(1, 13)
        terms = (-1.0) ** (k + 1) * np.exp(special.gammaln(k * alpha) - special.gammaln(k + 1.0)) \
            * np.sin(k * np.pi * alpha / 2.0) * abs(x) ** (-k * alpha)
        upper = float(np.sum(terms)) / np.pi
        return 1.0 - upper if x > 0 else upper
    xi_max = fourier_cutoff(alpha)
    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=500)
    # sin(x xi)/xi is smooth at 0; on [1, xi_max] use the sine-weighted rule.
    head, _ = integrate.quad(lambda s: np.exp(-s ** alpha) * x * np.sinc(x * s / np.pi),
                             0.0, 1.0, **opts)
    tail, _ = integrate.quad(lambda s: np.exp(-s ** alpha) / s, 1.0, xi_max,
                             weight="sin", wvar=x, **opts)
    return float(np.clip(0.5 + (head + tail) / np.pi, 0.0, 1.0))


def eval_heat(t, x, d=1):
    """Heat kernel ``p_t(x) = (2 pi t)^(-d/2) exp(-|x|^2 / (2t))``.

    For ``d > 1`` the last axis of ``x`` holds the coordinates.
    """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if d == 1:
        r2 = x * x
    else:
        if x.shape[-1] != d:
            raise DomainError(f"last axis of x must have length {d}")
        r2 = np.sum(x * x, axis=-1)
    out = np.exp(-r2 / (2.0 * t)) / (2.0 * np.pi * t) ** (d / 2.0)
    return out if np.ndim(out) else float(out)


def eval_pinned(s, t, x, y):
    """Bridge kernel ``p_{s(t-s)/t}(y - s x / t)`` for ``0 < s < t``."""
    if not (0.0 < s < t):
        raise DomainError(f"need 0 < s < t, got s={s}, t={t}")
    return eval_heat(s * (t - s) / t, np.asarray(y, dtype=float) - s * np.asarray(x, dtype=float) / t)


def half_power_integral(alpha, t, x_max=4000.0, dx=0.005):
    """``int G_alpha(t, x)^(1/2) dx`` by trapezoid plus the analytic tail.

    Requires alpha > 1 so that the square-root tail is integrable.
    """
    _check_alpha(alpha)
    _check_time(t)
    if alpha <= 1.0:
        raise DomainError("the half-power integral diverges for alpha <= 1")
    x = np.arange(0.0, x_max + dx / 2, dx)
    scale = t ** (1.0 / alpha)
    vals = np.sqrt(stable_table(alpha)(x / scale) / scale)
    body = 2.0 * integrate.trapezoid(vals, x)
    if alpha == 2.0:
        return body
    # G(t, x) ~ c t x^(-1-alpha) for x much larger than t^(1/alpha).
    e = (alpha - 1.0) / 2.0
    tail = np.sqrt(tail_constant(alpha) * t) * x_max ** (-e) / e
    return body + 2.0 * tail


def pointwise_bound_constant(alpha, times, xs):
    """Smallest ``C`` with ``G^2 <= C t^(-1/alpha) G`` on the probe grid."""
    best = 0.0
    for t in times:
        g = eval_green(alpha, t, np.asarray(xs), method="table")
        best = max(best, float(np.max(g * t ** (1.0 / alpha))))
    return best


# ---------------------------------------------------------------- grid rows

def grid_frequencies(n, dx):
    """Angular frequencies of a periodic grid with ``n`` cells of width ``dx``."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=dx)


def grid_offsets(n, dx):
    """Signed offsets in FFT order: 0, dx, ..., then negative offsets."""
    k = np.arange(n)
    k = np.where(k <= n // 2, k, k - n)
    return k * dx


@dataclass(frozen=True)
class KernelTable:
    """One-step kernel sampled at periodic grid offsets (FFT order).

    ``row`` is nonnegative with ``sum(row) * dx**d == 1 - eps_trunc``;
    ``params`` records the time increment (and pin data for the bridge).
    """

    kind: str
    params: dict
    row: np.ndarray
    dx: float
    eps_trunc: float
    d: int = 1

    def mass(self):
        return float(self.row.sum() * self.dx ** self.d)

    def symbol(self, n=None):
        """Exact Fourier multiplier of the kernel on an ``n``-cell periodic grid."""
        n = self.row.shape[0] if n is None else n
        w = grid_frequencies(n, self.dx)
        return kernel_symbol(self.kind, w, **self.params)

    def convolve(self, values):
        """Circular convolution ``sum_j K(x - y_j) v_j dx^d`` along the last axes."""
        axes = tuple(range(-self.d, 0))
        k = np.fft.rfftn(self.row, axes=tuple(range(self.d)))
        v = np.fft.rfftn(values, axes=axes)
        shape = values.shape[-self.d:]
        return np.fft.irfftn(v * k, s=shape, axes=axes) * self.dx ** self.d


def kernel_symbol(kind, w, dt=None, alpha=None, s=None, t=None, x=None):
    """Fourier symbol of a one-step kernel at angular frequency ``w``."""
    w = np.asarray(w, dtype=float)
    if kind == "fractional":
        return np.exp(-dt * np.abs(w) ** alpha)
    if kind == "heat":
        return np.exp(-0.5 * dt * w * w)
    if kind == "pinned":
        b = s * (t - s) / t
        return np.exp(-0.5 * b * w * w)
    raise ValueError(f"unknown kernel kind {kind!r}")


def _finish_row(kind, params, row, dx, tail, d=1):
    row = np.maximum(row, 0.0)
    total = row.sum() * dx ** d
    if total <= 0:
        raise DomainError("kernel row has no resolved mass; refine the grid")
    eps = float(min(max(tail, 0.0), 1.0))
    row = row * ((1.0 - eps) / total)
    return KernelTable(kind=kind, params=params, row=row, dx=dx, eps_trunc=eps, d=d)


def fractional_kernel(alpha, dt, dx, n):
    """Row of ``G_alpha(dt, .)`` on an ``n``-cell periodic grid."""
    _check_alpha(alpha)
    _check_time(dt, "dt")
    off = grid_offsets(n, dx)
    scale = dt ** (1.0 / alpha)
    row = stable_table(alpha)(off / scale) / scale
    radius = (n // 2) * dx / scale
    tail = 1.0 - (2.0 * stable_cdf(alpha, radius) - 1.0)
    return _finish_row("fractional", {"dt": dt, "alpha": alpha}, row, dx, tail)


def heat_kernel(dt, dx, n, d=1):
    """Row of ``p_dt`` on an ``n``-cell periodic grid (``n**d`` cells for d=2)."""
    _check_time(dt, "dt")
    off = grid_offsets(n, dx)
    row1 = eval_heat(dt, off)
    tail1 = float(special.erfc((n // 2) * dx / np.sqrt(2.0 * dt)))
    if d == 1:
        return _finish_row("heat", {"dt": dt}, row1, dx, tail1)
    row = np.multiply.outer(row1, row1)
    return _finish_row("heat", {"dt": dt}, row, dx, 1.0 - (1.0 - tail1) ** 2, d=2)


def pinned_kernel(s, t, dx, n, x=0.0):
    """Row of ``p_{s(t-s)/t}`` centred at the pin point ``s x / t``."""
    if not (0.0 < s < t):
        raise DomainError(f"need 0 < s < t, got s={s}, t={t}")
    b = s * (t - s) / t
    off = grid_offsets(n, dx)
    tail = float(special.erfc((n // 2) * dx / np.sqrt(2.0 * b)))
    return _finish_row("pinned", {"s": s, "t": t, "x": x}, eval_heat(b, off), dx, tail)


# ---------------------------------------------------------------- identities

def semigroup_gap(alpha, s, t, dx=0.01, half_width=2000.0):
    """L1 distance on a grid between ``G(s) * G(t)`` and ``G(s + t)``."""
    x = np.arange(-half_width, half_width + dx / 2, dx)
    method = "exact" if alpha in (1.0, 2.0) else "table"
    a = eval_green(alpha, s, x, method)
    b = eval_green(alpha, t, x, method)
    conv = signal.fftconvolve(a, b, mode="same") * dx
    c = eval_green(alpha, s + t, x, method)
    return float(np.sum(np.abs(conv - c)) * dx)


def green_mass(alpha, t):
    """``int G_alpha(t, x) dx``: tabulated mass plus the analytic tail beyond the table."""
    tab = stable_table(alpha)
    return tab.mass() + tab.tail_mass()


def identity_residuals(alpha, t=1.0):
    """Residuals of the kernel identities as rows
    ``(identity, alpha, t, residual, tolerance, pass)``."""
    rows = []

    def add(name, a, resid, tol):
        rows.append((name, float(a), float(t), float(resid), float(tol), bool(resid < tol)))

    add("semigroup", alpha, semigroup_gap(alpha, t, t), 1e-6 if alpha == 2.0 else 1e-3)
    add("unit_mass", alpha, abs(green_mass(alpha, t) - 1.0), 1e-4)
    if alpha > 1.0:
        ratio = half_power_integral(alpha, 16.0 * t) / half_power_integral(alpha, t)
        add("half_power_scaling", alpha, abs(ratio / 16.0 ** (1.0 / (2.0 * alpha)) - 1.0), 1e-2)
    if alpha in (1.0, 2.0):
        xs = np.linspace(0.0, 5.0, 11)
        num = np.array([eval_stable_density(alpha, v, method="quad") for v in xs])
        add("closed_form", alpha, np.max(np.abs(num - _closed_form_density(alpha, xs))), 1e-8)
    # heat kernel: scaling p_t(theta x) = theta^-d p_{t/theta^2}(x) and Chapman-Kolmogorov
    theta, xv = 2.0, 1.0
    add("heat_scaling", 2.0, abs(eval_heat(t, theta * xv) - eval_heat(t / theta ** 2, xv) / theta), 1e-12)
    y = np.linspace(-40.0, 40.0, 8001)
    ck = integrate.simpson(eval_heat(t, 0.7 - y) * eval_heat(0.5 * t, y), x=y)
    add("heat_chapman_kolmogorov", 2.0, abs(ck - eval_heat(1.5 * t, 0.7)), 1e-10)
    return rows
