"""Deterministic second moments and covariances of the linear equation.

By the Walsh isometry, for a flat initial condition

    m2(s) = 1 + int_0^s G_alpha(2(s - r), 0) m2(r) dr                (white noise, d = 1)
    Sigma(s, z) = int_0^s [p_{2(s - r)} * (f (1 + Sigma(r, .)))](z) dr  (colored noise)

where ``Sigma(s, z) = Cov[u(s, x), u(s, x + z)]``. In the white-noise case
``Sigma(t, z) = int_0^t G_alpha(2(t - r), z) m2(r) dr``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from . import kernels
from .errors import DomainError, ExtentError
from .noise import NoiseSpec


@dataclass
class CovarianceSolution:
    """Second-moment curve and covariance table at the terminal time.

    For d = 1, ``z`` holds nonnegative offsets and ``Sigma`` the matching
    values (even extension implied). For d = 2, ``z`` holds the signed offsets
    of one axis (FFT order) and ``Sigma`` is the 2-D table.
    """

    case: int
    alpha: float
    t: float
    times: np.ndarray
    m2: np.ndarray
    z: np.ndarray
    Sigma: np.ndarray
    residual: float
    d: int = 1
    spec: NoiseSpec = field(default=None)

    @property
    def dz(self):
        return float(abs(self.z[1] - self.z[0]))

    @property
    def extent(self):
        return float(np.max(np.abs(self.z)))


def _green_zero_coefficient(alpha):
    """``c`` with ``G_alpha(2 tau, 0) = c tau^(-1/alpha)``."""
    return 2.0 ** (-1.0 / alpha) * special.gamma(1.0 + 1.0 / alpha) / np.pi


def _product_weights(alpha, n):
    """Exact integrals of ``v^(-1/alpha)`` against linear hat pieces.

    Returns arrays ``(near, far)`` indexed by ``k``: over ``v in [k, k+1]`` the
    weight on the endpoint at ``v = k`` is ``near[k]`` and at ``v = k + 1`` is
    ``far[k]``.
    """
    a = 1.0 / alpha
    b = 1.0 - a
    k = np.arange(n, dtype=float)
    i0 = ((k + 1.0) ** b - k ** b) / b
    i1 = ((k + 1.0) ** (b + 1.0) - k ** (b + 1.0)) / (b + 1.0) - k * i0
    return i0 - i1, i1


def solve_second_moment(alpha=2.0, t=1.0, n_steps=2000, noise_scale=1.0):
    """White-noise second moment ``m2`` on a uniform mesh (product trapezoid).

    Returns ``(times, m2, residual)``; the residual is the largest absolute
    defect when the solution is substituted back into the discrete equation.
    """
    if not (1.0 < alpha <= 2.0):
        raise DomainError("the white-noise Volterra kernel needs alpha in (1, 2]")
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    times = np.linspace(0.0, t, n_steps + 1)
    if t == 0:
        return times[:1], np.ones(1), 0.0
    h = t / n_steps
    coef = noise_scale ** 2 * _green_zero_coefficient(alpha) * h ** (1.0 - 1.0 / alpha)
    near, far = _product_weights(alpha, n_steps)
    m = np.empty(n_steps + 1)
    m[0] = 1.0
    for n in range(1, n_steps + 1):
        k = n - 1 - np.arange(n - 1)          # intervals j = 0..n-2
        known = np.dot(near[k], m[1:n]) + np.dot(far[k], m[0:n - 1]) + far[0] * m[n - 1]
        m[n] = (1.0 + coef * known) / (1.0 - coef * near[0])
    residual = _volterra_residual(m, coef, near, far)
    return times, m, residual


def _volterra_residual(m, coef, near, far):
    n_steps = m.size - 1
    worst = 0.0
    for n in range(1, n_steps + 1):
        k = n - 1 - np.arange(n)
        rhs = 1.0 + coef * (np.dot(near[k], m[1:n + 1]) + np.dot(far[k], m[0:n]))
        worst = max(worst, abs(m[n] - rhs) / abs(m[n]))
    return worst


def richardson_second_moment(alpha=2.0, t=1.0, n_steps=1000):
    """Richardson-extrapolated ``m2(t)`` from three nested meshes.

    The observed order is estimated from the three solves.
    """
    vals = [solve_second_moment(alpha, t, n_steps * 2 ** j)[1][-1] for j in range(3)]
    d1, d2 = vals[1] - vals[0], vals[2] - vals[1]
    if d1 == 0 or d2 == 0:
        return vals[2], np.inf
    order = np.log2(abs(d1 / d2))
    return vals[2] + d2 / (2.0 ** order - 1.0), order


def _green_tau_nodes(alpha, t, panels=40, per_panel=16):
    """Quadrature in ``tau`` for ``int_0^t G(2 tau, z) m(t - tau) d tau``.

    With ``tau = t u^q``, ``q = alpha / (alpha - 1)``, the ``tau^(-1/alpha)``
    singularity at ``z = 0`` cancels; geometric panels in ``u`` resolve the
    boundary layer of small nonzero ``z``.
    """
    q = alpha / (alpha - 1.0)
    edges = np.concatenate([[0.0], 0.5 ** np.arange(panels - 1, -1, -1)])
    x, w = np.polynomial.legendre.leggauss(per_panel)
    us, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        us.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    u = np.concatenate(us)
    wu = np.concatenate(ws)
    tau = t * u ** q
    return tau, wu * t * q * u ** (q - 1.0)


def _white_covariance_table(alpha, t, times, m, z, noise_scale):
    tau, w = _green_tau_nodes(alpha, t)
    m_at = np.interp(t - tau, times, m)
    table = kernels.stable_table(alpha)
    out = np.empty(z.size)
    chunk = max(1, 4_000_000 // tau.size)
    for lo in range(0, z.size, chunk):
        zz = z[lo:lo + chunk, None]
        scale = (2.0 * tau[None, :]) ** (1.0 / alpha)
        if alpha == 2.0:
            g = np.exp(-zz * zz / (8.0 * tau[None, :])) / np.sqrt(8.0 * np.pi * tau[None, :])
        else:
            g = table(zz / scale) / scale
        out[lo:lo + chunk] = g @ (w * m_at)
    return noise_scale ** 2 * out


def default_extent(N, t):
    """Offset range ``2N + 8 sqrt(2t)`` used for covariance tables."""
    return 2.0 * N + 8.0 * np.sqrt(2.0 * t)


# largest covariance table (grid points) solve_covariance will allocate
MAX_TABLE_POINTS = 2 ** 25


def solve_covariance(case=1, alpha=2.0, t=1.0, N=None, extent=None, dz=0.05,
                     n_steps=None, spec=None, d=1, noise_scale=1.0):
    """Covariance table ``Sigma(t, .)`` for case 1 (white) or case 2 (colored).

    The table covers offsets up to ``extent`` (default ``2N + 8 sqrt(2t)``).
    """
    if extent is None:
        if N is None:
            raise DomainError("give either N or extent")
        extent = default_extent(N, t)
    points = (2.0 * extent / dz) ** d
    if points > MAX_TABLE_POINTS:
        raise ExtentError(f"a table of extent {extent:.3g} at dz = {dz} needs {points:.3g} points "
                          f"(limit {MAX_TABLE_POINTS}); use a coarser dz")
    if case == 1:
        if d != 1:
            raise DomainError("case 1 is one-dimensional")
        n_steps = 2000 if n_steps is None else n_steps
        times, m, residual = solve_second_moment(alpha, t, n_steps, noise_scale)
        z = np.arange(0.0, extent + 0.5 * dz, dz)
        sig = np.empty(z.size)
        sig[0] = m[-1] - 1.0
        sig[1:] = _white_covariance_table(alpha, t, times, m, z[1:], noise_scale)
        return CovarianceSolution(1, alpha, t, times, m, z, sig, residual, 1, NoiseSpec("white"))
    if case == 2:
        if spec is None or not spec.colored:
            raise DomainError("case 2 needs a colored noise spec")
        if spec.d != d:
            spec = NoiseSpec(spec.kind, d)
        return _colored_covariance(t, extent, dz, 200 if n_steps is None else n_steps,
                                   spec, d, noise_scale)
    raise DomainError(f"no covariance oracle for case {case}")


def _exp_trapezoid_weights(a, h):
    """Weights of the exponential trapezoid rule for ``y' = -a y + g``."""
    x = a * h
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    phi1 = np.where(small, h * (1.0 - x / 2.0 + x * x / 6.0), h * (-np.expm1(-xs)) / xs)
    w1 = np.where(small, h * (0.5 - x / 6.0 + x * x / 24.0), h * (xs + np.expm1(-xs)) / (xs * xs))
    return np.exp(-x), phi1 - w1, w1


def _colored_covariance(t, extent, dz, n_steps, spec, d, noise_scale):
    n_half = int(np.ceil(extent / dz))
    n = sfft.next_fast_len(2 * n_half, real=True)
    n += n % 2
    off = kernels.grid_offsets(n, dz)
    w = kernels.grid_frequencies(n, dz)
    if d == 1:
        fz = spec.f(off)
        a = w * w
        fft, ifft = np.fft.rfft, np.fft.irfft
        a = a[: n // 2 + 1]
    else:
        fz = np.multiply.outer(spec.f_axis(off), spec.f_axis(off))
        a = np.add.outer(w * w, (w * w)[: n // 2 + 1])
        fft, ifft = np.fft.rfft2, np.fft.irfft2
    fz = noise_scale ** 2 * fz
    shape = fz.shape
    h = t / n_steps
    decay, w0, w1 = _exp_trapezoid_weights(a, h)
    sig = np.zeros(shape)
    g_hat = fft(fz)
    times = np.linspace(0.0, t, n_steps + 1)
    m2 = np.empty(n_steps + 1)
    m2[0] = 1.0
    residual = 0.0
    for k in range(n_steps):
        base = decay * fft(sig) + w0 * g_hat
        new = sig
        for _ in range(50):
            nxt_hat = fft(fz * (1.0 + new))
            cand = ifft(base + w1 * nxt_hat, s=shape) if d == 2 else ifft(base + w1 * nxt_hat, n)
            change = np.max(np.abs(cand - new))
            new = cand
            if change < 1e-15 * max(1.0, np.max(np.abs(new))):
                break
        nxt_hat = fft(fz * (1.0 + new))
        check = ifft(base + w1 * nxt_hat, s=shape) if d == 2 else ifft(base + w1 * nxt_hat, n)
        residual = max(residual, float(np.max(np.abs(check - new))))
        sig, g_hat = new, nxt_hat
        m2[k + 1] = 1.0 + sig.flat[0]
    if d == 1:
        z = off[: n_half + 1]
        table = sig[: n_half + 1]
    else:
        z, table = off, sig
    return CovarianceSolution(2, 2.0, t, times, m2, z, table, residual, d, spec)


def variance_of_average(sol, N):
    """``sigma_N^2 = int_{[0,N]^d x [0,N]^d} Sigma(x - y) dx dy`` by trapezoid.

    Returns ``(sigma2, sigma2 / N^d)``.
    """
    if N <= 0:
        raise DomainError("N must be positive")
    if sol.d == 1:
        z, sig = np.asarray(sol.z), np.asarray(sol.Sigma)
        if z[-1] < N - 1e-9:
            raise ExtentError(f"covariance table reaches {z[-1]:.3g} < N = {N}")
        dz = z[1] - z[0]
        k = int(round(N / dz))
        zz, ss = z[: k + 1], sig[: k + 1]
        if abs(zz[-1] - N) > 1e-9 * max(1.0, N):
            raise DomainError("N must be a multiple of the table spacing")
        val = 2.0 * integrate.trapezoid((N - zz) * ss, zz)
        return val, val / N
    z = np.asarray(sol.z)
    if np.max(z) < N - 1e-9:
        raise ExtentError(f"covariance table reaches {np.max(z):.3g} < N = {N}")
    wt = np.clip(N - np.abs(z), 0.0, None)
    dz = sol.dz
    # Periodic table: every node gets the full trapezoid weight except the
    # two |z| = N nodes, whose weight vanishes anyway.
    val = float(wt @ sol.Sigma @ wt) * dz * dz
    return val, val / N ** 2


def integral_sigma(sol):
    """``int Sigma(t, z) dz`` over R^d from the table, with a tail estimate.

    The tail beyond the table edge extrapolates the local log-log slope.
    """
    if sol.d == 2:
        return float(np.sum(sol.Sigma)) * sol.dz ** 2
    z, sig = np.asarray(sol.z), np.asarray(sol.Sigma)
    body = 2.0 * integrate.trapezoid(sig, z)
    e1, e0 = z[-1], z[-1] / 2.0
    s1 = sig[-1]
    s0 = np.interp(e0, z, sig)
    if s1 <= 1e-13 * np.max(np.abs(sig)) or s0 <= 0:
        return float(body)
    p = np.log(s1 / s0) / np.log(e1 / e0)
    tail = s1 * e1 / (-p - 1.0) if p < -1.0 else np.inf
    return float(body + 2.0 * tail)


def limit_ratio_case1(alpha=2.0, t=1.0, n_steps=4000):
    """``int_0^t m2(s) ds``, the large-window limit of ``sigma_N^2 / N`` in case 1."""
    times, m, _ = solve_second_moment(alpha, t, n_steps)
    return float(integrate.trapezoid(m, times))
