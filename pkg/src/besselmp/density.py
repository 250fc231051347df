"""Modified Bessel function I_nu, Bessel transition densities and time-integral limits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .core import Dimension, DomainError, as_dimension

NU_MIN, NU_MAX = -1.0, 2.0
CROSSOVER = 20.0
_SERIES_MAX_TERMS = 400
_ASYMPTOTIC_MAX_TERMS = 80
_GL_ORDER = 16


class QuadratureError(RuntimeError):
    pass


def gamma_fn(a: float) -> float:
    return math.gamma(a)


def rgamma(a: float) -> float:
    """``1 / Gamma(a)``, zero at the poles."""
    if a <= 0 and a == math.floor(a):
        return 0.0
    return 1.0 / math.gamma(a)


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not (NU_MIN <= nu <= NU_MAX):
        raise DomainError(f"order nu={nu} outside supported range [{NU_MIN}, {NU_MAX}]")
    return nu


def _series(nu: float, z: np.ndarray) -> np.ndarray:
    # integer negative order: I_{-n} = I_n
    if nu < 0 and nu == math.floor(nu):
        nu = -nu
    half = z / 2.0
    quarter = half * half
    with np.errstate(divide="ignore"):
        term = np.power(half, nu) * rgamma(nu + 1.0)
    total = term.copy()
    for k in range(_SERIES_MAX_TERMS):
        term = term * quarter / ((k + 1.0) * (k + 1.0 + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _asymptotic_scaled(nu: float, z: np.ndarray) -> np.ndarray:
    """``I_nu(z) e^{-z}`` from the large-argument expansion (terms stop at their minimum)."""
    mu = 4.0 * nu * nu
    total = np.ones_like(z)
    term = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_MAX_TERMS):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        active &= np.abs(nxt) < np.abs(term)
        if not active.any():
            break
        term = np.where(active, nxt, term)
        total = total + np.where(active, nxt, 0.0)
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total / np.sqrt(2.0 * np.pi * z)


def bessel_I_scaled(nu: float, z):
    """``I_nu(z) * exp(-z)`` for ``z >= 0``."""
    nu = _check_nu(nu)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise DomainError("bessel_I needs z >= 0")
    zz = np.atleast_1d(z_arr)
    out = np.empty_like(zz)
    small = zz <= CROSSOVER
    if small.any():
        out[small] = _series(nu, zz[small]) * np.exp(-zz[small])
    if (~small).any():
        out[~small] = _asymptotic_scaled(nu, zz[~small])
    return out.reshape(z_arr.shape) if z_arr.ndim else float(out[0])


def bessel_I(nu: float, z):
    """Modified Bessel function of the first kind, ``nu in [-1, 2]``, ``z >= 0``.

    Power series up to ``z = 20``, large-argument expansion above.
    """
    nu = _check_nu(nu)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise DomainError("bessel_I needs z >= 0")
    zz = np.atleast_1d(z_arr)
    out = np.empty_like(zz)
    small = zz <= CROSSOVER
    if small.any():
        out[small] = _series(nu, zz[small])
    if (~small).any():
        big = zz[~small]
        out[~small] = _asymptotic_scaled(nu, big) * np.exp(big)
    return out.reshape(z_arr.shape) if z_arr.ndim else float(out[0])


# --------------------------------------------------------------------------
# densities

@dataclass(frozen=True)
class DensitySpec:
    delta: Dimension
    x0: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, "delta", as_dimension(self.delta))
        if self.x0 < 0:
            raise DomainError("x0 must be >= 0")
        if not self.t > 0:
            raise DomainError("t must be > 0")

    @property
    def nu(self) -> float:
        return self.delta.nu


def bes_density(spec: DensitySpec, y):
    """Density of ``X_t`` for the Bessel process started at ``x0``.

    For ``delta == 0`` and ``x0 > 0`` this is the absolutely continuous part
    only; the remaining mass sits at 0 (see :func:`atom_at_zero`).
    """
    nu, x0, t = spec.nu, spec.x0, spec.t
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise DomainError("density argument must be >= 0")
    yy = np.atleast_1d(y_arr)
    power = 2.0 * nu + 1.0  # = delta - 1
    if x0 == 0.0:
        if spec.delta.delta == 0.0:
            raise DomainError("BES(0) started at 0 is the null process; no density")
        const = 2.0 ** (-nu) * t ** (-(nu + 1.0)) * rgamma(nu + 1.0)
        with np.errstate(divide="ignore"):
            out = const * np.power(yy, power) * np.exp(-yy * yy / (2.0 * t))
    else:
        out = np.empty_like(yy)
        pos = yy > 0
        yp = yy[pos]
        out[pos] = ((yp / t) * (yp / x0) ** nu * np.exp(-(x0 - yp) ** 2 / (2.0 * t))
                    * bessel_I_scaled(nu, x0 * yp / t))
        # y -> 0 limit of the expression above
        lead = 2.0 ** (-nu) * t ** (-(nu + 1.0)) * rgamma(nu + 1.0) * math.exp(-x0 * x0 / (2 * t))
        if lead == 0.0 or power > 0:
            zero_val = 0.0
        elif power == 0:
            zero_val = lead
        else:
            zero_val = math.inf
        out[~pos] = zero_val
    return out.reshape(y_arr.shape) if y_arr.ndim else float(out[0])


def _upper_support(spec: DensitySpec) -> float:
    return spec.x0 + 12.0 * math.sqrt(spec.t) + 1.0


def total_mass(spec: DensitySpec) -> float:
    """``int_0^inf p_t(y) dy`` by adaptive quadrature."""
    table = _cdf_table(spec.delta.delta, spec.x0, spec.t)
    return float(table[1][-1])


def atom_at_zero(spec: DensitySpec) -> float:
    """Mass of ``X_t`` at 0: nonzero only when ``delta == 0``."""
    if spec.delta.delta > 0:
        return 0.0
    if spec.x0 == 0:
        return 1.0
    return max(0.0, 1.0 - total_mass(spec))


def _near_zero_coefficient(spec: DensitySpec) -> float:
    """``c`` in ``p_t(y) ~ c y^(delta-1)`` as ``y -> 0``."""
    nu = spec.nu
    return (2.0 ** (-nu) * spec.t ** (-(nu + 1.0)) * rgamma(nu + 1.0)
            * math.exp(-spec.x0 ** 2 / (2.0 * spec.t)))


@lru_cache(maxsize=64)
def _cdf_table(delta: float, x0: float, t: float):
    """Cumulative integral of the density on graded nodes.

    Gauss-Legendre on each cell; the first cell ``[0, y_1]`` uses the
    leading small-``y`` behaviour, accurate to ``O(y_1^2)`` relative.
    """
    spec = DensitySpec(delta, x0, t)
    ymax = _upper_support(spec)
    scale = math.sqrt(t)
    geo = scale * np.geomspace(1e-14, 0.05, 400)
    lin = np.linspace(0.05 * scale, ymax, 3000)
    nodes = np.unique(np.concatenate([geo, lin]))
    gx, gw = np.polynomial.legendre.leggauss(_GL_ORDER)
    a, b = nodes[:-1, None], nodes[1:, None]
    pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
    cells = (0.5 * (b - a) * gw * bes_density(spec, pts)).sum(axis=1)
    if delta > 0:
        first = _near_zero_coefficient(spec) * nodes[0] ** delta / delta
    else:
        first = 0.0
    nodes = np.concatenate([[0.0], nodes])
    cum = np.concatenate([[0.0], first + np.concatenate([[0.0], np.cumsum(cells)])])
    return nodes, cum


def bes_cdf(spec: DensitySpec, y):
    """``P(X_t <= y)``: atom at zero plus the integrated density (table + PCHIP)."""
    nodes, cum = _cdf_table(spec.delta.delta, spec.x0, spec.t)
    atom = atom_at_zero(spec)
    interp = PchipInterpolator(nodes, cum, extrapolate=False)
    y_arr = np.asarray(y, dtype=float)
    vals = interp(np.clip(y_arr, 0.0, nodes[-1]))
    vals = np.where(y_arr >= nodes[-1], cum[-1], vals)
    out = np.where(y_arr < 0, 0.0, atom + vals)
    return out if out.ndim else float(out)


def bes_cdf_left(spec: DensitySpec, y):
    """Left limit ``P(X_t < y)``; differs from :func:`bes_cdf` only at an atom."""
    y_arr = np.asarray(y, dtype=float)
    out = np.where(y_arr <= 0, 0.0, bes_cdf(spec, y_arr))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# weighted time integrals

def weighted_time_integral(delta, x0: float, T: float, x: float) -> float:
    """``x^(1-delta) * int_0^T p_t(x) dt`` for ``x > 0``.

    The time integral is rewritten with ``t = x^2 / s`` and integrated in
    ``u = log s``, which removes the boundary layer at ``t -> 0``.
    """
    d = as_dimension(delta)
    if not x > 0 or not T > 0:
        raise DomainError("need x > 0 and T > 0")
    if d.delta == 0.0 and x0 == 0.0:
        raise DomainError("null process has no density")

    def p_at(t):
        return float(bes_density(DensitySpec(d, x0, t), x))

    def integrand(u):
        s = math.exp(u)
        t = x * x / s
        # dt = x^2 / s^2 ds = t du
        return p_at(t) * t

    u_lo = math.log(x * x / T)
    gap = min(x, abs(x0 - x)) if x0 > 0 else x
    gap = max(gap, 1e-300)
    # exp(-gap^2 / (2 t)) < e^-700 once t < gap^2 / 1400
    u_hi = max(u_lo + 1.0, math.log(x * x * 1400.0 / (gap * gap)))
    res = integrate.quad(integrand, u_lo, u_hi, limit=500, epsabs=0.0, epsrel=1e-10,
                         full_output=1)
    val, err = res[0], res[1]
    if len(res) > 3:
        raise QuadratureError(
            f"quadrature did not converge (delta={d.delta}, x0={x0}, T={T}, x={x}): "
            f"value={val}, error estimate={err}, message={res[3]!r}"
        )
    return x ** (1.0 - d.delta) * val


def p319_limit(delta, t: float) -> float:
    """Small-``x`` limit of :func:`weighted_time_integral` for a Bessel process from 0."""
    d = as_dimension(delta).delta
    if not (0.0 < d <= 1.0):
        raise DomainError("limit defined for delta in (0, 1]")
    if not t > 0:
        raise DomainError("t must be > 0")
    return 2.0 ** (2.0 - d / 2.0) / gamma_fn(d / 2.0) * t ** (1.0 - d / 2.0) / (2.0 - d)


def local_time_limit(delta, x0: float, T: float) -> float:
    """``lim_{x->0+} x^(1-delta) int_0^T p_t(x) dt`` for any ``x0 >= 0``.

    Uses ``x^(1-delta) p_t(x) -> 2^(-nu) t^(-nu-1) exp(-x0^2/2t) / Gamma(nu+1)``.
    Equals :func:`p319_limit` when ``x0 == 0``.
    """
    d = as_dimension(delta)
    nu = d.nu
    c = 2.0 ** (-nu) * rgamma(nu + 1.0)
    if c == 0.0:
        return 0.0
    f = lambda t: t ** (-nu - 1.0) * math.exp(-x0 * x0 / (2.0 * t)) if t > 0 else 0.0
    return c * integrate.quad(f, 0.0, T, limit=400, epsabs=0.0, epsrel=1e-12)[0]
