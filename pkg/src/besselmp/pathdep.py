"""Path-dependent Bessel solver, assumption probes, coupling and the radial oracle.

The solver works on the squared process: it runs the Euler scheme for
``dS = gbar(t, S) dt + 2 sqrt|S| dW`` with ``gbar = bar_gamma(gamma, delta)``
from ``S_0 = x0^2`` and returns ``X = sqrt(S)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DomainError,
    PathEnsemble,
    PathFunctional,
    SamplePath,
    TimeGrid,
    as_dimension,
    bar_gamma,
    map_blocks,
)
from .schemes import (
    SchemeVariant,
    brownian_increments,
    euler_besq_block,
)

MOMENT_ORDERS = (3, 6)
MOMENT_BLOWUP = 1e12


def pathdep_block(x0: float, delta, gamma: PathFunctional, grid: TimeGrid, n: int,
                  rng: np.random.Generator,
                  variant=SchemeVariant.EULER_FULL_TRUNCATION) -> PathEnsemble:
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    d = as_dimension(delta)
    dw = brownian_increments(grid, n, rng)
    s = euler_besq_block(x0 * x0, bar_gamma(gamma, d), grid, dw, variant)
    return PathEnsemble(grid, np.sqrt(s), dw)


def pathdep_ensemble(x0: float, delta, gamma: PathFunctional, grid: TimeGrid, n_paths: int,
                     seed: int, variant=SchemeVariant.EULER_FULL_TRUNCATION,
                     threads: Optional[int] = None) -> PathEnsemble:
    parts = map_blocks(lambda n, rng: pathdep_block(x0, delta, gamma, grid, n, rng, variant),
                       n_paths, seed, threads)
    ens = PathEnsemble.concat(parts)
    return PathEnsemble(grid, ens.values, ens.noise_increments, seed)


def solve_pathdep_bessel(x0: float, delta, gamma: PathFunctional, grid: TimeGrid, seed: int,
                         variant=SchemeVariant.EULER_FULL_TRUNCATION) -> SamplePath:
    return pathdep_ensemble(x0, delta, gamma, grid, 1, seed, variant).path(0)


def sup_moments(X, orders: Sequence[int] = MOMENT_ORDERS) -> dict:
    """``E[sup_t |X_t|^m]`` per order; warns when an estimate blows up."""
    sup = np.abs(np.asarray(X.values)).max(axis=-1)
    out = {}
    for m in orders:
        val = float(np.mean(sup ** m))
        out[m] = val
        if not math.isfinite(val) or val > MOMENT_BLOWUP:
            warnings.warn(f"sup-moment of order {m} looks unbounded: {val}", RuntimeWarning)
    return out


# --------------------------------------------------------------------------
# assumption probes

@dataclass
class AssumptionReport:
    n_samples: int
    growth_gamma: float
    growth_bar: float
    lipschitz_gamma: float
    lipschitz_bar: float
    declared_growth: Optional[float]
    declared_lipschitz: Optional[float]
    growth_violated: bool
    lipschitz_violated: bool
    notes: list = field(default_factory=list)


def _random_paths(rng: np.random.Generator, n: int, times: np.ndarray) -> np.ndarray:
    """Mixture of smooth and rough paths with amplitudes spanning several decades."""
    m = times.size
    amp = 10.0 ** rng.uniform(-3, 2, size=(n, 1))
    smooth = (rng.normal(size=(n, 1))
              + rng.normal(size=(n, 1)) * np.sin(2 * np.pi * rng.uniform(0.2, 3, (n, 1)) * times)
              + rng.normal(size=(n, 1)) * times)
    rough = np.cumsum(rng.normal(size=(n, m)) * np.sqrt(np.r_[0.0, np.diff(times)]), axis=1)
    rough += rng.normal(size=(n, 1))
    pick = rng.uniform(size=(n, 1)) < 0.5
    return amp * np.where(pick, smooth, rough)


def probe_assumptions(gamma: PathFunctional, delta, n_samples: int = 2000, seed: int = 0,
                      grid: Optional[TimeGrid] = None) -> AssumptionReport:
    """Empirical growth and Lipschitz ratios of ``gamma`` and its induced ``gbar``.

    Growth of ``gamma`` is measured against ``1 + sup_{r<=s} sqrt|eta(r)|``,
    growth of ``gbar`` against ``1 + sup_{r<=s} |eta(r)|``.  Lipschitz ratios
    use ``|eta1(s) - eta2(s)| + int_0^s |eta1 - eta2| dr`` as denominator.
    """
    d = as_dimension(delta)
    grid = grid or TimeGrid.uniform(1.0, 32)
    rng = np.random.default_rng(seed)
    times = grid.times
    gbar = bar_gamma(gamma, d)
    eta1 = _random_paths(rng, n_samples, times)
    scale = 10.0 ** rng.uniform(-4, 0, size=(n_samples, 1)) * (1 + np.abs(eta1).max(axis=1, keepdims=True))
    eta2 = eta1 + scale * _random_paths(rng, n_samples, times) / 100.0
    gr_g = gr_b = lip_g = lip_b = 0.0
    dts = np.diff(times)
    for i in range(1, times.size):
        t = times[: i + 1]
        h1, h2 = eta1[:, : i + 1], eta2[:, : i + 1]
        g1, g2 = gamma(t, h1), gamma(t, h2)
        b1, b2 = gbar(t, h1), gbar(t, h2)
        gr_g = max(gr_g, float(np.max(np.abs(g1) / (1 + np.sqrt(np.abs(h1)).max(axis=1)))))
        gr_b = max(gr_b, float(np.max(np.abs(b1) / (1 + np.abs(h1).max(axis=1)))))
        diff = np.abs(h1 - h2)
        den = diff[:, -1] + (diff[:, :-1] * dts[:i]).sum(axis=1)
        ok = den > 0
        if ok.any():
            lip_g = max(lip_g, float(np.max(np.abs(g1 - g2)[ok] / den[ok])))
            lip_b = max(lip_b, float(np.max(np.abs(b1 - b2)[ok] / den[ok])))
    tol = 1e-9
    gv = gamma.growth_constant is not None and gr_g > gamma.growth_constant * (1 + tol) + tol
    lv = gamma.lipschitz_constant is not None and lip_g > gamma.lipschitz_constant * (1 + tol) + tol
    notes = []
    if gv:
        notes.append(f"observed growth {gr_g:.4g} exceeds declared {gamma.growth_constant}")
    if lv:
        notes.append(f"observed Lipschitz ratio {lip_g:.4g} exceeds declared {gamma.lipschitz_constant}")
    notes.append("ratios are lower bounds on the true constants (finite sample)")
    return AssumptionReport(n_samples, gr_g, gr_b, lip_g, lip_b, gamma.growth_constant,
                            gamma.lipschitz_constant, bool(gv), bool(lv), notes)


# --------------------------------------------------------------------------
# coupling

@dataclass
class CouplingReport:
    n_steps: int
    median: float
    q90: float
    maximum: float
    distances: np.ndarray = field(repr=False)


def _coupled(x0, d, gamma, grid, dw, variant_a, variant_b) -> CouplingReport:
    gbar = bar_gamma(gamma, d)
    sa = euler_besq_block(x0 * x0, gbar, grid, dw, variant_a)
    if SchemeVariant(variant_a) is SchemeVariant(variant_b):
        sb = sa
    else:
        sb = euler_besq_block(x0 * x0, gbar, grid, dw, variant_b)
    dist = np.abs(sa - sb).max(axis=1)
    return CouplingReport(grid.n_steps, float(np.median(dist)), float(np.quantile(dist, 0.9)),
                          float(dist.max()), dist)


def coupling_distance(x0: float, delta, gamma: PathFunctional, grid: TimeGrid, seed: int,
                      variant_a=SchemeVariant.EULER_FULL_TRUNCATION,
                      variant_b=SchemeVariant.EULER_REFLECTION,
                      n_paths: int = 1000) -> CouplingReport:
    """``sup_t |S^A_t - S^B_t|`` per path when both schemes share the same increments."""
    d = as_dimension(delta)
    dw = np.concatenate(map_blocks(lambda n, rng: brownian_increments(grid, n, rng),
                                   n_paths, seed))
    return _coupled(x0, d, gamma, grid, dw, variant_a, variant_b)


def coupling_refinement(x0: float, delta, gamma: PathFunctional, horizon: float,
                        steps: Sequence[int], seed: int,
                        variant_a=SchemeVariant.EULER_FULL_TRUNCATION,
                        variant_b=SchemeVariant.EULER_REFLECTION,
                        n_paths: int = 1000) -> list:
    """Coupling distance on nested grids driven by one fine Brownian path per sample."""
    d = as_dimension(delta)
    steps = sorted(int(s) for s in steps)
    finest = steps[-1]
    if any(finest % s for s in steps):
        raise DomainError("step counts must divide the finest one")
    fine = TimeGrid.uniform(horizon, finest)
    dw = np.concatenate(map_blocks(lambda n, rng: brownian_increments(fine, n, rng),
                                   n_paths, seed))
    out = []
    for s in steps:
        coarse = dw.reshape(n_paths, s, finest // s).sum(axis=2)
        out.append(_coupled(x0, d, gamma, TimeGrid.uniform(horizon, s), coarse,
                            variant_a, variant_b))
    return out


# --------------------------------------------------------------------------
# radial oracle

def radial_block(dim: int, x0: float, gamma: PathFunctional, grid: TimeGrid, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Euclidean norms of Euler paths of ``dY = dbeta + gamma(t, |Y|) Y/|Y| dt`` in R^dim."""
    y = np.zeros((n, dim))
    y[:, 0] = x0
    norms = np.empty((n, grid.n_steps + 1))
    norms[:, 0] = x0
    times = grid.times
    for i, dt in enumerate(grid.dt):
        r = norms[:, i]
        drift = gamma(times[: i + 1], norms[:, : i + 1])
        unit = np.divide(y, r[:, None], out=np.zeros_like(y), where=r[:, None] > 0)
        y = y + rng.standard_normal((n, dim)) * math.sqrt(dt) + (drift * dt)[:, None] * unit
        norms[:, i + 1] = np.sqrt((y * y).sum(axis=1))
    return norms


def radial_bessel_oracle(dim: int, x0: float, gamma: PathFunctional, grid: TimeGrid, seed: int,
                         n_paths: Optional[int] = None, threads: Optional[int] = None):
    """Norm of a ``dim``-dimensional Brownian motion with radial drift ``gamma``.

    Where ``|Y| = 0`` the drift direction is taken as 0 for that step.
    """
    if dim not in (2, 3):
        raise DomainError("radial oracle supports dimensions 2 and 3")
    if gamma.bounded_by is None:
        raise DomainError("radial oracle needs a bounded drift functional")
    n = 1 if n_paths is None else n_paths
    parts = map_blocks(lambda m, rng: radial_block(dim, x0, gamma, grid, m, rng), n, seed, threads)
    ens = PathEnsemble(grid, np.concatenate(parts), None, seed)
    return ens.path(0) if n_paths is None else ens
