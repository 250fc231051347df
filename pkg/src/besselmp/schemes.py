"""Samplers for squared Bessel / Bessel paths and related path transforms."""
from __future__ import annotations

import enum
from typing import Optional

import numpy as np

from .core import (
    BLOCK_SIZE,
    DomainError,
    PathEnsemble,
    PathFunctional,
    SamplePath,
    TimeGrid,
    as_dimension,
    bar_gamma,
    constant_functional,
    map_blocks,
)

ZERO_ATOL = 1e-12
IMPLICIT_ITERATIONS = 3


class SchemeVariant(str, enum.Enum):
    EULER_FULL_TRUNCATION = "euler_full_truncation"
    EULER_REFLECTION = "euler_reflection"
    DRIFT_IMPLICIT = "drift_implicit"


def _variant(v) -> SchemeVariant:
    return v if isinstance(v, SchemeVariant) else SchemeVariant(v)


# --------------------------------------------------------------------------
# exact transition

def besq_exact_block(s0: float, delta: float, grid: TimeGrid, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Exact BESQ transitions for ``n`` paths.

    Given ``S_i = s``, ``S_{i+1} / dt`` is noncentral chi-squared with
    ``delta`` degrees of freedom and noncentrality ``s / dt``, drawn as
    ``2 * Gamma(delta/2 + P)`` with ``P ~ Poisson(s / (2 dt))``.  When
    ``delta == 0`` and ``P == 0`` the gamma variate is exactly 0, which is
    what makes zero absorbing.
    """
    out = np.empty((n, grid.n_steps + 1))
    out[:, 0] = s0
    half = delta / 2.0
    for i, dt in enumerate(grid.dt):
        s = out[:, i]
        k = rng.poisson(s / (2.0 * dt))
        out[:, i + 1] = 2.0 * dt * rng.standard_gamma(half + k)
    return out


def _check_start(s0, delta):
    if s0 < 0:
        raise DomainError(f"initial value must be >= 0, got {s0}")
    return as_dimension(delta).delta


def besq_exact_ensemble(s0: float, delta, grid: TimeGrid, n_paths: int, seed: int,
                        threads: Optional[int] = None,
                        block_size: int = BLOCK_SIZE) -> PathEnsemble:
    d = _check_start(s0, delta)
    parts = map_blocks(lambda n, rng: besq_exact_block(s0, d, grid, n, rng),
                       n_paths, seed, threads, block_size)
    return PathEnsemble(grid, np.concatenate(parts), None, seed)


def sample_besq_exact(s0: float, delta, grid: TimeGrid, seed: int) -> SamplePath:
    return besq_exact_ensemble(s0, delta, grid, 1, seed).path(0)


# --------------------------------------------------------------------------
# Euler-type schemes

def euler_besq_block(s0: float, gbar: PathFunctional, grid: TimeGrid, dw: np.ndarray,
                     variant=SchemeVariant.EULER_FULL_TRUNCATION) -> np.ndarray:
    """Run one Euler variant on given Brownian increments ``dw`` (shape ``(n, steps)``).

    Returned values are the nonnegative path seen by the drift: under full
    truncation the internal state may dip below zero, but only its positive
    part is stored.
    """
    variant = _variant(variant)
    n = dw.shape[0]
    times = grid.times
    dts = grid.dt
    out = np.empty((n, grid.n_steps + 1))
    out[:, 0] = s0
    state = np.full(n, float(s0))
    for i, dt in enumerate(dts):
        pos = out[:, i]
        noise = 2.0 * np.sqrt(pos) * dw[:, i]
        drift = gbar(times[: i + 1], out[:, : i + 1])
        if variant is SchemeVariant.EULER_REFLECTION:
            out[:, i + 1] = np.abs(pos + drift * dt + noise)
            continue
        nxt = state + drift * dt + noise
        if variant is SchemeVariant.DRIFT_IMPLICIT:
            for _ in range(IMPLICIT_ITERATIONS):
                out[:, i + 1] = np.maximum(nxt, 0.0)
                d1 = gbar(times[: i + 2], out[:, : i + 2])
                nxt = state + d1 * dt + noise
        state = nxt
        out[:, i + 1] = np.maximum(state, 0.0)
    return out


def brownian_increments(grid: TimeGrid, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, grid.n_steps)) * np.sqrt(grid.dt)


def euler_besq_ensemble(s0: float, delta, gbar: Optional[PathFunctional], grid: TimeGrid,
                        n_paths: int, seed: int,
                        variant=SchemeVariant.EULER_FULL_TRUNCATION,
                        threads: Optional[int] = None,
                        block_size: int = BLOCK_SIZE) -> PathEnsemble:
    """Euler ensemble with stored increments.  ``gbar=None`` means ``gbar == delta``."""
    d = _check_start(s0, delta)
    if gbar is None:
        gbar = constant_functional(d)

    def block(n, rng):
        dw = brownian_increments(grid, n, rng)
        return euler_besq_block(s0, gbar, grid, dw, variant), dw

    parts = map_blocks(block, n_paths, seed, threads, block_size)
    return PathEnsemble(grid, np.concatenate([p[0] for p in parts]),
                        np.concatenate([p[1] for p in parts]), seed)


def euler_besq(s0: float, delta, gbar: Optional[PathFunctional], grid: TimeGrid, seed: int,
               variant=SchemeVariant.EULER_FULL_TRUNCATION) -> SamplePath:
    return euler_besq_ensemble(s0, delta, gbar, grid, 1, seed, variant).path(0)


# --------------------------------------------------------------------------
# path transforms

def sqrt_path(s):
    """Pointwise square root of a nonnegative path or ensemble."""
    if np.any(s.values < 0):
        raise DomainError("square root of a path with negative values")
    return type(s)(s.grid, np.sqrt(s.values), s.noise_increments, s.seed)


def first_zero_index(values: np.ndarray, atol: float = ZERO_ATOL) -> np.ndarray:
    """Index of the first node with ``|value| <= atol`` per path; ``-1`` if none."""
    hit = np.abs(values) <= atol
    idx = np.argmax(hit, axis=-1)
    return np.where(hit.any(axis=-1), idx, -1)


def sign_flip_after_zero(x, atol: float = ZERO_ATOL):
    """Negate a nonnegative path strictly after its first zero."""
    if np.any(x.values < 0):
        raise DomainError("sign flip expects a nonnegative path")
    v = np.array(x.values, dtype=float)
    tau = first_zero_index(v, atol)
    cols = np.arange(v.shape[-1])
    after = (tau[..., None] >= 0) & (cols > tau[..., None])
    v = np.where(after, -v, v)
    return type(x)(x.grid, v, x.noise_increments, x.seed)


def skorokhod_reflect(x0: float, dw: np.ndarray):
    """Reflect ``x0 + W`` at zero.  Returns ``(X, L)`` on the grid nodes."""
    w = np.concatenate([np.zeros(dw.shape[:-1] + (1,)), np.cumsum(dw, axis=-1)], axis=-1)
    free = x0 + w
    local = np.maximum.accumulate(np.maximum(-free, 0.0), axis=-1)
    return free + local, local


def reflected_bm(x0: float, grid: TimeGrid, seed: int, dw: Optional[np.ndarray] = None):
    """Reflected Brownian motion ``X = x0 + W + L`` with its regulator ``L``.

    Returns ``(X, L, dW)``; ``X`` carries ``dW`` as its noise increments.
    """
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    if dw is None:
        dw = reflected_bm_ensemble(x0, grid, 1, seed)[2][0]
    dw = np.asarray(dw, dtype=float)
    x, local = skorokhod_reflect(x0, dw)
    return SamplePath(grid, x, dw, seed), SamplePath(grid, local, None, seed), dw


def reflected_bm_ensemble(x0: float, grid: TimeGrid, n_paths: int, seed: int,
                          threads: Optional[int] = None):
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    parts = map_blocks(lambda n, rng: brownian_increments(grid, n, rng), n_paths, seed, threads)
    dw = np.concatenate(parts)
    x, local = skorokhod_reflect(x0, dw)
    return (PathEnsemble(grid, x, dw, seed), PathEnsemble(grid, local, None, seed), dw)


def lamperti_sde(y0: float, delta, grid: TimeGrid, seed: int, n_paths: Optional[int] = None):
    """Euler path(s) of ``dY = sigma0(Y) dW`` with ``sigma0`` from :mod:`operator`."""
    from .operator import sigma0

    d = as_dimension(delta)
    if not d.low_dim:
        raise DomainError("lamperti_sde needs delta in [0, 1]")
    n = 1 if n_paths is None else n_paths

    def block(m, rng):
        dw = brownian_increments(grid, m, rng)
        y = np.empty((m, grid.n_steps + 1))
        y[:, 0] = y0
        for i in range(grid.n_steps):
            y[:, i + 1] = y[:, i] + sigma0(d, y[:, i]) * dw[:, i]
        return y, dw

    parts = map_blocks(block, n, seed)
    ens = PathEnsemble(grid, np.concatenate([p[0] for p in parts]),
                       np.concatenate([p[1] for p in parts]), seed)
    return ens.path(0) if n_paths is None else ens
