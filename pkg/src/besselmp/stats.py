"""Kolmogorov-Smirnov distances and small Monte Carlo helpers."""
from __future__ import annotations

import math

import numpy as np


def ks_critical(n: int, alpha: float = 0.01, m: int | None = None) -> float:
    """Asymptotic KS critical value (one-sample, or two-sample when ``m`` is given)."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


def ks_one_sample(sample, cdf, cdf_left=None) -> float:
    """``sup_y |F_n(y) - F(y)|`` for a right-continuous ``cdf``.

    Ties are grouped, and the left limits of both step functions are
    compared at every sample value.  Pass ``cdf_left`` when ``F`` has atoms.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    u, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f = np.asarray(cdf(u), dtype=float)
    f_left = f if cdf_left is None else np.asarray(cdf_left(u), dtype=float)
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f_left))))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def mean_stderr(x) -> tuple[float, float]:
    """Mean (compensated sum) and standard error of the mean."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var / n)
