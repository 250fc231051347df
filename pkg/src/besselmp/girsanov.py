"""Exponential (Novikov) weights and reweighted estimators for bounded drifts."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import ZERO, DomainError, PathEnsemble, PathFunctional, TimeGrid, map_blocks
from .stats import mean_stderr

ESS_WARN_FRACTION = 0.1


def log_novikov_weight(X, gamma: PathFunctional) -> np.ndarray:
    """``sum_i G_i dW_i - 0.5 sum_i G_i^2 dt_i`` at every node, ``G_i = gamma(t_i, X^{t_i})``."""
    if gamma.bounded_by is None:
        raise DomainError("Novikov's condition is only checked for bounded functionals")
    if X.noise_increments is None:
        raise DomainError("weights need the driving noise increments")
    g = gamma.along(X)
    inc = g * X.noise_increments - 0.5 * g * g * X.grid.dt
    zeros = np.zeros(inc.shape[:-1] + (1,))
    return np.concatenate([zeros, np.cumsum(inc, axis=-1)], axis=-1)


def novikov_weight(X, gamma: PathFunctional):
    """Weight process ``N_t = exp(int G dW - 0.5 int G^2 ds)`` on the grid of ``X``."""
    return type(X)(X.grid, np.exp(log_novikov_weight(X, gamma)), None, X.seed)


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(math.fsum(w) ** 2 / math.fsum(w * w))


def reweighted_expectation(weights, phi_values) -> tuple:
    """``mean(N_T * phi)`` and its standard error.

    ``weights`` are terminal weights (one per path) or a weight ensemble.
    Warns when the effective sample size drops below 10% of the paths.
    """
    w = weights.terminal if isinstance(weights, PathEnsemble) else np.asarray(weights, float)
    phi = np.asarray(phi_values, dtype=float)
    ess = effective_sample_size(w)
    if ess < ESS_WARN_FRACTION * w.size:
        warnings.warn(f"weight degeneracy: ESS {ess:.1f} of {w.size}", RuntimeWarning)
    return mean_stderr(w * phi)


@dataclass
class GirsanovReport:
    estimate_direct: float
    stderr_direct: float
    estimate_reweighted: float
    stderr_reweighted: float
    stderr_combined: float
    ess: float
    n_paths: int
    gamma: str
    z: float

    @property
    def agrees(self) -> bool:
        return abs(self.z) < 3.0

    def to_json(self) -> str:
        d = asdict(self)
        d["agrees"] = self.agrees
        return json.dumps(d, indent=2, sort_keys=True)


def terminal_value(X) -> np.ndarray:
    return np.asarray(X.values)[..., -1]


def girsanov_check(x0: float, delta, gamma: PathFunctional, grid: TimeGrid, n_paths: int,
                   seed: int, phi: Callable = terminal_value,
                   threads: Optional[int] = None) -> GirsanovReport:
    """Compare ``E[phi(X)]`` from a drifted simulation with a reweighted driftless one.

    The driftless ensemble uses ``seed``; the drifted one ``seed + 1``.
    """
    from .pathdep import pathdep_block

    def driftless(n, rng):
        X = pathdep_block(x0, delta, ZERO, grid, n, rng)
        return np.exp(log_novikov_weight(X, gamma)[:, -1]), phi(X)

    def drifted(n, rng):
        return phi(pathdep_block(x0, delta, gamma, grid, n, rng))

    parts = map_blocks(driftless, n_paths, seed, threads)
    w = np.concatenate([p[0] for p in parts])
    phi_free = np.concatenate([p[1] for p in parts])
    direct = np.concatenate(map_blocks(drifted, n_paths, seed + 1, threads))
    est_rw, se_rw = reweighted_expectation(w, phi_free)
    est_d, se_d = mean_stderr(direct)
    se = math.hypot(se_rw, se_d)
    return GirsanovReport(est_d, se_d, est_rw, se_rw, se, effective_sample_size(w), n_paths,
                          gamma.label, (est_rw - est_d) / se if se > 0 else 0.0)
