"""Martingale-problem processes and an ensemble z-test of the martingale property.

For a test function ``f`` the process

    M^f_t = f(X_t) - f(x_0) - int_0^t L f(X_s) ds - int_0^t f'(X_s) Gamma(s, X^s) ds

should be a martingale.  The test below checks ``E[(M_t - M_s) g] = 0`` for a
small basket of statistics ``g`` measurable at time ``s``.  It only probes a
small sub-sigma-algebra of the canonical filtration, so passing is evidence,
not proof.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ZERO,
    DomainError,
    PathEnsemble,
    PathFunctional,
    SamplePath,
    TimeGrid,
    as_dimension,
    map_blocks,
)
from .operator import TestFunction, apply_L, check_domain, Membership
from .stats import mean_stderr

Z_THRESHOLD = 4.0
MIN_PATHS = 1000
STATISTICS = ("one", "X_s", "X_s^2", "running_max")


def compute_Mf(X, f: TestFunction, delta, gamma: PathFunctional = ZERO, *,
               allow_extended: bool = False, report=None):
    """Martingale-problem process of ``f`` along ``X`` (left-endpoint quadrature)."""
    d = as_dimension(delta).delta
    rep = report if report is not None else check_domain(f, d)
    if rep.membership is Membership.REJECTED:
        raise DomainError(f"{f.label} is not in the domain of L^{d}")
    v = X.values
    dt = X.grid.dt
    Lf = apply_L(f, d, v[..., :-1], allow_extended=allow_extended, report=rep)
    integrand = Lf * dt
    if not gamma.is_zero:
        integrand = integrand + np.asarray(f.f1(v[..., :-1])) * gamma.along(X) * dt
    comp = np.concatenate([np.zeros(v.shape[:-1] + (1,)), np.cumsum(integrand, axis=-1)], axis=-1)
    fv = np.asarray(f.f(v), dtype=float)
    m = fv - fv[..., :1] - comp
    return type(X)(X.grid, m, X.noise_increments, X.seed)


def strong_residual(X, f: TestFunction, delta, gamma: PathFunctional = ZERO, *,
                    allow_extended: bool = False):
    """``M^f_t - int_0^t f'(X_s) dW_s`` using the stored increments."""
    if X.noise_increments is None:
        raise DomainError("strong residual needs stored noise increments")
    m = compute_Mf(X, f, delta, gamma, allow_extended=allow_extended)
    stoch = np.asarray(f.f1(X.values[..., :-1])) * X.noise_increments
    cum = np.concatenate([np.zeros(stoch.shape[:-1] + (1,)), np.cumsum(stoch, axis=-1)], axis=-1)
    return type(X)(X.grid, m.values - cum, X.noise_increments, X.seed)


# --------------------------------------------------------------------------
# checkpoint statistics

def default_checkpoints(grid: TimeGrid) -> list:
    T = grid.horizon
    return [0.25 * T, 0.5 * T, 0.75 * T, T]


@dataclass
class CheckpointData:
    """Martingale increments between checkpoints and the statistics at their left ends."""

    times: np.ndarray               # (k + 1,) starting with 0
    increments: np.ndarray          # (n, k)
    stats: dict                     # name -> (n, k)

    @classmethod
    def from_paths(cls, Mf: PathEnsemble, X: PathEnsemble,
                   checkpoints: Optional[Sequence[float]] = None) -> "CheckpointData":
        grid = X.grid
        cps = default_checkpoints(grid) if checkpoints is None else list(checkpoints)
        idx = np.array([0] + [grid.index_at(t) for t in cps])
        left, right = idx[:-1], idx[1:]
        m = Mf.values
        x = X.values
        runmax = np.maximum.accumulate(x, axis=1)
        stats = {
            "one": np.ones((x.shape[0], left.size)),
            "X_s": x[:, left],
            "X_s^2": x[:, left] ** 2,
            "running_max": runmax[:, left],
        }
        return cls(grid.times[idx], m[:, right] - m[:, left], stats)

    @classmethod
    def concat(cls, parts: Sequence["CheckpointData"]) -> "CheckpointData":
        return cls(
            parts[0].times,
            np.concatenate([p.increments for p in parts]),
            {k: np.concatenate([p.stats[k] for p in parts]) for k in parts[0].stats},
        )

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]


@dataclass
class MartingaleReport:
    f: str
    delta: float
    gamma: str
    checkpoints: list
    statistics: list
    z_matrix: list                  # [interval][statistic], None where skipped
    n_paths: int
    threshold: float = Z_THRESHOLD
    confidence: float = 0.0
    passed: bool = False
    max_abs_z: float = 0.0
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return json.dumps(d, indent=2, sort_keys=True)


def martingale_zscore(data, X: Optional[PathEnsemble] = None, checkpoints=None, *,
                      threshold: float = Z_THRESHOLD, f_label: str = "f", delta: float = math.nan,
                      gamma_label: str = "zero") -> MartingaleReport:
    """z-scores of ``mean((M_t - M_s) g(X_s)) / stderr`` for every interval and statistic.

    ``data`` is either a :class:`CheckpointData` or an ensemble of ``M^f``
    paths (then ``X`` is required).
    """
    if not isinstance(data, CheckpointData):
        if X is None:
            raise ValueError("pass the X ensemble alongside the M^f ensemble")
        data = CheckpointData.from_paths(data, X, checkpoints)
    n = data.n_paths
    if n < MIN_PATHS:
        raise DomainError(f"need at least {MIN_PATHS} paths, got {n}")
    k = data.increments.shape[1]
    names = list(data.stats)
    z = [[None] * len(names) for _ in range(k)]
    notes = []
    for j in range(k):
        dm = data.increments[:, j]
        for c, name in enumerate(names):
            g = data.stats[name][:, j]
            if name != "one" and np.ptp(g) == 0.0:
                notes.append(f"interval {j}: statistic {name} is constant, skipped")
                continue
            mean, se = mean_stderr(dm * g)
            if se == 0.0:
                if mean == 0.0:
                    z[j][c] = 0.0
                    notes.append(f"interval {j}: {name} product identically zero")
                else:
                    z[j][c] = math.copysign(math.inf, mean)
                continue
            z[j][c] = mean / se
    flat = [abs(v) for row in z for v in row if v is not None]
    n_tests = len(flat)
    notes.append(
        f"{n_tests} simultaneous tests at |z| < {threshold}; Bonferroni family-wise "
        f"level <= {n_tests * math.erfc(threshold / math.sqrt(2)):.2e}"
    )
    notes.append("statistics span only a small sub-sigma-algebra of the filtration")
    max_z = max(flat) if flat else 0.0
    return MartingaleReport(
        f=f_label,
        delta=float(delta),
        gamma=gamma_label,
        checkpoints=[float(t) for t in data.times[1:]],
        statistics=names,
        z_matrix=z,
        n_paths=n,
        threshold=threshold,
        confidence=1.0 - math.erfc(threshold / math.sqrt(2)),
        passed=bool(max_z < threshold),
        max_abs_z=float(max_z),
        notes=notes,
    )


# --------------------------------------------------------------------------
# ensemble driver

def run_martingale_test(delta, x0: float, f: TestFunction, n_paths: int, grid: TimeGrid,
                        seed: int, *, gamma: PathFunctional = ZERO, sampler: str = "exact",
                        flip: bool = False, delta_shift: float = 0.0,
                        allow_extended: bool = False, checkpoints=None,
                        threshold: float = Z_THRESHOLD, threads: Optional[int] = None):
    """Simulate ``X`` blockwise, form ``M^f`` and z-test it.

    ``sampler`` is ``"exact"`` (exact squared-Bessel transitions) or
    ``"euler"`` (path-dependent solver, full truncation).  ``flip`` negates
    every path after its first zero.  ``delta_shift`` perturbs the dimension
    used inside ``L`` only (a negative control).
    """
    from .pathdep import pathdep_block
    from .schemes import besq_exact_block, sign_flip_after_zero

    d = as_dimension(delta).delta
    d_op = d + delta_shift
    rep = check_domain(f, d_op)

    def block(n, rng):
        if sampler == "exact":
            if not gamma.is_zero:
                raise DomainError("the exact sampler has no drift")
            X = PathEnsemble(grid, np.sqrt(besq_exact_block(x0 * x0, d, grid, n, rng)))
        elif sampler == "euler":
            X = pathdep_block(x0, d, gamma, grid, n, rng)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
        if flip:
            X = sign_flip_after_zero(X)
        M = compute_Mf(X, f, d_op, gamma, allow_extended=allow_extended, report=rep)
        return CheckpointData.from_paths(M, X, checkpoints)

    data = CheckpointData.concat(map_blocks(block, n_paths, seed, threads))
    report = martingale_zscore(data, threshold=threshold, f_label=f.label, delta=d,
                               gamma_label=gamma.label)
    if delta_shift:
        report.notes.append(f"operator dimension shifted by {delta_shift} (negative control)")
    if flip:
        report.notes.append("paths negated after their first zero")
    return report
