"""Shared domain types: time grids, sample paths, drift functionals.

Paths live on a discrete grid.  A drift functional only ever sees the
history of a path up to the current node, which is how non-anticipativity
is enforced: the evaluator receives ``(times[:i+1], values[..., :i+1])``
and nothing else.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "Dimension",
    "TimeGrid",
    "SamplePath",
    "PathEnsemble",
    "PathFunctional",
    "stop_path",
    "bar_gamma",
    "clamp_functional",
    "constant_functional",
    "block_streams",
    "map_blocks",
    "write_path_csv",
    "read_path_csv",
    "write_ensemble_csv",
]

BLOCK_SIZE = 4096


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dimension:
    """The dimension parameter of a (squared) Bessel process."""

    delta: float

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise DomainError(f"dimension must be >= 0, got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def low_dim(self) -> bool:
        return 0.0 <= self.delta <= 1.0

    @property
    def nu(self) -> float:
        """Bessel index ``delta/2 - 1``."""
        return self.delta / 2.0 - 1.0

    def __float__(self):
        return self.delta


def as_dimension(delta) -> Dimension:
    return delta if isinstance(delta, Dimension) else Dimension(float(delta))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times ``0 = t_0 < ... < t_n = T``."""

    times: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("a time grid needs at least two nodes")
        if t[0] != 0.0:
            raise DomainError("a time grid must start at 0")
        if not np.all(np.diff(t) > 0):
            raise DomainError("grid times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if horizon <= 0 or n_steps < 1:
            raise DomainError("need horizon > 0 and n_steps >= 1")
        t = np.linspace(0.0, horizon, n_steps + 1)
        t[-1] = horizon
        return cls(t)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def index_at(self, t: float) -> int:
        """Index of the last node ``<= t``."""
        if t < 0 or t > self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    noise_increments: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.n_steps + 1,):
            raise DomainError(
                f"expected {self.grid.n_steps + 1} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)
        if self.noise_increments is not None:
            dw = _frozen(self.noise_increments)
            if dw.shape != (self.grid.n_steps,):
                raise DomainError("noise_increments must have one entry per step")
            object.__setattr__(self, "noise_increments", dw)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def brownian(self) -> np.ndarray:
        """Cumulated driving noise ``W`` on the grid (``W_0 = 0``)."""
        if self.noise_increments is None:
            raise DomainError("path carries no noise increments")
        return np.concatenate([[0.0], np.cumsum(self.noise_increments)])


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Many paths on one grid; ``values`` has shape ``(n_paths, n_steps + 1)``."""

    grid: TimeGrid
    values: np.ndarray
    noise_increments: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] != self.grid.n_steps + 1:
            raise DomainError(f"bad ensemble shape {v.shape}")
        object.__setattr__(self, "values", v)
        if self.noise_increments is not None:
            dw = _frozen(self.noise_increments)
            if dw.shape != (v.shape[0], self.grid.n_steps):
                raise DomainError("noise_increments shape does not match values")
            object.__setattr__(self, "noise_increments", dw)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    def path(self, k: int) -> SamplePath:
        dw = None if self.noise_increments is None else self.noise_increments[k]
        return SamplePath(self.grid, self.values[k], dw, self.seed)

    def with_values(self, values) -> "PathEnsemble":
        return replace(self, values=values)

    @classmethod
    def concat(cls, parts: Sequence["PathEnsemble"]) -> "PathEnsemble":
        grid = parts[0].grid
        dw = None
        if all(p.noise_increments is not None for p in parts):
            dw = np.concatenate([p.noise_increments for p in parts])
        return cls(grid, np.concatenate([p.values for p in parts]), dw, parts[0].seed)


def stop_path(path, t: float):
    """Freeze a path (or every path of an ensemble) at time ``t``."""
    i = path.grid.index_at(t)
    v = np.array(path.values)
    v[..., i + 1:] = v[..., i:i + 1]
    return replace(path, values=v)


# --------------------------------------------------------------------------
# drift functionals

Evaluator = Callable[[np.ndarray, np.ndarray], "np.ndarray | float"]


@dataclass(frozen=True)
class PathFunctional:
    """Non-anticipative drift ``Gamma(t, eta^t)``.

    ``evaluator(times, history)`` receives the grid prefix ``times`` (whose
    last entry is the current time) and ``history`` with the path values on
    that prefix along the last axis.  Leading axes of ``history`` index
    paths; the evaluator must return one value per path (a scalar is
    broadcast).  Evaluators must be pure.
    """

    evaluator: Evaluator
    growth_constant: Optional[float] = None
    lipschitz_constant: Optional[float] = None
    bounded_by: Optional[float] = None
    label: str = "gamma"
    is_zero: bool = field(default=False, compare=False)

    def __call__(self, times: np.ndarray, history: np.ndarray) -> np.ndarray:
        history = np.asarray(history, dtype=float)
        out = self.evaluator(times, history)
        return np.broadcast_to(np.asarray(out, dtype=float), history.shape[:-1])

    def at(self, path, t: float):
        """Evaluate on ``path`` stopped at ``t``."""
        i = path.grid.index_at(t)
        return self(path.times[: i + 1], path.values[..., : i + 1])

    def along(self, path) -> np.ndarray:
        """Values at every left endpoint ``t_0..t_{n-1}``; shape ``(..., n)``."""
        n = path.grid.n_steps
        out = np.empty(path.values.shape[:-1] + (n,))
        for i in range(n):
            out[..., i] = self(path.times[: i + 1], path.values[..., : i + 1])
        return out


def constant_functional(c: float, label: Optional[str] = None) -> PathFunctional:
    c = float(c)
    return PathFunctional(
        lambda times, hist: c,
        growth_constant=abs(c),
        lipschitz_constant=0.0,
        bounded_by=abs(c),
        label=label or f"const({c:g})",
        is_zero=(c == 0.0),
    )


ZERO = constant_functional(0.0, "zero")


def bar_gamma(gamma: PathFunctional, delta) -> PathFunctional:
    """Drift of the squared process induced by ``gamma``.

    ``(s, eta) -> 2 sqrt|eta(s)| * gamma(s, sqrt|eta^s|) + delta``.
    A growth constant ``K`` of ``gamma`` becomes ``3K + delta`` for the
    linear-growth bound ``|result| <= C (1 + sup|eta|)``, using
    ``a**0.5 <= (1 + a)/2`` and ``a**0.75 <= 1 + a``.
    """
    d = as_dimension(delta).delta

    def evaluator(times, hist):
        root = np.sqrt(np.abs(hist))
        return 2.0 * root[..., -1] * gamma(times, root) + d

    growth = None if gamma.growth_constant is None else 3.0 * gamma.growth_constant + d
    bound = None
    if gamma.is_zero:
        bound = d
    return PathFunctional(
        evaluator,
        growth_constant=growth,
        lipschitz_constant=0.0 if gamma.is_zero else None,
        bounded_by=bound,
        label=f"bar[{gamma.label}]",
    )


def clamp_functional(gamma: PathFunctional, n: float) -> PathFunctional:
    """Two-sided truncation ``(gamma v -n) ^ n``."""
    if not n > 0:
        raise DomainError(f"truncation level must be > 0, got {n}")
    n = float(n)

    def evaluator(times, hist):
        return np.clip(gamma(times, hist), -n, n)

    return PathFunctional(
        evaluator,
        growth_constant=gamma.growth_constant,
        lipschitz_constant=gamma.lipschitz_constant,
        bounded_by=n,
        label=f"clamp[{gamma.label},{n:g}]",
        is_zero=gamma.is_zero,
    )


# --------------------------------------------------------------------------
# random streams

def block_streams(seed: int, n_paths: int, block_size: int = BLOCK_SIZE):
    """Yield ``(start, stop, Generator)`` for fixed blocks of path indices.

    Each block gets a Philox stream keyed by ``(seed, block index)``, so a
    path's randomness depends only on the master seed and its index, never
    on how the blocks are scheduled.
    """
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    for b, start in enumerate(range(0, n_paths, block_size)):
        child = np.random.SeedSequence(ss.entropy, spawn_key=(b,))
        rng = np.random.Generator(np.random.Philox(child))
        yield start, min(start + block_size, n_paths), rng


def map_blocks(fn, n_paths: int, seed: int, threads: Optional[int] = None,
               block_size: int = BLOCK_SIZE) -> list:
    """Apply ``fn(n, rng)`` to every block; results come back in block order."""
    blocks = list(block_streams(seed, n_paths, block_size))
    jobs = [(stop - start, rng) for start, stop, rng in blocks]
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(jobs) == 1:
        return [fn(n, rng) for n, rng in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


# --------------------------------------------------------------------------
# CSV

def _fmt(x: float) -> str:
    return repr(float(x))


def write_path_csv(path: SamplePath, file) -> None:
    """Write ``t,value[,dW]``; the increment column is blank on the last row."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        has_dw = path.noise_increments is not None
        w.writerow(["t", "value", "dW"] if has_dw else ["t", "value"])
        for i, (t, v) in enumerate(zip(path.times, path.values)):
            row = [_fmt(t), _fmt(v)]
            if has_dw:
                row.append(_fmt(path.noise_increments[i]) if i < path.grid.n_steps else "")
            w.writerow(row)


def read_path_csv(file) -> SamplePath:
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["t", "value"]:
        raise ValueError(f"unexpected header {header}")
    t = [float(r[0]) for r in body]
    v = [float(r[1]) for r in body]
    dw = None
    if len(header) > 2 and header[2] == "dW":
        dw = [float(r[2]) for r in body[:-1]]
    return SamplePath(TimeGrid(t), v, dw)


def write_ensemble_csv(ens: PathEnsemble, target, layout: str = "columns") -> list:
    """Write an ensemble either as one CSV (``t,p0,p1,...``) or one file per path.

    Returns the list of files written.
    """
    if layout == "columns":
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"p{k}" for k in range(ens.n_paths)])
            for i, t in enumerate(ens.times):
                w.writerow([_fmt(t)] + [_fmt(x) for x in ens.values[:, i]])
        return [target]
    if layout == "files":
        os.makedirs(target, exist_ok=True)
        files = []
        for k in range(ens.n_paths):
            f = os.path.join(target, f"path_{k:06d}.csv")
            write_path_csv(ens.path(k), f)
            files.append(f)
        return files
    raise ValueError(f"unknown layout {layout!r}")
