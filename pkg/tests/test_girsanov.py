import json
import math

import numpy as np
import pytest

from besselmp.core import ZERO, DomainError, PathFunctional, SamplePath, TimeGrid, constant_functional
from besselmp.functionals import saturating, sup_sqrt_clipped
from besselmp.girsanov import (
    effective_sample_size,
    girsanov_check,
    log_novikov_weight,
    novikov_weight,
    reweighted_expectation,
    terminal_value,
)
from besselmp.pathdep import pathdep_ensemble
from besselmp.stats import mean_stderr

GRID = TimeGrid.uniform(1.0, 64)


def test_zero_drift_weight_is_one():
    x = pathdep_ensemble(1.0, 1.0, ZERO, GRID, 100, seed=1)
    assert np.all(novikov_weight(x, ZERO).values == 1.0)


def test_weight_example():
    p = SamplePath(TimeGrid([0.0, 1.0]), [1.0, 1.2], [0.3])
    w = novikov_weight(p, constant_functional(1.0))
    assert w.values[0] == 1.0
    assert w.terminal == pytest.approx(math.exp(0.3 - 0.5))
    assert w.terminal == pytest.approx(0.8187, abs=1e-4)


def test_weight_requires_bounded_drift_and_increments():
    unbounded = PathFunctional(lambda t, h: h[..., -1], label="id")
    x = pathdep_ensemble(1.0, 1.0, ZERO, GRID, 10, seed=1)
    with pytest.raises(DomainError):
        log_novikov_weight(x, unbounded)
    p = SamplePath(TimeGrid([0.0, 1.0]), [1.0, 1.2])
    with pytest.raises(DomainError):
        log_novikov_weight(p, constant_functional(1.0))


def test_weights_positive_with_unit_mean():
    x = pathdep_ensemble(1.0, 1.0, ZERO, GRID, 40000, seed=2)
    w = novikov_weight(x, saturating(0.8))
    assert np.all(w.values > 0)
    m, se = mean_stderr(w.terminal)
    assert abs(m - 1.0) < 3 * se
    est, se = reweighted_expectation(w, np.ones(x.n_paths))
    assert abs(est - 1.0) < 3 * se


def test_reweighted_matches_direct():
    rep = girsanov_check(1.0, 1.0, constant_functional(0.5), GRID, 20000, seed=3)
    assert rep.agrees, rep
    assert rep.ess > 0.5 * rep.n_paths
    d = json.loads(rep.to_json())
    assert d["agrees"] is True


def test_reweighted_matches_direct_path_dependent():
    rep = girsanov_check(0.5, 1.0, sup_sqrt_clipped(0.7), GRID, 20000, seed=4)
    assert rep.agrees, rep


def test_sign_symmetry_first_order():
    x = pathdep_ensemble(1.0, 1.0, ZERO, GRID, 20000, seed=5)
    base = np.mean(terminal_value(x))
    c = 0.05
    up = reweighted_expectation(novikov_weight(x, constant_functional(c)), x.terminal)[0] - base
    down = reweighted_expectation(novikov_weight(x, constant_functional(-c)), x.terminal)[0] - base
    assert up > 0 > down
    assert abs(up + down) < 0.1 * abs(up - down)


def test_degenerate_weights_warn():
    x = pathdep_ensemble(1.0, 1.0, ZERO, GRID, 2000, seed=6)
    w = novikov_weight(x, constant_functional(4.0))
    with pytest.warns(RuntimeWarning, match="degeneracy"):
        reweighted_expectation(w, x.terminal)


def test_effective_sample_size():
    assert effective_sample_size(np.ones(10)) == pytest.approx(10)
    assert effective_sample_size([1.0, 0.0, 0.0]) == pytest.approx(1)
