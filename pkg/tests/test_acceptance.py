"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Lines are printed as the tests run and repeated in the terminal summary.
Criteria 5 and 6 are marked as expected failures: for 0 < delta < 1 started
away from 0 the weighted time integral converges to a positive constant, so
the harmonic transform carries a boundary drift (see test_density.py).
"""
import math
import time

import numpy as np
import pytest

from besselmp.cli import nonuniqueness_demo, run
from besselmp.core import TimeGrid, constant_functional
from besselmp.density import (
    DensitySpec,
    bes_cdf,
    bes_cdf_left,
    bessel_I_scaled,
    p319_limit,
    weighted_time_integral,
)
from besselmp.functionals import saturating
from besselmp.girsanov import girsanov_check
from besselmp.martingale import run_martingale_test
from besselmp.operator import catalog, harmonic
from besselmp.pathdep import coupling_refinement, pathdep_ensemble, radial_bessel_oracle
from besselmp.schemes import besq_exact_ensemble
from besselmp.stats import ks_critical, ks_one_sample, ks_two_sample, mean_stderr

from conftest import ACCEPTANCE_LINES

N = 100_000
DELTAS = (0.0, 0.3, 0.5, 0.7, 1.0)
X0S = (0.0, 1.0)
MG_GRID = TimeGrid.uniform(1.0, 256)
MG_FUNCTIONS = ("x2", "x4", "bump0")


def report(k: int, ok: bool, title: str, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
    print(line)
    ACCEPTANCE_LINES.append(line)


def test_criterion_01_mean_identity():
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for d in DELTAS:
        for x0 in X0S:
            s = besq_exact_ensemble(x0 * x0, d, TimeGrid.uniform(1.0, 16), N, seed=101).terminal
            m, se = mean_stderr(s)
            target = x0 * x0 + d
            if se == 0.0:
                ok &= m == target
                continue
            z = (m - target) / se
            worst = max(worst, abs(z))
            ok &= abs(z) < 3
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    report(1, ok, "mean of S_T equals x0^2 + delta T",
           f"max |z| {worst:.2f} < 3, runtime {elapsed:.1f}s < 30s")
    assert ok


def test_criterion_02_marginal_law():
    crit = ks_critical(N)
    worst, ok = 0.0, True
    for d in DELTAS:
        for x0 in X0S:
            x = np.sqrt(besq_exact_ensemble(x0 * x0, d, TimeGrid.uniform(1.0, 1), N,
                                            seed=202).terminal)
            if d == 0 and x0 == 0:
                ok &= bool(np.all(x == 0.0))
                continue
            spec = DensitySpec(d, x0, 1.0)
            ks = ks_one_sample(x, lambda y: bes_cdf(spec, y), lambda y: bes_cdf_left(spec, y))
            worst = max(worst, ks)
            ok &= ks < crit
    report(2, ok, "KS of X_T against the transition density",
           f"max KS {worst:.5f} < {crit:.5f}; null process identically 0")
    assert ok


def test_criterion_03_martingale_ztest():
    zs = {}
    for name in MG_FUNCTIONS:
        rep = run_martingale_test(0.5, 1.0, catalog(name), N, MG_GRID, seed=303)
        zs[name] = rep.max_abs_z
    control = run_martingale_test(0.5, 1.0, catalog("x2"), N, MG_GRID, seed=303, delta_shift=0.2)
    ok = all(z < 4 for z in zs.values()) and control.max_abs_z > 4
    detail = ", ".join(f"{k} max|z| {v:.2f}" for k, v in zs.items())
    report(3, ok, "martingale z-test, delta=0.5, x0=1",
           f"{detail}; shifted-delta control max|z| {control.max_abs_z:.1f} > 4")
    assert ok


def test_criterion_04_nonuniqueness():
    zs = {}
    sep = None
    for name in MG_FUNCTIONS:
        if name == "x4":
            rep, sep = nonuniqueness_demo(0.5, 1.0, name, N, MG_GRID, seed=404)
        else:
            rep = run_martingale_test(0.5, 1.0, catalog(name), N, MG_GRID, seed=404,
                                      sampler="euler", flip=True)
        zs[name] = rep.max_abs_z
    ok = all(z < 4 for z in zs.values()) and sep["z_difference"] > 5
    detail = ", ".join(f"{k} max|z| {v:.2f}" for k, v in zs.items())
    report(4, ok, "sign-flipped ensemble passes, laws differ",
           f"{detail}; terminal mean gap {sep['mean_difference']:.4f} = "
           f"{sep['z_difference']:.1f} stderr > 5")
    assert ok


@pytest.mark.xfail(strict=True, reason="h(X) has a positive boundary drift for 0 < delta < 1")
def test_criterion_05_harmonic_martingale():
    rep = run_martingale_test(0.5, 1.0, harmonic(0.5), N, MG_GRID, seed=505,
                              allow_extended=True)
    ok = rep.passed
    report(5, ok, "h(X) increments have |z| < 4, delta=0.5, x0=1",
           f"max|z| {rep.max_abs_z:.1f}; expected failure, boundary drift of h(X)")
    assert ok


@pytest.mark.xfail(strict=True, reason="weighted integral from x0=1 tends to a positive limit")
def test_criterion_06_weighted_integral_limits():
    rel = {d: abs(weighted_time_integral(d, 0.0, 1.0, 1e-4) / p319_limit(d, 1.0) - 1)
           for d in (0.5, 1.0)}
    ok_a = all(r < 0.01 for r in rel.values())
    far = weighted_time_integral(0.5, 1.0, 1.0, 0.1)
    near = weighted_time_integral(0.5, 1.0, 1.0, 1e-4)
    ratio = near / far
    ok_b = ratio < 1e-2
    ok = ok_a and ok_b
    report(6, ok, "weighted time integral near 0",
           f"x0=0 rel err {max(rel.values()):.1e} < 1% ({'ok' if ok_a else 'fail'}); "
           f"x0=1 ratio {ratio:.3f} vs < 1e-2 ({'ok' if ok_b else 'fail'}, expected failure)")
    assert ok


def test_criterion_07_absorption():
    s = besq_exact_ensemble(1.0, 0.0, TimeGrid.uniform(1.0, 256), 10_000, seed=707).values
    hit = (s == 0.0).any(axis=1)
    first = np.argmax(s == 0.0, axis=1)
    after = np.arange(s.shape[1]) >= first[:, None]
    violations = int(np.count_nonzero((s != 0.0) & after & hit[:, None]))
    ok = violations == 0 and hit.any()
    report(7, ok, "delta=0 paths stay at 0 once they hit it",
           f"{int(hit.sum())} of 10000 paths absorbed, {violations} violations")
    assert ok


def test_criterion_08_scaled_bessel_scan():
    z = np.linspace(5.0, 50.0, 4501)
    ok = True
    parts = []
    for nu in (-0.5, -0.25, 0.0, 0.5):
        v = bessel_I_scaled(nu, z)
        ok &= bool(np.all(np.isfinite(v))) and float(v.max()) <= 1.0
        if nu <= 0:
            ok &= int(np.argmax(v)) == 0
        parts.append(f"nu={nu:g} max {v.max():.4f} at z={z[np.argmax(v)]:g}")
    report(8, ok, "I_nu(z) e^-z on [5, 50]", "; ".join(parts))
    assert ok


def test_criterion_09_euler_convergence():
    x0, d = 0.5, 1.0
    exact = np.sqrt(besq_exact_ensemble(x0 * x0, d, TimeGrid.uniform(1.0, 1), N,
                                        seed=909).terminal)
    ks = []
    for n in (64, 256, 1024):
        x = pathdep_ensemble(x0, d, constant_functional(0.0), TimeGrid.uniform(1.0, n),
                             10_000, seed=910)
        ks.append(ks_two_sample(x.terminal, exact))
    ratios = [b / a for a, b in zip(ks, ks[1:])]
    ok = all(0.25 <= r <= 0.75 for r in ratios)
    report(9, ok, "Euler vs exact KS halves per 4x refinement, delta=1, x0=0.5",
           f"KS {', '.join(f'{k:.4f}' for k in ks)}; ratios "
           f"{', '.join(f'{r:.2f}' for r in ratios)} in [0.25, 0.75]")
    assert ok


def test_criterion_10_girsanov():
    rep = girsanov_check(1.0, 1.0, constant_functional(0.5), TimeGrid.uniform(1.0, 128), N,
                         seed=1010)
    report(10, rep.agrees, "reweighted vs drifted E[X_T], Gamma=0.5",
           f"{rep.estimate_reweighted:.4f} vs {rep.estimate_direct:.4f}, "
           f"z {rep.z:.2f}, |z| < 3, ESS {rep.ess:.0f}")
    assert rep.agrees


def test_criterion_11_coupling():
    reps = coupling_refinement(0.0, 0.5, saturating(0.5), 1.0, [128, 256, 512, 1024],
                               seed=1111, n_paths=1000)
    med = [r.median for r in reps]
    ok = all(b < a for a, b in zip(med, med[1:]))
    report(11, ok, "truncation vs reflection sup-distance, Lipschitz bounded Gamma",
           "medians " + ", ".join(f"{m:.4f}" for m in med) + " strictly decreasing")
    assert ok


def test_criterion_12_radial_oracle():
    g = TimeGrid.uniform(1.0, 1024)
    gamma = constant_functional(0.3)
    y = radial_bessel_oracle(3, 1.0, gamma, g, seed=1212, n_paths=10_000)
    x = pathdep_ensemble(1.0, 3.0, gamma, g, 10_000, seed=1213)
    ks = ks_two_sample(y.terminal, x.terminal)
    crit = ks_critical(10_000, 0.01, 10_000)
    ok = ks < crit
    report(12, ok, "norm of drifted 3-d BM vs path-dependent solver",
           f"KS {ks:.4f} < {crit:.4f}")
    assert ok


def test_criterion_13_determinism(tmp_path):
    cases = [
        ["simulate", "--delta", "0.5", "--x0", "1", "--paths", "5000", "--steps", "64"],
        ["pathdep-demo", "--delta", "0.3", "--gamma", "supclip:1", "--paths", "5000",
         "--steps", "64"],
        ["verify-martingale", "--f", "x4", "--paths", "10000", "--steps", "32"],
        ["girsanov-check", "--gamma", "const:0.5", "--paths", "10000", "--steps", "32"],
    ]
    same = True
    for k, args in enumerate(cases):
        outs = []
        for threads in ("1", "4"):
            out = tmp_path / f"{k}_{threads}"
            run(args + ["--seed", "1313", "--threads", threads, "--out", str(out)])
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same &= outs[0] == outs[1] and len(outs[0]) > 0
    report(13, same, "identical seeds give byte-identical outputs",
           f"{len(cases)} subcommands, 1 vs 4 threads")
    assert same
