"""Command-line entry point.

Exit codes: 0 success / test passed, 1 usage or runtime error, 2 statistical
test failed.  Flags override values from ``--config`` (INI file with a
``[defaults]`` section and one section per subcommand), which override the
built-in defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .core import DomainError, PathEnsemble, TimeGrid, write_ensemble_csv
from .density import (
    DensitySpec,
    bes_cdf,
    bes_cdf_left,
    local_time_limit,
    p319_limit,
    weighted_time_integral,
)
from .functionals import by_name
from .martingale import run_martingale_test
from .operator import catalog
from .schemes import SchemeVariant, besq_exact_ensemble, sign_flip_after_zero, sqrt_path
from .stats import ks_critical, ks_one_sample, mean_stderr

log = logging.getLogger("besselmp")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

DEFAULTS = {
    "delta": 0.5,
    "x0": 1.0,
    "T": 1.0,
    "paths": 10000,
    "steps": 256,
    "seed": 42,
    "out": "out",
    "threads": None,
    "f": "x2",
    "gamma": "zero",
    "variant": SchemeVariant.EULER_FULL_TRUNCATION.value,
    "variant_b": SchemeVariant.EULER_REFLECTION.value,
    "sampler": "exact",
    "layout": "columns",
    "delta_shift": 0.0,
    "threshold": 4.0,
    "levels": 4,
    "kmax": 6,
}

TYPES = {"delta": float, "x0": float, "T": float, "paths": int, "steps": int, "seed": int,
         "threads": int, "delta_shift": float, "threshold": float, "levels": int, "kmax": int}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, *names):
    flags = {
        "delta": ("--delta", "dimension"),
        "x0": ("--x0", "starting point of the Bessel process"),
        "T": ("--T", "time horizon"),
        "paths": ("--paths", "number of paths"),
        "steps": ("--steps", "number of time steps"),
        "seed": ("--seed", "master seed"),
        "out": ("--out", "output directory"),
        "threads": ("--threads", "worker threads"),
        "f": ("--f", "test function name"),
        "gamma": ("--gamma", "drift functional, e.g. zero, const:0.5, saturating:0.5"),
        "variant": ("--variant", "Euler variant"),
        "variant_b": ("--variant-b", "second Euler variant for coupling"),
        "sampler": ("--sampler", "exact or euler"),
        "layout": ("--layout", "columns or files"),
        "delta_shift": ("--delta-shift", "shift of delta inside the operator (negative control)"),
        "threshold": ("--threshold", "z-score threshold"),
        "levels": ("--levels", "number of grids in the refinement study"),
        "kmax": ("--kmax", "smallest probe is x = 10^-kmax"),
    }
    for n in ("seed", "out", "threads") + names:
        flag, help_ = flags[n]
        p.add_argument(flag, dest=n, type=TYPES.get(n, str), default=None, help=help_)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="besselmp", description=__doc__.splitlines()[0])
    p.add_argument("--config", default=None, help="INI file with default flag values")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("simulate", help="simulate a Bessel ensemble"),
            "delta", "x0", "T", "paths", "steps", "gamma", "variant", "sampler", "layout")
    _common(sub.add_parser("verify-martingale", help="z-test of the martingale property"),
            "delta", "x0", "T", "paths", "steps", "f", "gamma", "sampler", "delta_shift",
            "threshold")
    _common(sub.add_parser("density-check", help="terminal law vs the transition density"),
            "delta", "x0", "T", "paths")
    _common(sub.add_parser("limit-check", help="weighted time integral near the origin"),
            "delta", "x0", "T", "kmax")
    _common(sub.add_parser("girsanov-check", help="reweighted vs direct drifted simulation"),
            "delta", "x0", "T", "paths", "steps", "gamma")
    _common(sub.add_parser("pathdep-demo", help="path-dependent Bessel solver"),
            "delta", "x0", "T", "paths", "steps", "gamma", "variant", "layout")
    _common(sub.add_parser("couple-uniqueness", help="coupling of two Euler variants"),
            "delta", "x0", "T", "paths", "steps", "gamma", "variant", "variant_b", "levels")
    _common(sub.add_parser("nonuniqueness-demo", help="paths flipped after their first zero"),
            "delta", "x0", "T", "paths", "steps", "f", "threshold")
    return p


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from the defaults."""
    cfg = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        for section in ("defaults", args.command):
            if cp.has_section(section):
                cfg.update({k.replace("-", "_"): v for k, v in cp.items(section)})
    for key, default in DEFAULTS.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue
        if key in cfg:
            conv = TYPES.get(key, str)
            try:
                setattr(args, key, conv(cfg[key]))
            except ValueError as exc:
                raise UsageError(f"bad config value for {key}: {cfg[key]!r}") from exc
        else:
            setattr(args, key, default)
    return args


# --------------------------------------------------------------------------
# output helpers

def _dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _grid(args) -> TimeGrid:
    return TimeGrid.uniform(args.T, args.steps)


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    from .pathdep import pathdep_ensemble

    grid = _grid(args)
    if args.sampler == "exact":
        if args.gamma != "zero":
            raise UsageError("the exact sampler has no drift; use --sampler euler")
        ens = sqrt_path(besq_exact_ensemble(args.x0 ** 2, args.delta, grid, args.paths,
                                            args.seed, args.threads))
    elif args.sampler == "euler":
        ens = pathdep_ensemble(args.x0, args.delta, by_name(args.gamma), grid, args.paths,
                               args.seed, args.variant, args.threads)
    else:
        raise UsageError(f"unknown sampler {args.sampler!r}")
    target = os.path.join(args.out, "paths.csv" if args.layout == "columns" else "paths")
    write_ensemble_csv(ens, target, args.layout)
    s_mean, s_se = mean_stderr(ens.terminal ** 2)
    expected = args.x0 ** 2 + args.delta * args.T
    _dump_json({
        "command": "simulate", "delta": args.delta, "x0": args.x0, "T": args.T,
        "paths": args.paths, "steps": args.steps, "seed": args.seed, "sampler": args.sampler,
        "gamma": args.gamma,
        "terminal_mean": mean_stderr(ens.terminal)[0],
        "terminal_square_mean": s_mean, "terminal_square_stderr": s_se,
        "expected_square_mean_driftless": expected,
        "min_value": float(ens.values.min()),
    }, os.path.join(args.out, "report.json"))
    return EXIT_OK


def cmd_verify_martingale(args) -> int:
    f = catalog(args.f, args.delta)
    rep = run_martingale_test(args.delta, args.x0, f, args.paths, _grid(args), args.seed,
                              gamma=by_name(args.gamma), sampler=args.sampler,
                              delta_shift=args.delta_shift,
                              allow_extended=(args.f == "harmonic"),
                              threshold=args.threshold, threads=args.threads)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(rep.to_json() + "\n")
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_density_check(args) -> int:
    if args.delta == 0 and args.x0 == 0:
        raise UsageError("BES(0) from 0 is the null process; nothing to check")
    grid = TimeGrid.uniform(args.T, 1)
    x = np.sqrt(besq_exact_ensemble(args.x0 ** 2, args.delta, grid, args.paths, args.seed,
                                    args.threads).terminal)
    spec = DensitySpec(args.delta, args.x0, args.T)
    cdf = lambda y: bes_cdf(spec, y)
    ks = ks_one_sample(x, cdf, lambda y: bes_cdf_left(spec, y))
    crit = ks_critical(x.size)
    qs = np.quantile(x, np.linspace(0.05, 0.95, 19))
    xs = np.sort(x)
    rows = []
    for q in qs:
        emp = np.searchsorted(xs, q, side="right") / xs.size
        th = float(cdf(q))
        rows.append((q, emp, th, abs(emp - th) / th if th > 0 else math.nan))
    _write_table(os.path.join(args.out, "table.csv"), ["x", "value", "limit", "rel_err"], rows)
    _dump_json({"command": "density-check", "delta": args.delta, "x0": args.x0, "T": args.T,
                "paths": args.paths, "seed": args.seed, "ks": ks, "ks_critical_0.01": crit,
                "pass": ks < crit}, os.path.join(args.out, "report.json"))
    return EXIT_OK if ks < crit else EXIT_FAILED


def cmd_limit_check(args) -> int:
    if args.x0 == 0:
        limit = p319_limit(args.delta, args.T)
        source = "closed form for x0 = 0"
    else:
        limit = local_time_limit(args.delta, args.x0, args.T)
        source = "small-x asymptotics of the transition density"
    rows = []
    for k in range(1, args.kmax + 1):
        x = 10.0 ** -k
        v = weighted_time_integral(args.delta, args.x0, args.T, x)
        rows.append((x, v, limit, abs(v - limit) / abs(limit) if limit else math.nan))
    _write_table(os.path.join(args.out, "table.csv"), ["x", "value", "limit", "rel_err"], rows)
    ok = rows[-1][3] < 0.01 if limit else abs(rows[-1][1]) < 1e-2
    _dump_json({"command": "limit-check", "delta": args.delta, "x0": args.x0, "T": args.T,
                "limit": limit, "limit_source": source, "pass": bool(ok),
                "table": [list(r) for r in rows]}, os.path.join(args.out, "report.json"))
    for r in rows:
        print(f"{r[0]:.0e}  {r[1]:.8f}  limit {r[2]:.8f}  rel_err {r[3]:.2e}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_girsanov_check(args) -> int:
    from .girsanov import girsanov_check

    rep = girsanov_check(args.x0, args.delta, by_name(args.gamma), _grid(args), args.paths,
                         args.seed, threads=args.threads)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(rep.to_json() + "\n")
    return EXIT_OK if rep.agrees else EXIT_FAILED


def cmd_pathdep_demo(args) -> int:
    from .pathdep import pathdep_ensemble, probe_assumptions, sup_moments

    gamma = by_name(args.gamma)
    ens = pathdep_ensemble(args.x0, args.delta, gamma, _grid(args), args.paths, args.seed,
                           args.variant, args.threads)
    target = os.path.join(args.out, "paths.csv" if args.layout == "columns" else "paths")
    write_ensemble_csv(ens, target, args.layout)
    probe = probe_assumptions(gamma, args.delta, seed=args.seed)
    nonneg = bool(np.all(ens.values >= 0))
    _dump_json({"command": "pathdep-demo", "delta": args.delta, "x0": args.x0, "gamma": args.gamma,
                "paths": args.paths, "steps": args.steps, "seed": args.seed,
                "nonnegative": nonneg, "terminal_mean": mean_stderr(ens.terminal)[0],
                "sup_moments": {str(k): v for k, v in sup_moments(ens).items()},
                "assumptions": {k: v for k, v in vars(probe).items()}},
               os.path.join(args.out, "report.json"))
    return EXIT_OK if nonneg else EXIT_FAILED


def cmd_couple_uniqueness(args) -> int:
    from .pathdep import coupling_refinement

    steps = [args.steps * 2 ** i for i in range(args.levels)]
    reps = coupling_refinement(args.x0, args.delta, by_name(args.gamma), args.T, steps,
                               args.seed, args.variant, args.variant_b, args.paths)
    rows = [(r.n_steps, r.median, r.q90, r.maximum) for r in reps]
    _write_table(os.path.join(args.out, "table.csv"), ["n_steps", "median", "q90", "max"], rows)
    med = [r.median for r in reps]
    decreasing = all(b < a for a, b in zip(med, med[1:]))
    _dump_json({"command": "couple-uniqueness", "delta": args.delta, "x0": args.x0,
                "gamma": args.gamma, "variants": [args.variant, args.variant_b],
                "medians": med, "decreasing": decreasing},
               os.path.join(args.out, "report.json"))
    return EXIT_OK if decreasing else EXIT_FAILED


def nonuniqueness_demo(delta, x0, f_name, n_paths, grid, seed, threshold=4.0, threads=None):
    """Martingale test on flipped paths plus the terminal-mean separation from unflipped ones."""
    from .pathdep import pathdep_ensemble
    from .core import ZERO

    f = catalog(f_name, delta)
    rep = run_martingale_test(delta, x0, f, n_paths, grid, seed, sampler="euler", flip=True,
                              threshold=threshold, threads=threads)
    X = pathdep_ensemble(x0, delta, ZERO, grid, n_paths, seed, threads=threads)
    flipped = sign_flip_after_zero(X)
    diff = X.terminal - flipped.terminal
    m, se = mean_stderr(diff)
    z = m / se if se > 0 else 0.0
    hit = float(np.mean(np.any(X.values == 0.0, axis=1)))
    return rep, {"terminal_mean_unflipped": mean_stderr(X.terminal)[0],
                 "terminal_mean_flipped": mean_stderr(flipped.terminal)[0],
                 "mean_difference": m, "stderr_difference": se, "z_difference": z,
                 "fraction_hitting_zero": hit}


def cmd_nonuniqueness_demo(args) -> int:
    rep, sep = nonuniqueness_demo(args.delta, args.x0, args.f, args.paths, _grid(args),
                                  args.seed, args.threshold, args.threads)
    distinct = sep["z_difference"] > 5.0
    _dump_json({"command": "nonuniqueness-demo", "martingale": json.loads(rep.to_json()),
                "separation": sep, "distinct_laws": distinct,
                "pass": bool(rep.passed and distinct)}, os.path.join(args.out, "report.json"))
    return EXIT_OK if rep.passed and distinct else EXIT_FAILED


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-martingale": cmd_verify_martingale,
    "density-check": cmd_density_check,
    "limit-check": cmd_limit_check,
    "girsanov-check": cmd_girsanov_check,
    "pathdep-demo": cmd_pathdep_demo,
    "couple-uniqueness": cmd_couple_uniqueness,
    "nonuniqueness-demo": cmd_nonuniqueness_demo,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = resolve(build_parser().parse_args(argv))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (DomainError, ValueError, KeyError, RuntimeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
