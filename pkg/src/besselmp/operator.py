"""The singular operator ``L^delta``, its domain, and the harmonic-function toolkit.

``L^delta f(x) = f''(x)/2 + (delta - 1) f'(x) / (2x)`` away from the origin
and ``delta f''(0)/2`` at it.  The same expression covers ``delta = 1``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import Dimension, DomainError, as_dimension

PROBE_EXPONENTS = tuple(range(2, 9))  # x = +-10^-k
LIMIT_TOL = 1e-6
FDERIV_TOL = 1e-10


class Membership(str, enum.Enum):
    CORE = "core_domain"
    EXTENDED = "extended_domain"
    REJECTED = "rejected"


Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunction:
    """A scalar function with its first two derivatives.

    ``f2`` may be undefined at 0; the operator only needs its one-sided
    limits there.  ``membership`` is the caller's declaration and is
    re-checked by :func:`check_domain`.
    """

    f: Fn
    f1: Fn
    f2: Fn
    label: str = "f"
    membership: Optional[Membership] = None

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.f(x)


@dataclass
class DomainReport:
    membership: Membership
    delta: float
    f1_at_zero: float = math.nan
    f2_left: float = math.nan
    f2_right: float = math.nan
    g_limit: float = math.nan
    G_limit: float = math.nan
    borderline: bool = False
    notes: list = field(default_factory=list)

    @property
    def L_at_zero(self) -> float:
        """Value of ``L^delta f(0)`` implied by the probed limits."""
        return self.G_limit / 2.0


def _ev(fn, x):
    with np.errstate(all="ignore"):
        return np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)


def _stabilized(seq: np.ndarray, tol: float = LIMIT_TOL):
    """Limit of a sequence probed at shrinking ``|x|``, or ``None``.

    After one Richardson step the last three successive differences must
    fall below ``tol`` scaled by the magnitude; ``borderline`` is raised when
    only the last one does.
    """
    if not np.all(np.isfinite(seq)):
        return None, False
    # one Richardson level for a leading O(|x|) error; probes shrink by 10
    seq = (10.0 * seq[1:] - seq[:-1]) / 9.0
    scale = 1.0 + np.abs(seq[-1])
    diffs = np.abs(np.diff(seq)) / scale
    if np.all(diffs[-3:] <= tol):
        return float(seq[-1]), False
    if diffs[-1] <= tol:
        return float(seq[-1]), True
    return None, False


def _richardson_one_sided(fn, side: float) -> float:
    """One-sided derivative at 0 of ``fn`` by Richardson extrapolation."""
    h = 1e-3
    hs = h / 2.0 ** np.arange(6)
    f0 = float(_ev(fn, 0.0))
    table = [(float(_ev(fn, side * hh)) - f0) / (side * hh) for hh in hs]
    for level in range(1, len(table)):
        table = [(2 ** level * table[i + 1] - table[i]) / (2 ** level - 1)
                 for i in range(len(table) - 1)]
    return table[0]


def check_domain(f: TestFunction, delta) -> DomainReport:
    """Classify ``f`` as core-domain, extended-domain or rejected for ``delta``."""
    d = as_dimension(delta).delta
    rep = DomainReport(Membership.REJECTED, d)
    probes = 10.0 ** -np.array(PROBE_EXPONENTS, dtype=float)
    try:
        f1_0 = float(_ev(f.f1, 0.0))
        right = _ev(f.f2, probes)
        left = _ev(f.f2, -probes)
        f1p = _ev(f.f1, probes)
        f1m = _ev(f.f1, -probes)
    except Exception as exc:  # evaluator blew up near 0
        rep.notes.append(f"evaluation failed near 0: {exc!r}")
        return rep
    rep.f1_at_zero = f1_0

    r_lim, r_border = _stabilized(right)
    l_lim, l_border = _stabilized(left)
    rep.f2_right = math.nan if r_lim is None else r_lim
    rep.f2_left = math.nan if l_lim is None else l_lim
    core = math.isfinite(f1_0) and abs(f1_0) <= FDERIV_TOL
    if core and r_lim is not None and l_lim is not None:
        # the tabulated f2 must agree with the difference quotient of f1
        for side, lim in ((1.0, r_lim), (-1.0, l_lim)):
            rich = _richardson_one_sided(f.f1, side)
            if abs(rich - lim) > LIMIT_TOL * (1.0 + abs(lim)):
                rep.notes.append(f"f2 limit {lim} disagrees with f1 difference quotient {rich}")
                core = False
        if d > 0 and abs(r_lim - l_lim) > LIMIT_TOL * (1.0 + abs(r_lim)):
            rep.notes.append("one-sided second derivatives differ at 0")
            core = False
    else:
        if not (math.isfinite(f1_0) and abs(f1_0) <= FDERIV_TOL):
            rep.notes.append(f"f'(0) = {f1_0} != 0")
        if r_lim is None or l_lim is None:
            rep.notes.append("one-sided limits of f'' at 0 do not stabilize")
        core = False

    # continuous extensions of g = f'|x|^(delta-1) and G = g'|x|^(1-delta)
    with np.errstate(all="ignore"):
        g_r = f1p * probes ** (d - 1.0)
        g_l = f1m * probes ** (d - 1.0)
        G_r = right + (d - 1.0) * f1p / probes
        G_l = left + (d - 1.0) * f1m / (-probes)
    limits = [_stabilized(s) for s in (g_r, g_l, G_r, G_l)]
    ext = all(lim is not None for lim, _ in limits)
    if ext:
        (gr, b1), (gl, b2), (Gr, b3), (Gl, b4) = limits
        if abs(gr - gl) > LIMIT_TOL * (1 + abs(gr)) or abs(Gr - Gl) > LIMIT_TOL * (1 + abs(Gr)):
            ext = False
            if not core:
                rep.notes.append("g or G has different one-sided limits at 0")
        else:
            rep.g_limit, rep.G_limit = gr, Gr
            rep.borderline = any((b1, b2, b3, b4, r_border, l_border))
    if core:
        rep.membership = Membership.CORE
        rep.G_limit = d * r_lim
        rep.borderline = r_border or l_border
    elif ext and d < 1.0:
        rep.membership = Membership.EXTENDED
    if rep.borderline:
        rep.notes.append("limit probe stabilized only at the finest scale")
    return rep


def apply_L(f: TestFunction, delta, x, *, allow_extended: bool = False,
            report: Optional[DomainReport] = None):
    """Evaluate ``L^delta f`` at ``x`` (scalar or array)."""
    d = as_dimension(delta).delta
    rep = report if report is not None else check_domain(f, d)
    if rep.membership is Membership.REJECTED:
        raise DomainError(f"{f.label} is not in the domain of L^{d}: {'; '.join(rep.notes)}")
    if rep.membership is Membership.EXTENDED and not allow_extended:
        raise DomainError(f"{f.label} is only in the extended domain; pass allow_extended=True")
    x_arr = np.asarray(x, dtype=float)
    nz = x_arr != 0
    safe = np.where(nz, x_arr, 1.0)
    with np.errstate(all="ignore"):
        off = 0.5 * _ev(f.f2, safe) + 0.5 * (d - 1.0) * _ev(f.f1, safe) / safe
    if rep.membership is Membership.CORE:
        at0 = 0.5 * d * rep.f2_right if d > 0 else 0.0
    else:
        at0 = rep.L_at_zero
    out = np.where(nz, off, at0)
    return out if out.ndim else float(out)


def L_divergence_form(f: TestFunction, delta, x, h: float = 1e-4):
    """``(|x|^(1-delta)/2) d/dx(|x|^(delta-1) f'(x))`` by central differences, ``x != 0``."""
    d = as_dimension(delta).delta
    x = np.asarray(x, dtype=float)
    g = lambda y: np.abs(y) ** (d - 1.0) * _ev(f.f1, y)
    step = h * np.maximum(1.0, np.abs(x))
    return 0.5 * np.abs(x) ** (1.0 - d) * (g(x + step) - g(x - step)) / (2 * step)


# --------------------------------------------------------------------------
# harmonic function, Lamperti coefficient, Engelbert-Schmidt

def harmonic_h(delta, x):
    """``h(x) = sgn(x) |x|^(2-delta) / (2-delta)``."""
    d = as_dimension(delta).delta
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.abs(x) ** (2.0 - d) / (2.0 - d)
    return out if out.ndim else float(out)


def h_inverse(delta, y):
    d = as_dimension(delta).delta
    y = np.asarray(y, dtype=float)
    out = np.sign(y) * (np.abs(y) * (2.0 - d)) ** (1.0 / (2.0 - d))
    return out if out.ndim else float(out)


def h_prime(delta, x):
    """``|x|^(1-delta)``, i.e. ``exp(-Sigma(x))``."""
    d = as_dimension(delta).delta
    x = np.asarray(x, dtype=float)
    out = np.abs(x) ** (1.0 - d)
    return out if out.ndim else float(out)


def h_second(delta, x):
    d = as_dimension(delta).delta
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = (1.0 - d) * np.sign(x) * np.abs(x) ** (-d)
    return out if out.ndim else float(out)


def sigma0(delta, y):
    """Diffusion coefficient of ``h(X)``: ``sgn(y) (2-delta)^a |y|^a``, ``a = (1-delta)/(2-delta)``."""
    d = as_dimension(delta).delta
    a = (1.0 - d) / (2.0 - d)
    y = np.asarray(y, dtype=float)
    out = np.sign(y) * (2.0 - d) ** a * np.abs(y) ** a
    return out if out.ndim else float(out)


class ESCriterion(NamedTuple):
    diverges: bool
    value: float
    exponent: float


def engelbert_schmidt_diverges(delta, eps: float) -> ESCriterion:
    """Check whether ``int_0^eps sigma0(y)^-2 dy`` is infinite.

    The integrand is ``y^p / (2-delta)^((2-2delta)/(2-delta))`` with
    ``p = (2delta-2)/(2-delta)``; it diverges iff ``p <= -1`` (only ``delta = 0``).
    """
    d = as_dimension(delta).delta
    if not eps > 0:
        raise DomainError("eps must be > 0")
    p = (2.0 * d - 2.0) / (2.0 - d)
    if p <= -1.0:
        return ESCriterion(True, math.inf, p)
    scale = (2.0 - d) ** ((2.0 - 2.0 * d) / (2.0 - d))
    return ESCriterion(False, eps ** (p + 1.0) / (p + 1.0) / scale, p)


# --------------------------------------------------------------------------
# catalog

def monomial(k: int) -> TestFunction:
    k = int(k)
    return TestFunction(
        lambda x: np.asarray(x, dtype=float) ** k,
        lambda x: k * np.asarray(x, dtype=float) ** (k - 1) if k >= 1 else np.zeros_like(x),
        lambda x: (k * (k - 1) * np.asarray(x, dtype=float) ** (k - 2)
                   if k >= 2 else np.zeros_like(np.asarray(x, dtype=float))),
        label=f"x{k}",
    )


def constant(c: float = 1.0) -> TestFunction:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return TestFunction(lambda x: np.full_like(np.asarray(x, dtype=float), c), z, z,
                        label=f"const({c:g})")


def bump(radius: float = 2.0) -> TestFunction:
    """``exp(-1/(1 - (x/r)^2))`` on ``|x| < r``, zero outside; smooth, even."""
    r = float(radius)

    def parts(x):
        x = np.asarray(x, dtype=float)
        u = x / r
        q = 1.0 - u * u
        inside = q > 0
        qs = np.where(inside, q, 1.0)
        f = np.where(inside, np.exp(-1.0 / qs), 0.0)
        a = -2.0 * u / (r * qs * qs)
        da = -2.0 / (r * r * qs * qs) - 8.0 * u * u / (r * r * qs ** 3)
        return f, np.where(inside, f * a, 0.0), np.where(inside, f * (a * a + da), 0.0)

    return TestFunction(lambda x: parts(x)[0], lambda x: parts(x)[1], lambda x: parts(x)[2],
                        label="bump0")


def harmonic(delta) -> TestFunction:
    d = as_dimension(delta)
    return TestFunction(lambda x: harmonic_h(d, x), lambda x: h_prime(d, x),
                        lambda x: h_second(d, x), label="harmonic")


def catalog(name: str, delta=None) -> TestFunction:
    """Built-in test functions by name: ``x2``, ``x3``, ``x4``, ``bump0``, ``harmonic``."""
    if name == "bump0":
        return bump()
    if name == "harmonic":
        if delta is None:
            raise ValueError("harmonic needs delta")
        return harmonic(delta)
    if name.startswith("x") and name[1:].isdigit():
        return monomial(int(name[1:]))
    raise KeyError(f"unknown test function {name!r}")


CATALOG_NAMES = ("x2", "x3", "x4", "bump0", "harmonic")
