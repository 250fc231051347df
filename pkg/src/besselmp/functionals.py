"""A few ready-made drift functionals, addressable by name from the CLI."""
from __future__ import annotations

import numpy as np

from .core import ZERO, PathFunctional, constant_functional


def sup_sqrt_clipped(k: float) -> PathFunctional:
    """``min(sup_{r<=s} sqrt|eta(r)|, K)``: bounded, genuinely path-dependent."""
    k = float(k)

    def ev(times, hist):
        return np.minimum(np.sqrt(np.abs(hist)).max(axis=-1), k)

    return PathFunctional(ev, growth_constant=k, bounded_by=k, label=f"supclip({k:g})")


def saturating(c: float) -> PathFunctional:
    """``c * min(|eta(s)|, 1)``.

    Its induced squared-process drift is ``2c min(|S|, sqrt|S|) + delta``,
    which is Lipschitz with constant ``2|c|``.
    """
    c = float(c)

    def ev(times, hist):
        return c * np.minimum(np.abs(hist[..., -1]), 1.0)

    return PathFunctional(ev, growth_constant=abs(c), lipschitz_constant=abs(c),
                          bounded_by=abs(c), label=f"saturating({c:g})")


def tanh_integral(c: float) -> PathFunctional:
    """``c * tanh(int_0^s eta(r) dr)`` with a left Riemann sum on the grid."""
    c = float(c)

    def ev(times, hist):
        if times.size < 2:
            return np.zeros(hist.shape[:-1])
        integral = (hist[..., :-1] * np.diff(times)).sum(axis=-1)
        return c * np.tanh(integral)

    return PathFunctional(ev, growth_constant=abs(c), lipschitz_constant=abs(c),
                          bounded_by=abs(c), label=f"tanh_integral({c:g})")


def by_name(spec: str) -> PathFunctional:
    """Parse ``zero``, ``const:c``, ``supclip:K``, ``saturating:c``, ``tanh_integral:c``."""
    name, _, arg = spec.partition(":")
    if name == "zero":
        return ZERO
    factories = {
        "const": constant_functional,
        "supclip": sup_sqrt_clipped,
        "saturating": saturating,
        "tanh_integral": tanh_integral,
    }
    if name not in factories or not arg:
        raise ValueError(f"unknown functional {spec!r}")
    return factories[name](float(arg))
