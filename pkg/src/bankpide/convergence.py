"""Grid-refinement studies.

Errors are estimated from successive levels: with nested meshes, the change
``Q^{n} - Q^{n/2}`` on the coarse nodes is proportional to the error of the
coarser level, so its l2 (trapezoidal quadrature) and l-infinity norms decay
at the scheme's order.
Space ladders double ``m`` (the clustered axes of ``2m`` contain every node of
``m``); time ladders double ``N`` on a fixed mesh.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ModelSpec
from .pricing import QUANTITIES
from .solver import Numerics, Surface


@dataclass
class LadderLevel:
    n: int
    value: float
    l2: float = float("nan")
    linf: float = float("nan")
    extrapolated: float = float("nan")  # |Q^n - Q| estimate at x0


@dataclass
class Ladder:
    axis: str
    flag: bool  # smoothing (space) or sqrt time change (time)
    levels: list
    slope_l2: float
    slope_linf: float


def fit_slope(ns: Sequence[float], errs: Sequence[float]) -> float:
    """Least-squares order ``p`` in ``err ~ C n^{-p}``."""
    ns, errs = np.asarray(ns, float), np.asarray(errs, float)
    ok = errs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(-np.polyfit(np.log(ns[ok]), np.log(errs[ok]), 1)[0])


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Trapezoidal-rule weights on the nodes ``x``."""
    h = np.diff(x)
    w = np.zeros_like(x, dtype=float)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _solve(quantity: str, spec: ModelSpec, num: Numerics) -> tuple:
    res = QUANTITIES[quantity](spec, num, False, 0.01)
    return res.value, res.surface


def _ladder(axis: str, flag: bool, ns, solve: Callable[[int], tuple], nested: bool, order: float) -> Ladder:
    levels = []
    prev = None
    for n in ns:
        value, surf = solve(n)
        lv = LadderLevel(int(n), float(value))
        if prev is not None:
            V = surf.values[::2, ::2] if nested else surf.values
            d = V - prev[1].values
            g = prev[1].grid
            lv.l2 = float(np.sqrt(np.sum(np.outer(trapezoid_weights(g.axis1.nodes),
                                                  trapezoid_weights(g.axis2.nodes)) * d * d)))
            lv.linf = float(np.max(np.abs(d)))
            lv.extrapolated = abs(value - prev[0]) / (2.0 ** order - 1.0)
        levels.append(lv)
        prev = (value, surf)
    ns_d = [lv.n for lv in levels[1:]]
    return Ladder(axis, flag, levels, fit_slope(ns_d, [lv.l2 for lv in levels[1:]]),
                  fit_slope(ns_d, [lv.linf for lv in levels[1:]]))


def space_ladder(spec: ModelSpec, numerics: Numerics, levels: Sequence[int] = (50, 100, 200, 400),
                 nT: int = 1000, smoothing: bool = True, quantity: str = "joint") -> Ladder:
    def solve(m):
        return _solve(quantity, spec, numerics.replace(m1=m, m2=m, N=nT, smoothing=smoothing))
    return _ladder("space", smoothing, levels, solve, nested=True, order=2.0 if smoothing else 1.0)


def time_ladder(spec: ModelSpec, numerics: Numerics, levels: Sequence[int] = (25, 50, 100, 200),
                nX: int = 800, T: float = 5.0, sqrt_time: bool = True, quantity: str = "joint") -> Ladder:
    sp = spec.replace(T=T)

    def solve(n):
        return _solve(quantity, sp, numerics.replace(m1=nX, m2=nX, N=n, sqrt_time=sqrt_time))
    return _ladder("time", sqrt_time, levels, solve, nested=False, order=2.0 if sqrt_time else 1.0)


def ladder_rows(ladder: Ladder) -> list:
    return [(ladder.axis, int(ladder.flag), lv.n, lv.value, lv.l2, lv.linf, lv.extrapolated)
            for lv in ladder.levels]
