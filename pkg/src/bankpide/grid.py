"""Spatial and temporal meshes plus the cell-averaged initial data.

Surface values are stored as ``values[i, j]`` with ``i`` indexing the x1 axis
and ``j`` the x2 axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidMesh

IDENTITY, SQRT = "identity", "sqrt"


@dataclass(frozen=True)
class Axis:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise InvalidMesh("an axis needs at least three nodes")
        if x[0] != 0.0:
            raise InvalidMesh("an axis must start at 0")
        if np.any(np.diff(x) <= 0):
            raise InvalidMesh("axis nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def m(self) -> int:
        """Number of intervals."""
        return self.nodes.size - 1

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def max_ratio(self) -> float:
        h = self.spacings
        r = h[1:] / h[:-1]
        return float(max(r.max(), (1.0 / r).max()))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.nodes, delimiter=",", header="x", comments="", fmt="%.12g")


@dataclass(frozen=True)
class Grid2D:
    axis1: Axis
    axis2: Axis

    @property
    def shape(self):
        return self.axis1.nodes.size, self.axis2.nodes.size

    def mesh(self):
        return np.meshgrid(self.axis1.nodes, self.axis2.nodes, indexing="ij")

    def to_csv(self, path) -> None:
        X1, X2 = self.mesh()
        np.savetxt(path, np.column_stack([X1.ravel(), X2.ravel()]), delimiter=",",
                   header="x1,x2", comments="", fmt="%.12g")


@dataclass(frozen=True)
class TimeGrid:
    """``tau`` are the nodes of the solve variable, ``t`` the physical (normalized)
    times.  Both coincide for the identity transform."""

    Tbar: float
    N: int
    transform: str
    tau: np.ndarray
    t: np.ndarray

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0])


def build_time_grid(Tbar: float, N: int, transform: str = IDENTITY) -> TimeGrid:
    if N < 1:
        raise ValueError("N must be at least 1")
    if transform == IDENTITY:
        tau = np.linspace(0.0, Tbar, N + 1)
        t = tau.copy()
    elif transform == SQRT:
        tau = np.linspace(0.0, np.sqrt(Tbar), N + 1)
        t = tau ** 2
        t[-1] = Tbar
    else:
        raise ValueError(f"unknown time transform {transform!r}")
    return TimeGrid(Tbar=float(Tbar), N=int(N), transform=transform, tau=tau, t=t)


def _cluster_map(x, centers, beta, slope):
    x = np.asarray(x, dtype=float)
    out = slope * x
    for c in centers:
        out = out + np.arcsinh((x - c) / beta) - np.arcsinh(-c / beta)
    return out


def build_clustered_axis(m: int, x_max: float, centers: Sequence[float] = (),
                         beta: float | None = None, gamma: float = 1.0) -> Axis:
    """Axis with ``m`` intervals on ``[0, x_max]`` refined around ``centers``.

    The nodes are the preimage of a uniform grid under the increasing map
    ``g(x) = sum_k [asinh((x-c_k)/beta) - asinh(-c_k/beta)] + gamma*S(x_max)*x/x_max``.
    Because the parameter grid is uniform, the axis for ``2m`` contains every
    node of the axis for ``m``.
    """
    if m < 16:
        raise InvalidMesh("at least 16 intervals are required")
    if x_max <= 0:
        raise InvalidMesh("x_max must be positive")
    centers = [float(c) for c in centers]
    if any(c < 0 or c > x_max for c in centers):
        raise InvalidMesh("cluster centres must lie inside [0, x_max]")
    if beta is None:
        beta = 0.025 * x_max
    if beta <= 0:
        raise InvalidMesh("beta must be positive")
    if not centers:
        return Axis(np.linspace(0.0, x_max, m + 1))

    s_end = float(_cluster_map(x_max, centers, beta, 0.0))
    slope = gamma * s_end / x_max
    g_end = s_end + slope * x_max
    u = np.linspace(0.0, g_end, m + 1)
    lo = np.zeros_like(u)
    hi = np.full_like(u, x_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = _cluster_map(mid, centers, beta, slope) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-15 * x_max:
            break
    x = 0.5 * (lo + hi)
    x[0], x[-1] = 0.0, x_max
    axis = Axis(x)
    if axis.max_ratio() > 2.0:
        raise InvalidMesh(f"spacing ratio {axis.max_ratio():.3f} exceeds 2; increase beta")
    return axis


def merge_centers(centers: Sequence[float], x_max: float, min_gap: float) -> list:
    """Drop duplicates and centres outside the domain; near-coincident centres
    would otherwise double the local refinement."""
    out = []
    for c in sorted(float(c) for c in centers if 0.0 <= c <= x_max):
        if not out or c - out[-1] > min_gap:
            out.append(c)
    return out


def cell_bounds(axis: Axis):
    """Control cells around each node: midpoints inside, half cells at the ends."""
    x = axis.nodes
    mid = 0.5 * (x[1:] + x[:-1])
    lo = np.concatenate([[x[0]], mid])
    hi = np.concatenate([mid, [x[-1]]])
    return lo, hi


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _gauss_box(f, x0, x1, y0, y1):
    """Tensor 4x4 Gauss-Legendre integral over many boxes at once."""
    cx, rx = 0.5 * (x0 + x1), 0.5 * (x1 - x0)
    cy, ry = 0.5 * (y0 + y1), 0.5 * (y1 - y0)
    X = cx[:, None, None] + rx[:, None, None] * _GL_X[None, :, None]
    Y = cy[:, None, None] + ry[:, None, None] * _GL_X[None, None, :]
    X, Y = np.broadcast_arrays(X, Y)
    vals = np.asarray(f(X, Y), dtype=float)
    w = _GL_W[:, None] * _GL_W[None, :]
    return np.einsum("kab,ab->k", vals, w) * rx * ry


def _split4(lo, hi):
    e = np.linspace(0.0, 1.0, 5)
    pts = lo[:, None] + (hi - lo)[:, None] * e[None, :]
    return pts[:, :-1], pts[:, 1:]


def cell_average(payoff: Callable, grid: Grid2D, tol: float = 1e-8, max_depth: int = 3) -> np.ndarray:
    """Cell means of ``payoff`` around every node.

    Each cell is integrated with a 4x4 Gauss rule and compared with the sum over
    its 4x4 sub-cells; where the two disagree by more than ``tol`` (relative to
    the cell area) the sub-cells are refined again, up to ``max_depth`` levels.
    """
    lo1, hi1 = cell_bounds(grid.axis1)
    lo2, hi2 = cell_bounds(grid.axis2)
    n1, n2 = grid.shape
    I, J = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    owner = (I * n2 + J).ravel()
    bx0, bx1 = lo1[I].ravel(), hi1[I].ravel()
    by0, by1 = lo2[J].ravel(), hi2[J].ravel()
    area = (bx1 - bx0) * (by1 - by0)
    total = np.zeros(n1 * n2)
    coarse = _gauss_box(payoff, bx0, bx1, by0, by1)

    for depth in range(max_depth + 1):
        sx0, sx1 = _split4(bx0, bx1)
        sy0, sy1 = _split4(by0, by1)
        k = bx0.size
        fx0 = np.repeat(sx0, 4, axis=1).ravel()
        fx1 = np.repeat(sx1, 4, axis=1).ravel()
        fy0 = np.tile(sy0, (1, 4)).ravel()
        fy1 = np.tile(sy1, (1, 4)).ravel()
        sub = _gauss_box(payoff, fx0, fx1, fy0, fy1)
        fine = sub.reshape(k, 16).sum(axis=1)
        done = np.abs(fine - coarse) <= tol * np.maximum(area, 1e-300)
        if depth == max_depth:
            done[:] = True
        np.add.at(total, owner[done], fine[done])
        refine = np.repeat(~done, 16)
        if not refine.any():
            break
        owner = np.repeat(owner, 16)[refine]
        bx0, bx1, by0, by1 = fx0[refine], fx1[refine], fy0[refine], fy1[refine]
        coarse = sub[refine]
        area = (bx1 - bx0) * (by1 - by0)

    cell_area = ((hi1 - lo1)[:, None] * (hi2 - lo2)[None, :]).ravel()
    return (total / cell_area).reshape(n1, n2)


def cell_average_1d(payoff: Callable, axis: Axis, tol: float = 1e-12, max_depth: int = 6) -> np.ndarray:
    """One-dimensional analogue of :func:`cell_average`."""
    lo, hi = cell_bounds(axis)
    n = lo.size
    owner = np.arange(n)
    a, b = lo.copy(), hi.copy()

    def gauss(a, b):
        c, r = 0.5 * (a + b), 0.5 * (b - a)
        X = c[:, None] + r[:, None] * _GL_X[None, :]
        return (np.asarray(payoff(X), dtype=float) @ _GL_W) * r

    total = np.zeros(n)
    coarse = gauss(a, b)
    for depth in range(max_depth + 1):
        s0, s1 = _split4(a, b)
        sub = gauss(s0.ravel(), s1.ravel())
        fine = sub.reshape(-1, 4).sum(axis=1)
        done = np.abs(fine - coarse) <= tol * (b - a)
        if depth == max_depth:
            done[:] = True
        np.add.at(total, owner[done], fine[done])
        refine = np.repeat(~done, 4)
        if not refine.any():
            break
        owner = np.repeat(owner, 4)[refine]
        a, b = s0.ravel()[refine], s1.ravel()[refine]
        coarse = sub[refine]
    return total / (hi - lo)
