"""Finite-difference stencils on non-uniform axes and the jump-integral recursions.

The jump operator of bank ``i`` in normalized coordinates is

    (J_i V)(x) = varsigma_i * int_0^inf V(x - u) exp(-varsigma_i u) du,

where ``V`` left of the boundary means the default value.  On the mesh it is
evaluated by the recursion ``J^{k+1} = e^{-varsigma h} J^k + w0 V^k + w1 V^{k+1}``
with ``h = x_{k+1} - x_k``.  Starting the recursion at ``J^0 = 0`` keeps only the
part of the integral inside the domain; starting it at the edge value adds the
jump-to-default part ``V(0) exp(-varsigma x)`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ShapeMismatch
from .grid import Axis, Grid2D

ADAMS_MOULTON, EXACT_EXP = "adams-moulton", "exact-exp"
ZERO_INIT, EDGE_INIT = "zero", "edge"
PECLET_SWITCH = 10.0


@dataclass(frozen=True)
class AxisStencil:
    """Stencils of one axis.

    ``d1[k]`` holds three first-derivative weights acting on nodes
    ``d1_start[k] .. d1_start[k] + 2``: forward (gamma) at node 0, central (beta)
    inside, backward (alpha) at the last node.  ``d2[k]`` holds the central
    second-derivative weights (delta); rows 0 and m are zero.
    """

    d1: np.ndarray
    d1_start: np.ndarray
    d2: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.d1[1:-1]

    @property
    def delta(self) -> np.ndarray:
        return self.d2[1:-1]

    @property
    def gamma(self) -> np.ndarray:
        return self.d1[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.d1[-1]


@dataclass(frozen=True)
class StencilSet:
    axis1: AxisStencil
    axis2: AxisStencil


def axis_stencil(axis: Axis) -> AxisStencil:
    x = axis.nodes
    n = x.size
    h = np.diff(x)
    d1 = np.zeros((n, 3))
    d2 = np.zeros((n, 3))
    start = np.arange(n) - 1
    hm, hp = h[:-1], h[1:]  # spacing left and right of each interior node
    s = hm + hp
    d1[1:-1, 0] = -hp / (hm * s)
    d1[1:-1, 1] = (hp - hm) / (hm * hp)
    d1[1:-1, 2] = hm / (hp * s)
    d2[1:-1, 0] = 2.0 / (hm * s)
    d2[1:-1, 1] = -2.0 / (hm * hp)
    d2[1:-1, 2] = 2.0 / (hp * s)
    # forward one-sided at x = 0
    a, b = h[0], h[1]
    d1[0] = [-(2 * a + b) / (a * (a + b)), (a + b) / (a * b), -a / (b * (a + b))]
    start[0] = 0
    # backward one-sided at x = x_max
    a, b = h[-2], h[-1]
    d1[-1] = [b / (a * (a + b)), -(a + b) / (a * b), (a + 2 * b) / (b * (a + b))]
    start[-1] = n - 3
    return AxisStencil(d1=d1, d1_start=start, d2=d2)


def build_stencils(grid: Grid2D) -> StencilSet:
    return StencilSet(axis_stencil(grid.axis1), axis_stencil(grid.axis2))


def apply_first(V: np.ndarray, st: AxisStencil, axis: int = 0) -> np.ndarray:
    """First derivative along ``axis`` at every node (one-sided at the ends)."""
    W = np.moveaxis(V, axis, 0)
    idx = st.d1_start[:, None] + np.arange(3)[None, :]
    out = np.einsum("kc,kc...->k...", st.d1, W[idx])
    return np.moveaxis(out, 0, axis)


def _second_interior(W, st):
    c = st.d2[1:-1]
    shape = (-1,) + (1,) * (W.ndim - 1)
    return c[:, 0].reshape(shape) * W[:-2] + c[:, 1].reshape(shape) * W[1:-1] + c[:, 2].reshape(shape) * W[2:]


def _first_interior(W, st):
    c = st.d1[1:-1]
    shape = (-1,) + (1,) * (W.ndim - 1)
    return c[:, 0].reshape(shape) * W[:-2] + c[:, 1].reshape(shape) * W[1:-1] + c[:, 2].reshape(shape) * W[2:]


def apply_diffusion(V: np.ndarray, stencils: StencilSet, xi1: float, xi2: float, rho: float):
    """Return ``(D1 V, D2 V, D12 V)`` at interior nodes; boundary entries are zero.

    ``D_i = 1/2 d^2/dx_i^2 + xi_i d/dx_i`` and ``D12 = rho d^2/(dx_1 dx_2)``.
    """
    n1 = stencils.axis1.d1.shape[0]
    n2 = stencils.axis2.d1.shape[0]
    if V.shape != (n1, n2):
        raise ShapeMismatch(f"surface has shape {V.shape}, grid expects {(n1, n2)}")
    D1 = np.zeros_like(V)
    D2 = np.zeros_like(V)
    D12 = np.zeros_like(V)
    s1, s2 = stencils.axis1, stencils.axis2
    D1[1:-1, 1:-1] = (0.5 * _second_interior(V, s1) + xi1 * _first_interior(V, s1))[:, 1:-1]
    VT = V.T
    D2[1:-1, 1:-1] = (0.5 * _second_interior(VT, s2) + xi2 * _first_interior(VT, s2)).T[1:-1, :]
    if rho != 0.0:
        D12 = apply_mixed(V, stencils, rho)
    return D1, D2, D12


def apply_mixed(V: np.ndarray, stencils: StencilSet, rho: float) -> np.ndarray:
    """``rho * sum_{k,l} beta1_k beta2_l V`` at interior nodes, zero on the boundary."""
    n1, n2 = V.shape
    b1 = stencils.axis1.d1[1:-1]
    b2 = stencils.axis2.d1[1:-1]
    out = np.zeros_like(V)
    acc = out[1:-1, 1:-1]
    for a in range(3):
        row = V[a:n1 - 2 + a]
        for b in range(3):
            acc += b1[:, a, None] * b2[None, :, b] * row[:, b:n2 - 2 + b]
    acc *= rho
    return out


def diffusion_band(st: AxisStencil, xi: float, shift: float = 0.0, upwind_unstable: bool = False):
    """Tridiagonal ``1/2 delta + xi beta - shift`` on interior rows; rows 0 and m
    are zero (the solver replaces them by Dirichlet identity rows).

    Returns ``(lower, diag, upper)`` with ``lower[k]`` coupling row ``k+1`` to
    ``k`` and ``upper[k]`` coupling row ``k`` to ``k+1``.

    With ``upwind_unstable`` strongly convective rows get artificial diffusion.
    With cell Peclet number ``P = |xi| max(h-, h+)`` and stretch term
    ``D = xi (h+ - h-)``, the coefficient ``1/2`` ramps continuously towards
    ``P/2``, reached at ``P = 2 PECLET_SWITCH`` or ``D = 1``, where the row
    has nonnegative off-diagonals (an M-matrix row).  The ramp starts at
    ``P = PECLET_SWITCH`` or ``D = 1/2``.  On stretched meshes the central
    stencil has growing modes at large ``P`` or ``D``.  Rows below both
    thresholds are unchanged.
    """
    n = st.d1.shape[0]
    diff = np.full(n - 2, 0.5)
    if upwind_unstable:
        hm, hp = _row_spacings(st)
        P = abs(xi) * np.maximum(hm, hp)
        D = xi * (hp - hm)  # central diagonal turns positive at D = 1
        r = np.clip(np.maximum(P / PECLET_SWITCH - 1.0, 2.0 * D - 1.0), 0.0, 1.0)
        diff += r * np.maximum(0.5 * P - 0.5, 0.0)
    lower = np.zeros(n - 1)
    diag = np.zeros(n)
    upper = np.zeros(n - 1)
    lower[:-1] = diff * st.d2[1:-1, 0] + xi * st.d1[1:-1, 0]
    diag[1:-1] = diff * st.d2[1:-1, 1] + xi * st.d1[1:-1, 1] - shift
    upper[1:] = diff * st.d2[1:-1, 2] + xi * st.d1[1:-1, 2]
    return lower, diag, upper


def _row_spacings(st: AxisStencil):
    """Spacings left and right of each interior node, recovered from ``d2``."""
    # d2 = [2/(hm s), -2/(hm hp), 2/(hp s)]: hp/hm = d2[0]/d2[2], hm hp = -2/d2[1]
    ratio = st.d2[1:-1, 0] / st.d2[1:-1, 2]
    prod = -2.0 / st.d2[1:-1, 1]
    hm = np.sqrt(prod / ratio)
    return hm, prod / hm


@dataclass(frozen=True)
class JumpWeights:
    decay: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    variant: str


def jump_weights(varsigma, h, variant: str = ADAMS_MOULTON):
    """``(exp(-varsigma h), w0, w1)`` for one interval (arrays broadcast)."""
    h = np.asarray(h, dtype=float)
    z = varsigma * h
    e = np.exp(-z)
    if variant == ADAMS_MOULTON:
        return e, 0.5 * z * e, 0.5 * z
    if variant == EXACT_EXP:
        # series for small z avoids cancellation: w0 = z/2 - z^2/3 + z^3/8, w1 = z/2 - z^2/6 + z^3/24
        small = z < 1e-4
        zs = np.where(small, 1.0, z)
        w0 = np.where(small, z / 2 - z * z / 3 + z ** 3 / 8, (1.0 - (1.0 + zs) * np.exp(-zs)) / zs)
        w1 = np.where(small, z / 2 - z * z / 6 + z ** 3 / 24, (-1.0 + zs + np.exp(-zs)) / zs)
        return e, w0, w1
    raise ValueError(f"unknown jump variant {variant!r}")


def axis_jump_weights(axis: Axis, varsigma: float, variant: str = ADAMS_MOULTON) -> JumpWeights:
    e, w0, w1 = jump_weights(varsigma, axis.spacings, variant)
    return JumpWeights(np.asarray(e), np.asarray(w0), np.asarray(w1), variant)


@numba.njit(cache=True)
def _sweep_rows(V, decay, w0, w1, init):
    """Recursion along axis 0 for every column of ``V``."""
    n, m = V.shape
    J = np.empty_like(V)
    for j in range(m):
        J[0, j] = init[j]
    for k in range(n - 1):
        for j in range(m):
            J[k + 1, j] = decay[k] * J[k, j] + w0[k] * V[k, j] + w1[k] * V[k + 1, j]
    return J


@numba.njit(cache=True)
def _sweep_vector(v, decay, w0, w1, init):
    n = v.size
    J = np.empty(n)
    J[0] = init
    for k in range(n - 1):
        J[k + 1] = decay[k] * J[k] + w0[k] * v[k] + w1[k] * v[k + 1]
    return J


def jump_sweep(V: np.ndarray, jw: JumpWeights, axis: int = 0, init=None) -> np.ndarray:
    """Apply one 1D jump recursion along ``axis``; ``init`` is the value at the
    first node (defaults to zero)."""
    if V.ndim == 1 and V.dtype == np.float64 and np.ndim(init) == 0:
        if V.size != jw.decay.size + 1:
            raise ShapeMismatch("surface does not match jump weights")
        return _sweep_vector(V, jw.decay, jw.w0, jw.w1, 0.0 if init is None else float(init))
    if axis == 0 and V.ndim == 2 and V.dtype == np.float64:
        if V.shape[0] != jw.decay.size + 1:
            raise ShapeMismatch("surface does not match jump weights")
        ini = np.zeros(V.shape[1]) if init is None else np.broadcast_to(np.asarray(init, float), V.shape[1:])
        return _sweep_rows(np.ascontiguousarray(V), jw.decay, jw.w0, jw.w1, np.ascontiguousarray(ini))
    W = np.moveaxis(np.asarray(V, dtype=float), axis, 0)
    if W.shape[0] != jw.decay.size + 1:
        raise ShapeMismatch("surface does not match jump weights")
    squeeze = W.ndim == 1
    W2 = W.reshape(W.shape[0], -1)
    if init is None:
        ini = np.zeros(W2.shape[1])
    else:
        ini = np.broadcast_to(np.asarray(init, dtype=float), W.shape[1:]).reshape(-1).copy()
    J = _sweep_rows(np.ascontiguousarray(W2), jw.decay, jw.w0, jw.w1, ini)
    J = J.reshape(W.shape)
    if squeeze:
        return J
    return np.moveaxis(J, 0, axis)


def apply_jumps(V: np.ndarray, jw1: JumpWeights, jw2: JumpWeights, mode: str = ZERO_INIT,
                corner: float | None = None):
    """Return ``(J1 V, J2 V, J12 V)``.

    ``mode='zero'`` integrates only over the domain (empty integral on the
    edges).  ``mode='edge'`` starts every recursion at the edge value so the
    integrals include the jump into default; for the common jump the row at
    ``x2 = 0`` starts from ``corner``, the value after both banks default
    (defaults to ``V[0, 0]``).
    """
    n1, n2 = jw1.decay.size + 1, jw2.decay.size + 1
    if V.shape != (n1, n2):
        raise ShapeMismatch(f"surface has shape {V.shape}, grid expects {(n1, n2)}")
    if mode == ZERO_INIT:
        J1 = jump_sweep(V, jw1, 0)
        J2 = jump_sweep(V, jw2, 1)
        I = jump_sweep(V, jw1, 0)
        J12 = jump_sweep(I, jw2, 1)
        return J1, J2, J12
    if mode != EDGE_INIT:
        raise ValueError(f"unknown jump mode {mode!r}")
    J1 = jump_sweep(V, jw1, 0, init=V[0, :])
    J2 = jump_sweep(V, jw2, 1, init=V[:, 0])
    c = V[0, 0] if corner is None else corner
    # first step along x1; on the x2 = 0 row the x1 jump-to-default lands on the corner
    edge = V[0, :].copy()
    edge[0] = c
    I = jump_sweep(V, jw1, 0, init=edge)
    J12 = jump_sweep(I, jw2, 1, init=I[:, 0])
    return J1, J2, J12


def jump_matrix(axis: Axis, varsigma: float, variant: str = ADAMS_MOULTON) -> np.ndarray:
    """Dense matrix of the zero-start recursion (used to check its structure)."""
    jw = axis_jump_weights(axis, varsigma, variant)
    n = axis.nodes.size
    return jump_sweep(np.eye(n), jw, 0)
