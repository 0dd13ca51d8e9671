"""Time stepping: the Hundsdorfer-Verwer ADI scheme for the 2D PIDE and a
theta-scheme for the 1D boundary sub-problems.

Problems are posed forward in ``tau`` = normalized time to maturity:

    dV/dtau = D1 V + D2 V + D12 V + sum_k lam_k (J_k V) - v V - chi(tau, x).

With the square-root time change the solve variable is ``s = sqrt(tau)`` and
every right-hand side is multiplied by ``2 s``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import lapack
import numba

from . import operators as ops
from .errors import ShapeMismatch, SingularTridiagonal, WindowViolation
from .grid import SQRT, IDENTITY, Axis, Grid2D, TimeGrid, build_time_grid, cell_average, cell_average_1d

EdgeFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HvParams:
    theta: float = 0.75
    sigma_hv: float = 0.5

    def in_window(self) -> bool:
        return 0.5 <= self.sigma_hv <= (1.0 + math.sqrt(2.0) / 2.0) * self.theta

    def check(self) -> None:
        if not self.in_window():
            warnings.warn(WindowViolation(
                f"theta={self.theta}, sigma={self.sigma_hv} outside 1/2 <= sigma <= (1+sqrt(2)/2) theta"))


@dataclass(frozen=True)
class Numerics:
    """Discretization settings shared by every pricing run.

    ``dt`` is the step in physical years; ``N`` overrides it when given.
    """

    m1: int = 100
    m2: int = 100
    x_max: float = 10.0
    beta: Optional[float] = None
    cluster: bool = True
    dt: float = 0.01
    N: Optional[int] = None
    hv: HvParams = field(default_factory=HvParams)
    smoothing: bool = True
    sqrt_time: bool = True
    jump_variant: str = ops.ADAMS_MOULTON
    jump_mode: str = ops.EDGE_INIT
    m_1d: Optional[int] = None
    rannacher: int = 4
    picard: int = 2

    def steps(self, T: float) -> int:
        if self.N is not None:
            return int(self.N)
        return max(1, int(math.ceil(T / self.dt - 1e-9)))

    def time_grid(self, T: float, Tbar: float) -> TimeGrid:
        return build_time_grid(Tbar, self.steps(T), SQRT if self.sqrt_time else IDENTITY)

    def replace(self, **changes) -> "Numerics":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class Surface:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ShapeMismatch("values do not match grid")

    def __call__(self, x1, x2):
        f = RegularGridInterpolator((self.grid.axis1.nodes, self.grid.axis2.nodes), self.values,
                                    method="linear", bounds_error=False, fill_value=None)
        pts = np.stack(np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float)), axis=-1)
        out = f(pts.reshape(-1, 2)).reshape(pts.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path) -> None:
        X1, X2 = self.grid.mesh()
        np.savetxt(path, np.column_stack([X1.ravel(), X2.ravel(), self.values.ravel()]),
                   delimiter=",", header="x1,x2,value", comments="", fmt="%.12g")


@dataclass
class Curve1D:
    """Solution of a 1D sub-problem at every time level.

    ``values[n, k]`` is the value at normalized time to maturity ``t[n]`` and
    local coordinate ``y[k]``; global coordinates map as ``y = x - offset``.
    Below the local origin the curve returns ``below(t)`` (the default value).
    """

    t: np.ndarray
    y: np.ndarray
    values: np.ndarray
    offset: float = 0.0
    below: Callable[[float], float] | float = 0.0

    def at_time(self, t: float) -> np.ndarray:
        n = int(np.searchsorted(self.t, t))
        if n < self.t.size and abs(self.t[n] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.values[n]
        if n > 0 and abs(self.t[n - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.values[n - 1]
        n = min(max(n, 1), self.t.size - 1)
        w = (t - self.t[n - 1]) / (self.t[n] - self.t[n - 1])
        return (1 - w) * self.values[n - 1] + w * self.values[n]

    def __call__(self, t: float, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) - self.offset
        row = self.at_time(t)
        out = np.interp(y, self.y, row)
        low = self.below(t) if callable(self.below) else self.below
        return np.where(y < 0.0, low, out)


@dataclass
class PricingProblem:
    """One forward PIDE solve.

    Edge functions take ``(tau, coords)`` and return values along the edge:
    ``edge_x1_0`` on ``x1 = 0`` (argument x2), ``edge_x2_0`` on ``x2 = 0``,
    ``edge_x1_max`` on ``x1 = x_max`` and ``edge_x2_max`` on ``x2 = x_max``.
    ``corner(tau)`` is the value once both banks are in default; it seeds the
    common-jump recursion.  ``source(tau, X1, X2)`` is subtracted from the
    right-hand side.
    """

    payoff: Callable
    edge_x1_0: EdgeFn
    edge_x2_0: EdgeFn
    edge_x1_max: EdgeFn
    edge_x2_max: EdgeFn
    corner: Callable[[float], float] = lambda t: 0.0
    source: Optional[Callable] = None
    initial: Optional[np.ndarray] = None


def _const_edge(c):
    return lambda t, x: np.full(np.shape(x), float(c))


class _Tridiag:
    """Factorized ``I - c*A`` for one axis with Dirichlet identity rows."""

    def __init__(self, lower, diag, upper, c):
        n = diag.size
        dl = -c * lower
        d = 1.0 - c * diag
        du = -c * upper
        d[0] = d[-1] = 1.0
        du[0] = 0.0
        dl[-1] = 0.0
        self.n = n
        dl, d, du, du2, ipiv, info = lapack.dgttrf(dl, d, du)
        if info != 0:
            raise SingularTridiagonal(f"tridiagonal factorization failed (info={info})")
        self.f = (dl, d, du, du2, ipiv)

    def solve(self, B):
        x, info = lapack.dgttrs(*self.f, B)
        if info != 0:
            raise SingularTridiagonal(f"tridiagonal solve failed (info={info})")
        return x


class SplitSystem:
    """Discrete operators and boundary data of one 2D problem."""

    def __init__(self, grid: Grid2D, nm, problem: PricingProblem, variant: str = ops.ADAMS_MOULTON,
                 jump_mode: str = ops.EDGE_INIT):
        self.grid = grid
        self.problem = problem
        self.st = ops.build_stencils(grid)
        self.xi1, self.xi2, self.rho = nm.xi1, nm.xi2, nm.rho
        self.lam1, self.lam2, self.lam12 = nm.lam1, nm.lam2, nm.lam12
        self.jumps = nm.lam1 + nm.lam2 + nm.lam12 > 0
        self.jump_mode = jump_mode
        if self.jumps:
            self.jw1 = ops.axis_jump_weights(grid.axis1, nm.varsigma1, variant)
            self.jw2 = ops.axis_jump_weights(grid.axis2, nm.varsigma2, variant)
        self.band1 = ops.diffusion_band(self.st.axis1, nm.xi1, nm.lam1 + 0.5 * nm.lam12)
        self.band2 = ops.diffusion_band(self.st.axis2, nm.xi2, nm.lam2 + 0.5 * nm.lam12)
        X1, X2 = grid.mesh()
        self.X1, self.X2 = X1, X2

    def apply_boundary(self, U: np.ndarray, tau: float) -> np.ndarray:
        p = self.problem
        x1, x2 = self.grid.axis1.nodes, self.grid.axis2.nodes
        U[:, 0] = p.edge_x2_0(tau, x1)
        U[:, -1] = p.edge_x2_max(tau, x1)
        U[0, :] = p.edge_x1_0(tau, x2)
        U[-1, :] = p.edge_x1_max(tau, x2)
        return U

    def F0(self, U: np.ndarray, tau: float) -> np.ndarray:
        out = ops.apply_mixed(U, self.st, self.rho) if self.rho != 0 else np.zeros_like(U)
        if self.jumps:
            J1, J2, J12 = ops.apply_jumps(U, self.jw1, self.jw2, self.jump_mode, corner=self.problem.corner(tau))
            out = out + self.lam1 * J1 + self.lam2 * J2 + self.lam12 * J12
        if self.problem.source is not None:
            out = out - np.broadcast_to(self.problem.source(tau, self.X1, self.X2), U.shape)
        out[0, :] = out[-1, :] = 0.0
        out[:, 0] = out[:, -1] = 0.0
        return out

    def F1(self, U: np.ndarray) -> np.ndarray:
        lo, d, up = self.band1
        out = np.zeros_like(U)
        out[1:-1] = lo[:-1, None] * U[:-2] + d[1:-1, None] * U[1:-1] + up[1:, None] * U[2:]
        out[:, 0] = out[:, -1] = 0.0
        return out

    def F2(self, U: np.ndarray) -> np.ndarray:
        lo, d, up = self.band2
        out = np.zeros_like(U)
        out[:, 1:-1] = lo[None, :-1] * U[:, :-2] + d[None, 1:-1] * U[:, 1:-1] + up[None, 1:] * U[:, 2:]
        out[0, :] = out[-1, :] = 0.0
        return out

    def factor(self, c: float):
        return _Tridiag(*self.band1, c), _Tridiag(*self.band2, c)


def hv_step(U_prev: np.ndarray, tau_prev: float, tau_next: float, system: SplitSystem, hv: HvParams,
            ds: float | None = None, scale_prev: float = 1.0, scale_next: float = 1.0, factors=None) -> np.ndarray:
    """One HV step from ``tau_prev`` to ``tau_next``.

    ``ds`` is the step in the solve variable (defaults to ``tau_next - tau_prev``);
    ``scale_prev``/``scale_next`` multiply every right-hand side (``2 s`` under the
    square-root time change).
    """
    dt = (tau_next - tau_prev) if ds is None else ds
    th, sg = hv.theta, hv.sigma_hv
    sys = system
    a0 = scale_prev * dt
    a1 = scale_next * dt
    if factors is None:
        factors = sys.factor(th * a1)
    T1, T2 = factors

    F0u = sys.F0(U_prev, tau_prev)
    F1u = sys.F1(U_prev)
    F2u = sys.F2(U_prev)
    Y0 = U_prev + a0 * (F0u + F1u + F2u)
    sys.apply_boundary(Y0, tau_next)
    # implicit x1 stage
    rhs = Y0 - th * a0 * F1u
    sys.apply_boundary(rhs, tau_next)
    Y1 = T1.solve(rhs)
    sys.apply_boundary(Y1, tau_next)
    # implicit x2 stage
    rhs = Y1 - th * a0 * F2u
    sys.apply_boundary(rhs, tau_next)
    Y2 = T2.solve(rhs.T).T
    sys.apply_boundary(Y2, tau_next)
    # corrector
    F1y, F2y = sys.F1(Y2), sys.F2(Y2)
    Z0 = Y0 + sg * (a1 * (sys.F0(Y2, tau_next) + F1y + F2y) - a0 * (F0u + F1u + F2u))
    sys.apply_boundary(Z0, tau_next)
    rhs = Z0 - th * a1 * F1y
    sys.apply_boundary(rhs, tau_next)
    Z1 = T1.solve(rhs)
    sys.apply_boundary(Z1, tau_next)
    rhs = Z1 - th * a1 * F2y
    sys.apply_boundary(rhs, tau_next)
    Z2 = T2.solve(rhs.T).T
    sys.apply_boundary(Z2, tau_next)
    return Z2


def initial_values(problem: PricingProblem, grid: Grid2D, smoothing: bool) -> np.ndarray:
    if problem.initial is not None:
        return np.array(problem.initial, dtype=float)
    if smoothing:
        return cell_average(problem.payoff, grid)
    X1, X2 = grid.mesh()
    return np.asarray(problem.payoff(X1, X2), dtype=float) * np.ones(grid.shape)


def solve_2d(problem: PricingProblem, grid: Grid2D, tg: TimeGrid, hv: HvParams, nm,
             smoothing: bool = True, variant: str = ops.ADAMS_MOULTON,
             jump_mode: str = ops.EDGE_INIT) -> Surface:
    """March the HV scheme through ``tg``; returns the surface at ``tau = Tbar``."""
    hv.check()
    system = SplitSystem(grid, nm, problem, variant, jump_mode)
    U = initial_values(problem, grid, smoothing)
    system.apply_boundary(U, 0.0)
    sqrt_t = tg.transform == SQRT
    factors = None
    for n in range(1, tg.N + 1):
        s0, s1 = tg.tau[n - 1], tg.tau[n]
        ds = s1 - s0
        if sqrt_t:
            sc0, sc1 = 2.0 * s0, 2.0 * s1
            factors = system.factor(hv.theta * sc1 * ds)
        else:
            sc0 = sc1 = 1.0
            if factors is None:
                factors = system.factor(hv.theta * ds)
        U = hv_step(U, tg.t[n - 1], tg.t[n], system, hv, ds=ds, scale_prev=sc0, scale_next=sc1, factors=factors)
    if not np.all(np.isfinite(U)):
        raise FloatingPointError("non-finite values in the solution")
    return Surface(grid, U)


# ---------------------------------------------------------------------------
# 1D sub-problems


@dataclass
class Problem1D:
    """``dV/dtau = 1/2 V'' + xi V' + lam (J V - V) - chi`` on ``[0, y_max]``.

    ``left(tau)`` is the value at and below the barrier (also used as the
    jump-to-default value); ``right(tau)`` the far-field value.
    """

    payoff: Callable
    left: Callable[[float], float]
    right: Callable[[float], float]
    xi: float
    lam: float = 0.0
    varsigma: float = 1.0
    source: Optional[Callable] = None
    initial: Optional[np.ndarray] = None


def _tri_matvec(lo, d, up, v):
    if v.ndim == 2:
        lo, d, up = lo[:, None], d[:, None], up[:, None]
    out = d * v
    out[:-1] += up * v[1:]
    out[1:] += lo * v[:-1]
    return out


def solve_1d(problem: Problem1D, axis: Axis, tg: TimeGrid, theta: float = 0.5, rannacher: int = 4,
             picard: int = 2, smoothing: bool = True, variant: str = ops.ADAMS_MOULTON,
             jump_mode: str = ops.EDGE_INIT) -> np.ndarray:
    """Theta-scheme with fully implicit start-up half steps.

    The jump integral is lagged: each step is solved ``picard + 1`` times with
    the integral re-evaluated at the latest iterate.  Returns the values at
    every time level, shape ``(N + 1, m + 1)``.

    Several problems sharing the operator can be marched together: pass
    ``initial`` of shape ``(m + 1, k)`` and let ``left``, ``right`` and
    ``source`` return length-``k`` arrays; the result then has shape
    ``(N + 1, m + 1, k)``.
    """
    y = axis.nodes
    n = y.size
    st = ops.axis_stencil(axis)
    lo, d, up = ops.diffusion_band(st, problem.xi, problem.lam, upwind_unstable=True)
    jumps = problem.lam > 0
    if jumps:
        jw = ops.axis_jump_weights(axis, problem.varsigma, variant)
    if problem.initial is not None:
        V = np.array(problem.initial, dtype=float)
        if V.shape[0] != n:
            raise ShapeMismatch("initial values do not match the axis")
    elif smoothing:
        V = cell_average_1d(problem.payoff, axis)
    else:
        V = np.asarray(problem.payoff(y), dtype=float) * np.ones(n)
    batched = V.ndim == 2
    V2 = V.reshape(n, -1).copy()
    k = V2.shape[1]
    sqrt_t = tg.transform == SQRT

    # sub-steps in the solve variable: start-up steps halved and fully implicit
    sub, store = [], []
    for j in range(1, tg.N + 1):
        s0, s1 = tg.tau[j - 1], tg.tau[j]
        if j <= rannacher // 2:
            sm = 0.5 * (s0 + s1)
            sub += [(s0, sm, 1.0), (sm, s1, 1.0)]
            store += [False, True]
        else:
            sub.append((s0, s1, theta))
            store.append(True)
    steps = np.array([(b - a, th, 2 * a if sqrt_t else 1.0, 2 * b if sqrt_t else 1.0) for a, b, th in sub])
    times = np.array([0.0] + [b for _, b, _ in sub])
    if sqrt_t:
        times = times * times

    def per_k(v):
        return np.broadcast_to(np.asarray(v, dtype=float), V.shape[1:]).reshape(k)

    left = np.array([per_k(problem.left(t)) for t in times])
    right = np.array([per_k(problem.right(t)) for t in times])
    if problem.source is None:
        src = np.zeros((1, n, k))
    else:
        yy = y if not batched else y[:, None]
        src = np.array([np.broadcast_to(np.asarray(problem.source(t, yy), dtype=float), V.shape).reshape(n, k)
                        for t in times])
    if jumps:
        decay, w0, w1 = jw.decay, jw.w0, jw.w1
    else:
        decay = w0 = w1 = np.zeros(n - 1)
    out, ok = _march_1d(V2, lo, d, up, decay, w0, w1, float(problem.lam), jumps, jump_mode == ops.EDGE_INIT,
                        picard, steps, np.array(store), left, right, src, problem.source is not None)
    if not ok:
        raise SingularTridiagonal("1D factorization failed")
    return out.reshape((tg.N + 1,) + V.shape)


@numba.njit(cache=True)
def _explicit_1d(v, lo, d, up, decay, w0, w1, lam, jumps, edge_init, left, src, has_src, out):
    n, k = v.shape
    for c in range(k):
        acc = 0.0
        if jumps:
            acc = left[c] if edge_init else 0.0
        for i in range(n):
            if i > 0 and jumps:
                acc = decay[i - 1] * acc + w0[i - 1] * v[i - 1, c] + w1[i - 1] * v[i, c]
            if i == 0 or i == n - 1:
                out[i, c] = 0.0
                continue
            r = lo[i - 1] * v[i - 1, c] + d[i] * v[i, c] + up[i] * v[i + 1, c]
            if jumps:
                r += lam * acc
            if has_src:
                r -= src[i, c]
            out[i, c] = r


@numba.njit(cache=True)
def _jump_extra_1d(w, decay, w0, w1, lam, jumps, edge_init, left, src, has_src, out):
    n, k = w.shape
    for c in range(k):
        acc = left[c] if edge_init else 0.0
        for i in range(n):
            if i > 0:
                acc = decay[i - 1] * acc + w0[i - 1] * w[i - 1, c] + w1[i - 1] * w[i, c]
            r = 0.0
            if jumps:
                r = lam * acc
            if has_src:
                r -= src[i, c]
            out[i, c] = r
        out[0, c] = 0.0
        out[n - 1, c] = 0.0


@numba.njit(cache=True)
def _march_1d(V, lo, d, up, decay, w0, w1, lam, jumps, edge_init, picard, steps, store, left, right, src,
              has_src):
    n, k = V.shape
    n_levels = 1
    for s in range(store.size):
        if store[s]:
            n_levels += 1
    out = np.empty((n_levels, n, k))
    for c in range(k):
        V[0, c] = left[0, c]
        V[n - 1, c] = right[0, c]
    out[0] = V
    level = 1
    ex = np.empty((n, k))
    base = np.empty((n, k))
    rhs = np.empty((n, k))
    W = np.empty((n, k))
    cp = np.empty(n)
    den = np.empty(n)
    sub_lo = np.empty(n)
    for s in range(steps.shape[0]):
        ds, th, sc0, sc1 = steps[s, 0], steps[s, 1], steps[s, 2], steps[s, 3]
        si0 = s if has_src else 0
        si1 = s + 1 if has_src else 0
        cc = th * sc1 * ds
        # Thomas factorization of I - cc * T with identity boundary rows
        for i in range(n):
            if i == 0 or i == n - 1:
                di, li, ui = 1.0, 0.0, 0.0
            else:
                di, li, ui = 1.0 - cc * d[i], -cc * lo[i - 1], -cc * up[i]
            sub_lo[i] = li
            dd = di - (li * cp[i - 1] if i > 0 else 0.0)
            if dd == 0.0:
                return out, False
            den[i] = dd
            cp[i] = ui / dd
        if th < 1.0:
            _explicit_1d(V, lo, d, up, decay, w0, w1, lam, jumps, edge_init, left[s], src[si0], has_src, ex)
            for i in range(n):
                for c in range(k):
                    base[i, c] = V[i, c] + (1.0 - th) * ds * sc0 * ex[i, c]
        else:
            base[:, :] = V
        W[:, :] = V
        n_iter = picard + 1 if jumps else 1
        for _ in range(n_iter):
            _jump_extra_1d(W, decay, w0, w1, lam, jumps, edge_init, left[s + 1], src[si1], has_src, ex)
            for i in range(n):
                for c in range(k):
                    rhs[i, c] = base[i, c] + cc * ex[i, c]
            for c in range(k):
                rhs[0, c] = left[s + 1, c]
                rhs[n - 1, c] = right[s + 1, c]
            for c in range(k):
                W[0, c] = rhs[0, c] / den[0]
                for i in range(1, n):
                    W[i, c] = (rhs[i, c] - sub_lo[i] * W[i - 1, c]) / den[i]
                for i in range(n - 2, -1, -1):
                    W[i, c] -= cp[i] * W[i + 1, c]
        V[:, :] = W
        if store[s]:
            out[level] = V
            level += 1
    return out, True


def solve_1d_curve(problem: Problem1D, axis: Axis, tg: TimeGrid, offset: float = 0.0, **kw) -> Curve1D:
    vals = solve_1d(problem, axis, tg, **kw)
    return Curve1D(t=tg.t.copy(), y=axis.nodes.copy(), values=vals, offset=offset, below=problem.left)
