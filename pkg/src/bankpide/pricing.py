"""Survival probabilities and credit products as PIDE solves.

Every product is assembled as a :class:`~bankpide.solver.PricingProblem` whose
edge data come from 1D sub-problems: the far fields describe one bank with the
other infinitely safe, and the zero edges describe the survivor after its
counterparty's default, with its barrier moved up by the cascade shift.
Coupons are quoted per year and rescaled to normalized time internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model as mdl
from .errors import DegenerateAnnuity, InvalidMesh
from .grid import Axis, Grid2D, build_clustered_axis, merge_centers
from .model import ModelSpec
from .solver import (Curve1D, Numerics, PricingProblem, Problem1D, Surface, initial_values, solve_1d_curve,
                     solve_2d)


@dataclass
class QuoteResult:
    value: float
    surface: Surface
    value_nojump: Optional[float] = None
    surface_nojump: Optional[Surface] = None

    @property
    def difference(self) -> Optional[Surface]:
        """Jump impact: with-jump minus no-jump surface."""
        if self.surface_nojump is None:
            return None
        return Surface(self.surface.grid, self.surface.values - self.surface_nojump.values)


class Context:
    """Normalized model, mesh and time grid for one (spec, numerics) pair."""

    def __init__(self, spec: ModelSpec, numerics: Numerics):
        self.spec = spec
        self.num = numerics
        self.bs = mdl.compute_boundaries(spec)
        self.nm = mdl.normalize(spec)
        xm = numerics.x_max
        self.tg = numerics.time_grid(spec.T, self.nm.Tbar)
        bs = self.bs
        # refine at the barriers, the shifted barriers and the quote point
        c1 = [0.0, bs.mu1_eq, bs.mut1_lt, bs.mut1_eq, self.nm.x0[0]]
        c2 = [0.0, bs.mu2_eq, bs.mut2_lt, bs.mut2_eq, self.nm.x0[1]]
        # cluster width: a fraction of the diffusion length over the horizon
        beta = numerics.beta if numerics.beta is not None else min(0.025 * xm, 0.25 * np.sqrt(self.nm.Tbar))
        self.beta = beta
        self.centers1 = merge_centers(c1, xm, 0.5 * beta) if numerics.cluster else []
        self.centers2 = merge_centers(c2, xm, 0.5 * beta) if numerics.cluster else []
        self.grid = Grid2D(clustered_axis(numerics.m1, xm, self.centers1, beta),
                           clustered_axis(numerics.m2, xm, self.centers2, beta))
        self.m_1d = numerics.m_1d or max(4 * max(numerics.m1, numerics.m2), 400)

    @property
    def x0(self):
        return self.nm.x0

    def assets(self, X1, X2):
        return mdl.assets_from_coords(X1, X2, self.spec, self.bs)

    # -- 1D pieces ----------------------------------------------------------

    def bank_params(self, bank: int):
        nm = self.nm
        if bank == 1:
            return nm.xi1, nm.lam1 + nm.lam12, nm.varsigma1
        return nm.xi2, nm.lam2 + nm.lam12, nm.varsigma2

    def curve(self, bank: int, offset: float, kink: float, payoff, left, right, source=None) -> Curve1D:
        """Solve a 1D problem for ``bank`` on ``[offset, x_max]``; ``payoff`` and
        ``source`` are given in global coordinates."""
        xm = self.num.x_max
        length = xm - offset
        if length <= 0:
            raise ValueError("shifted barrier lies beyond the far field")
        centers = merge_centers([0.0, kink - offset], length, 0.5 * self.beta) if self.num.cluster else []
        axis = clustered_axis(self.m_1d, length, centers, self.beta)
        xi, lam, vs = self.bank_params(bank)
        src = None if source is None else (lambda t, y: source(t, y + offset))
        pr = Problem1D(payoff=lambda y: payoff(y + offset), left=left, right=right, xi=xi, lam=lam,
                       varsigma=vs, source=src)
        return solve_1d_curve(pr, axis, self.tg, offset=offset, theta=0.5, rannacher=self.num.rannacher,
                              picard=self.num.picard, smoothing=self.num.smoothing,
                              variant=self.num.jump_variant, jump_mode=self.num.jump_mode)

    def solve(self, problem: PricingProblem) -> Surface:
        n = self.num
        return solve_2d(problem, self.grid, self.tg, n.hv, self.nm, smoothing=n.smoothing,
                        variant=n.jump_variant, jump_mode=n.jump_mode)

    def value_at_x0(self, surf: Surface) -> float:
        return float(surf(*self.x0))


def clustered_axis(m: int, x_max: float, centers, beta: float, widen: float = 1.5) -> Axis:
    """Clustered axis, widening ``beta`` until the spacing-ratio check passes."""
    for _ in range(40):
        try:
            return build_clustered_axis(m, x_max, centers, beta)
        except InvalidMesh:
            beta *= widen
    return build_clustered_axis(m, x_max, [], None)


def _const(c):
    return lambda t: float(c)


def _edge_const(c):
    return lambda t, x: np.full(np.shape(x), float(c))


def _bank_coord_edge(curve):
    return lambda t, x: curve(t, x)


# ---------------------------------------------------------------------------
# survival


def survival_curve_far(ctx: Context, bank: int) -> Curve1D:
    """Survival of ``bank`` when the other bank is out of reach."""
    mu = ctx.bs.mu1_eq if bank == 1 else ctx.bs.mu2_eq
    return ctx.curve(bank, 0.0, mu, lambda y: (y >= mu).astype(float), _const(0.0), _const(1.0))


def survival_curve_after_default(ctx: Context, bank: int) -> Curve1D:
    """Survival of ``bank`` after the other bank has defaulted."""
    bs = ctx.bs
    lt, eq = (bs.mut1_lt, bs.mut1_eq) if bank == 1 else (bs.mut2_lt, bs.mut2_eq)
    return ctx.curve(bank, lt, eq, lambda y: (y >= eq).astype(float), _const(0.0), _const(1.0))


def joint_problem(ctx: Context) -> PricingProblem:
    bs = ctx.bs
    far1 = survival_curve_far(ctx, 1)
    far2 = survival_curve_far(ctx, 2)
    return PricingProblem(
        payoff=lambda X1, X2: ((X1 >= bs.mu1_eq) & (X2 >= bs.mu2_eq)).astype(float),
        edge_x1_0=_edge_const(0.0), edge_x2_0=_edge_const(0.0),
        edge_x1_max=_bank_coord_edge(far2), edge_x2_max=_bank_coord_edge(far1),
        corner=_const(0.0),
    )


def _with_companion(ctx_fn, spec, numerics, builder, companion):
    ctx = Context(spec, numerics)
    surf = ctx.solve(builder(ctx))
    res = QuoteResult(ctx.value_at_x0(surf), surf)
    if companion and spec.has_jumps:
        c0 = Context(spec.without_jumps(), numerics)
        s0 = c0.solve(builder(c0))
        res.value_nojump, res.surface_nojump = c0.value_at_x0(s0), s0
    elif companion:
        res.value_nojump, res.surface_nojump = res.value, surf
    return res


def joint_survival(spec: ModelSpec, numerics: Numerics = Numerics(), companion: bool = False) -> QuoteResult:
    return _with_companion(None, spec, numerics, joint_problem, companion)


def marginal_problem(ctx: Context) -> PricingProblem:
    """Survival of bank 1 (use a swapped spec for bank 2)."""
    spec, bs = ctx.spec, ctx.bs
    far1 = survival_curve_far(ctx, 1)
    xi = survival_curve_after_default(ctx, 1)

    def payoff(X1, X2):
        w1, _ = mdl.settlement_on_coords(X1, X2, spec, bs)
        return (w1 >= 1.0).astype(float)

    return PricingProblem(
        payoff=payoff,
        edge_x1_0=_edge_const(0.0), edge_x2_0=_bank_coord_edge(xi),
        edge_x1_max=_edge_const(1.0), edge_x2_max=_bank_coord_edge(far1),
        corner=_const(0.0),
    )


def _bank_spec(spec: ModelSpec, bank: int) -> ModelSpec:
    if bank not in (1, 2):
        raise ValueError("bank must be 1 or 2")
    return spec if bank == 1 else spec.swapped()


def marginal_survival(spec: ModelSpec, bank: int = 1, numerics: Numerics = Numerics(),
                      companion: bool = False) -> QuoteResult:
    """Survival probability of ``bank``.  For bank 2 the surface is computed on
    swapped axes and transposed back so ``surface.values[i, j]`` always maps to
    ``(x1_i, x2_j)``."""
    res = _with_companion(None, _bank_spec(spec, bank), numerics, marginal_problem, companion)
    return _unswap(res, bank, spec, numerics)


def _unswap(res: QuoteResult, bank: int, spec: ModelSpec, numerics: Numerics) -> QuoteResult:
    if bank == 1:
        return res

    def flip(s):
        if s is None:
            return None
        g = Grid2D(s.grid.axis2, s.grid.axis1)
        return Surface(g, s.values.T.copy())

    return QuoteResult(res.value, flip(res.surface), res.value_nojump, flip(res.surface_nojump))


# ---------------------------------------------------------------------------
# CDS and FTD


def _recovery_tilde(A_own, A_other_w, L_own, L_link_out, w_other):
    """``min(1, (A + w * L_in) / (L + w * L_out))``: recovery of a bank at maturity
    given the other's payment fraction."""
    return np.minimum(1.0, (A_own + A_other_w) / (L_own + w_other * L_link_out))


def _cds_terminal(spec: ModelSpec, bs, X1, X2):
    A1, A2 = mdl.assets_from_coords(X1, X2, spec, bs)
    w1, w2 = mdl.settle_arrays(A1, A2, spec.L1, spec.L2, spec.L12, spec.L21)
    Rt1 = _recovery_tilde(A1, w2 * spec.L21, spec.L1, spec.L12, w2)
    return np.where(w1 < 1.0, 1.0 - np.minimum(spec.R1, Rt1), 0.0)


def cds_curve_far(ctx: Context, bank: int, cbar: float) -> Curve1D:
    """CDS on ``bank`` with the other bank out of reach."""
    spec, bs = ctx.spec, ctx.bs
    R = spec.R1 if bank == 1 else spec.R2
    mu = bs.mu1_eq if bank == 1 else bs.mu2_eq
    sp = spec if bank == 1 else spec.swapped()
    lam_lt = bs.Lam1_lt if bank == 1 else bs.Lam2_lt

    def payoff(y):
        # the other bank pays in full at maturity
        A = lam_lt * np.exp(sp.sigma1 * y / ctx.nm.Sigma)
        w = np.minimum(1.0, (A + sp.L21) / (sp.L1 + sp.L12))
        rt = _recovery_tilde(A, sp.L21, sp.L1, sp.L12, 1.0)
        return np.where(w < 1.0, 1.0 - np.minimum(sp.R1, rt), 0.0)

    return ctx.curve(bank, 0.0, mu, payoff, _const(1.0 - R), lambda t: -cbar * t,
                     source=lambda t, y: cbar)


def cds_curve_after_default(ctx: Context, bank: int, cbar: float) -> Curve1D:
    """CDS on ``bank`` after the other bank defaulted (shifted barrier)."""
    spec, bs = ctx.spec, ctx.bs
    R = spec.R1 if bank == 1 else spec.R2
    lt, eq = (bs.mut1_lt, bs.mut1_eq) if bank == 1 else (bs.mut2_lt, bs.mut2_eq)
    return ctx.curve(bank, lt, eq, lambda y: np.where(y <= eq, 1.0 - R, 0.0), _const(1.0 - R),
                     lambda t: -cbar * t, source=lambda t, y: cbar)


def cds_problem(ctx: Context, coupon: float) -> PricingProblem:
    """CDS on bank 1 from the protection buyer's side, coupon per year."""
    spec, bs = ctx.spec, ctx.bs
    cbar = coupon / ctx.nm.Sigma ** 2
    far = cds_curve_far(ctx, 1, cbar)
    after = cds_curve_after_default(ctx, 1, cbar)
    loss = 1.0 - spec.R1
    return PricingProblem(
        payoff=lambda X1, X2: _cds_terminal(spec, bs, X1, X2),
        edge_x1_0=_edge_const(loss), edge_x2_0=_bank_coord_edge(after),
        edge_x1_max=lambda t, x: np.full(np.shape(x), -cbar * t), edge_x2_max=_bank_coord_edge(far),
        corner=_const(loss), source=lambda t, X1, X2: cbar,
    )


def cds_value(spec: ModelSpec, coupon: float, bank: int = 1, numerics: Numerics = Numerics(),
              companion: bool = False) -> QuoteResult:
    res = _with_companion(None, _bank_spec(spec, bank), numerics, lambda c: cds_problem(c, coupon), companion)
    return _unswap(res, bank, spec, numerics)


def _par_spread(ctx: Context, builder) -> float:
    """Coupon that zeroes the value at ``x0``.  The value is affine in the
    coupon, so two solves sharing one set of terminal data suffice."""
    p0, p1 = builder(ctx, 0.0), builder(ctx, 1.0)
    p0.initial = p1.initial = initial_values(p0, ctx.grid, ctx.num.smoothing)
    v0 = ctx.value_at_x0(ctx.solve(p0))
    annuity = v0 - ctx.value_at_x0(ctx.solve(p1))
    if annuity <= 1e-12:
        raise DegenerateAnnuity(f"annuity {annuity:.3g} is not positive")
    return v0 / annuity


def cds_par_spread(spec: ModelSpec, bank: int = 1, numerics: Numerics = Numerics()) -> float:
    """Par coupon (per year) of a CDS on ``bank``."""
    return _par_spread(Context(_bank_spec(spec, bank), numerics), cds_problem)


def _ftd_terminal(spec: ModelSpec, bs, X1, X2):
    A1, A2 = mdl.assets_from_coords(X1, X2, spec, bs)
    w1, w2 = mdl.settle_arrays(A1, A2, spec.L1, spec.L2, spec.L12, spec.L21)
    r1 = np.minimum(spec.R1, _recovery_tilde(A1, w2 * spec.L21, spec.L1, spec.L12, w2))
    r2 = np.minimum(spec.R2, _recovery_tilde(A2, w1 * spec.L12, spec.L2, spec.L21, w1))
    d1, d2 = w1 < 1.0, w2 < 1.0
    return np.where(d1 & d2, 1.0 - np.minimum(r1, r2),
                    np.where(d1, 1.0 - r1, np.where(d2, 1.0 - r2, 0.0)))


def ftd_problem(ctx: Context, coupon: float) -> PricingProblem:
    spec, bs = ctx.spec, ctx.bs
    cbar = coupon / ctx.nm.Sigma ** 2
    far1 = cds_curve_far(ctx, 1, cbar)
    far2 = cds_curve_far(ctx, 2, cbar)
    return PricingProblem(
        payoff=lambda X1, X2: _ftd_terminal(spec, bs, X1, X2),
        edge_x1_0=_edge_const(1.0 - spec.R1), edge_x2_0=_edge_const(1.0 - spec.R2),
        edge_x1_max=_bank_coord_edge(far2), edge_x2_max=_bank_coord_edge(far1),
        corner=_const(1.0 - min(spec.R1, spec.R2)), source=lambda t, X1, X2: cbar,
    )


def ftd_value(spec: ModelSpec, coupon: float, numerics: Numerics = Numerics(),
              companion: bool = False) -> QuoteResult:
    return _with_companion(None, spec, numerics, lambda c: ftd_problem(c, coupon), companion)


def ftd_par_spread(spec: ModelSpec, numerics: Numerics = Numerics()) -> float:
    return _par_spread(Context(spec, numerics), ftd_problem)


# ---------------------------------------------------------------------------
# unilateral CVA / DVA


def _adjustment_problem(ctx: Context, coupon: float, positive: bool) -> PricingProblem:
    """Bank 1 is the risky counterparty (seller for CVA, buyer for DVA), bank 2
    the reference name.  Terminal data are zero."""
    spec = ctx.spec
    cbar = coupon / ctx.nm.Sigma ** 2
    # CDS on the reference name once bank 1 has defaulted
    rn = cds_curve_after_default(ctx, 2, cbar)
    part = (lambda v: np.maximum(v, 0.0)) if positive else (lambda v: np.maximum(-v, 0.0))
    k = 1.0 - spec.R1
    edge0 = lambda t, x2: k * part(rn(t, x2))
    # far field in x2: reference name safe, CDS worth -cbar * tau
    left_far = lambda t: k * float(part(np.array(-cbar * t)))
    far = ctx.curve(1, 0.0, ctx.bs.mu1_eq, lambda y: np.zeros_like(y), left_far, _const(0.0))
    corner = k * float(part(np.array(1.0 - spec.R2)))
    return PricingProblem(
        payoff=lambda X1, X2: np.zeros(np.broadcast(X1, X2).shape),
        edge_x1_0=edge0, edge_x2_0=_edge_const(0.0),
        edge_x1_max=_edge_const(0.0), edge_x2_max=_bank_coord_edge(far),
        corner=_const(corner),
    )


def cva_unilateral(spec: ModelSpec, coupon: float = 0.01, numerics: Numerics = Numerics(),
                   companion: bool = False) -> QuoteResult:
    """CVA of a CDS on bank 2 bought from bank 1 (x1 = protection seller)."""
    return _with_companion(None, spec, numerics, lambda c: _adjustment_problem(c, coupon, True), companion)


def dva_unilateral(spec: ModelSpec, coupon: float = 0.01, numerics: Numerics = Numerics(),
                   companion: bool = False) -> QuoteResult:
    """DVA magnitude of a CDS on bank 2 bought by bank 1 (x1 = protection buyer);
    reported as a nonnegative number."""
    return _with_companion(None, spec, numerics, lambda c: _adjustment_problem(c, coupon, False), companion)


# name -> f(spec, numerics, companion, coupon); coupon is ignored by survival quantities
QUANTITIES = {
    "joint": lambda spec, num, comp, c: joint_survival(spec, num, comp),
    "marginal1": lambda spec, num, comp, c: marginal_survival(spec, 1, num, comp),
    "marginal2": lambda spec, num, comp, c: marginal_survival(spec, 2, num, comp),
    "cds1": lambda spec, num, comp, c: cds_value(spec, c, 1, num, comp),
    "cds2": lambda spec, num, comp, c: cds_value(spec, c, 2, num, comp),
    "ftd": lambda spec, num, comp, c: ftd_value(spec, c, num, comp),
    "cva": lambda spec, num, comp, c: cva_unilateral(spec, c, num, comp),
    "dva": lambda spec, num, comp, c: dva_unilateral(spec, c, num, comp),
}


def price(quantity: str, spec: ModelSpec, numerics: Numerics = Numerics(), companion: bool = False,
          coupon: float = 0.01) -> QuoteResult:
    try:
        fn = QUANTITIES[quantity]
    except KeyError:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {sorted(QUANTITIES)}") from None
    return fn(spec, numerics, companion, coupon)
