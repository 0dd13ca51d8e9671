"""Calibration to CDS spreads and equity puts, and correlation from history.

Parameter conventions.  The two-bank vector is
``(sigma1, sigma2, lambda1, lambda2, varsigma1, varsigma2)`` with ``varsigma_i``
the jump-size rate in normalized coordinates, so the log-asset rate is
``theta_i = varsigma_i * Sigma / sigma_i``.  A single-bank vector
``(sigma, lambda, varsigma)`` uses the bank's own volatility for the
normalization, so there ``theta = varsigma``.

Equity puts are priced on a single-bank 1D PIDE in ``x = ln(A / Lambda^<)``
with the counterparty paying in full; equity is ``A + L_in - L_total`` and is
wiped out at default, where the put pays its strike.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import model as mdl
from .errors import ConfigError, DegenerateAnnuity, NoConvergence, OutOfRange
from .grid import cell_average_1d, merge_centers
from .model import ModelSpec
from .pricing import cds_par_spread, clustered_axis
from .solver import Numerics, Problem1D, solve_1d

PARAM_NAMES = ("sigma1", "sigma2", "lambda1", "lambda2", "varsigma1", "varsigma2")
BANK_PARAM_NAMES = ("sigma", "lambda", "varsigma")
PER_BANK, SYSTEM = "per-bank", "system"


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class BankSheet:
    """Book equity, total liabilities and total assets (same currency units)."""

    E: float
    L_total: float
    A_total: float
    R: float

    def __post_init__(self):
        if self.L_total <= 0 or self.A_total <= 0:
            raise ConfigError("balance sheet totals must be positive")
        if abs(self.A_total - self.L_total - self.E) > 1e-6 * self.A_total + 0.011:
            raise ConfigError(f"equity {self.E} does not match assets minus liabilities")


@dataclass(frozen=True)
class BalanceSheets:
    """Two banks plus the rule that splits out the mutual liabilities.

    ``rule='per-bank'``: ``L12 = f * L_total1`` and ``L21 = f * L_total2``.
    ``rule='system'``: both equal ``f`` times the mean of the two totals.
    With ``reduce_external`` the external liabilities (and assets) are reduced
    so the totals still match the sheets.
    """

    bank1: BankSheet
    bank2: BankSheet
    mutual_fraction: float = 0.05
    rule: str = PER_BANK
    reduce_external: bool = True
    T: float = 1.0

    def mutual(self):
        f = self.mutual_fraction
        if self.rule == PER_BANK:
            return f * self.bank1.L_total, f * self.bank2.L_total
        if self.rule == SYSTEM:
            m = 0.5 * f * (self.bank1.L_total + self.bank2.L_total)
            return m, m
        raise ConfigError(f"unknown mutual liability rule {self.rule!r}")

    def spec(self, params: Sequence[float], rho: float = 0.0, lambda12: float = 0.0) -> ModelSpec:
        """ModelSpec from the two-bank parameter vector."""
        s1, s2, l1, l2, v1, v2 = (float(p) for p in params)
        Sigma = math.sqrt(s1 * s2)
        L12, L21 = self.mutual()
        b1, b2 = self.bank1, self.bank2
        if self.reduce_external:
            L1, L2 = b1.L_total - L12, b2.L_total - L21
            A1, A2 = b1.A_total - L21, b2.A_total - L12
        else:
            L1, L2, A1, A2 = b1.L_total, b2.L_total, b1.A_total, b2.A_total
        return ModelSpec(A1=A1, A2=A2, L1=L1, L2=L2, L12=L12, L21=L21, R1=b1.R, R2=b2.R,
                         sigma1=s1, sigma2=s2, rho=rho, theta1=v1 * Sigma / s1, theta2=v2 * Sigma / s2,
                         lambda1=l1, lambda2=l2, lambda12=lambda12, T=self.T)

    def bank_spec(self, bank: int, params: Sequence[float]) -> ModelSpec:
        """Spec whose ``bank`` carries the single-bank vector; the other bank is
        given the same parameters and only serves as a counterparty."""
        s, l, v = (float(p) for p in params)
        sp = self.spec((s, s, l, l, v, v))
        return sp


@dataclass(frozen=True)
class BankQuotes:
    equity: float
    cds_spread: float
    puts: tuple
    strikes: tuple = ()
    weight: float = 1e4

    def __post_init__(self):
        if not self.strikes:
            object.__setattr__(self, "strikes", default_strikes(self.equity))
        if len(self.strikes) != len(self.puts):
            raise ConfigError("one put price per strike is required")
        if self.cds_spread < 0 or any(p < 0 for p in self.puts) or any(k <= 0 for k in self.strikes):
            raise ConfigError("quotes must be nonnegative and strikes positive")


@dataclass(frozen=True)
class MarketQuotes:
    bank1: BankQuotes
    bank2: BankQuotes

    def bank(self, i: int) -> BankQuotes:
        return self.bank1 if i == 1 else self.bank2


def default_strikes(E: float) -> tuple:
    return (1.1 * E, E, 0.9 * E)


@dataclass
class HistoricalSeries:
    """Daily equity closes of both banks on common dates."""

    dates: list
    close1: np.ndarray
    close2: np.ndarray
    periods_per_year: float = 252.0

    def __post_init__(self):
        self.close1 = np.asarray(self.close1, dtype=float)
        self.close2 = np.asarray(self.close2, dtype=float)
        if not (len(self.dates) == self.close1.size == self.close2.size):
            raise ConfigError("series are not aligned")
        if self.close1.size < 30:
            raise ConfigError("at least 30 observations are required")
        if np.any(self.close1 <= 0) or np.any(self.close2 <= 0):
            raise ConfigError("closes must be positive")

    def asset_log_returns(self, sheets: Optional[BalanceSheets] = None):
        """Log returns of ``A_t = E_t + s L_total`` with liabilities held fixed.

        ``s = E_last / E_book`` converts the balance sheet into the units of the
        price series, so rescaling every close leaves the returns unchanged.
        Without sheets the equity returns themselves are used.
        """
        out = []
        for close, b in ((self.close1, sheets.bank1 if sheets else None),
                         (self.close2, sheets.bank2 if sheets else None)):
            if b is None:
                A = close
            else:
                A = close + (close[-1] / b.E) * b.L_total
            out.append(np.diff(np.log(A)))
        return out[0], out[1]


@dataclass
class CorrelationEstimate:
    rho: float
    lambda12: float
    rho_ci: tuple
    lambda12_ci: tuple
    cov: float
    cov_se: float


@dataclass
class CalibResult:
    params: np.ndarray
    rho: float
    lambda12: float
    residual_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    rho_ci: Optional[tuple] = None
    lambda12_ci: Optional[tuple] = None
    names: tuple = PARAM_NAMES

    def as_dict(self) -> dict:
        d = dict(zip(self.names, map(float, self.params)))
        d.update(rho=self.rho, lambda12=self.lambda12, residual_norm=self.residual_norm,
                 iterations=self.iterations, converged=self.converged)
        return d


# ---------------------------------------------------------------------------
# single-bank pricing


class BankModel1D:
    """Single-bank jump-diffusion in ``x = ln(A / Lambda^<)``, time ``sigma^2 t``."""

    def __init__(self, spec: ModelSpec, bank: int, numerics: Numerics = Numerics(), m: int = 400):
        sp = spec if bank == 1 else spec.swapped()
        self.spec = sp
        bs = mdl.compute_boundaries(sp)
        self.L_total = sp.L1 + sp.L12
        self.L_in = sp.L21
        self.R = sp.R1
        self.lam_lt = bs.Lam1_lt
        self.sigma = sp.sigma1
        self.theta = sp.theta1
        self.lam = sp.lambda1 + sp.lambda12
        self.x0 = math.log(sp.A1 / self.lam_lt)
        self.mu_eq = math.log(bs.Lam1_eq / self.lam_lt)
        self.Tbar = sp.sigma1 ** 2 * sp.T
        lbar = self.lam / sp.sigma1 ** 2
        self.xi = -(0.5 - lbar / (self.theta + 1.0))
        self.num = numerics
        self.m = m
        self.tg = numerics.time_grid(sp.T, self.Tbar)
        rt = math.sqrt(self.Tbar)
        self.beta = min(0.025, 0.25 * rt)
        self.x_max = max(self.x0, self.mu_eq) + max(1.0, 12.0 * rt)

    def equity(self, x):
        return self.lam_lt * np.exp(x) + self.L_in - self.L_total

    def strike_point(self, K: float) -> float:
        A = K + self.L_total - self.L_in
        return math.log(A / self.lam_lt)

    def _axis(self, kinks):
        centers = merge_centers([0.0, self.mu_eq, self.x0, *kinks], self.x_max, 0.5 * self.beta)
        return clustered_axis(self.m, self.x_max, centers, self.beta)

    def _put_payoff(self, K):
        return lambda x: np.clip(K - np.maximum(self.equity(x), 0.0), 0.0, K)

    def _cds_payoff(self, x):
        A = self.lam_lt * np.exp(x)
        rt = np.minimum(1.0, (A + self.L_in) / self.L_total)
        return np.where(rt < 1.0, 1.0 - np.minimum(self.R, rt), 0.0)

    def solve_many(self, payoffs, left, right, kinks=(), source=None) -> np.ndarray:
        """Values at ``x0`` of several problems sharing the operator; ``left``,
        ``right`` and ``source`` return one entry per problem."""
        axis = self._axis(kinks)
        n = self.num
        if n.smoothing:
            init = np.column_stack([cell_average_1d(f, axis) for f in payoffs])
        else:
            init = np.column_stack([np.asarray(f(axis.nodes), dtype=float) for f in payoffs])
        pr = Problem1D(payoff=None, left=left, right=right, xi=self.xi, lam=self.lam / self.sigma ** 2,
                       varsigma=self.theta, source=source, initial=init)
        V = solve_1d(pr, axis, self.tg, theta=0.5, rannacher=n.rannacher, picard=n.picard,
                     smoothing=n.smoothing, variant=n.jump_variant, jump_mode=n.jump_mode)[-1]
        return np.array([np.interp(self.x0, axis.nodes, V[:, k]) for k in range(V.shape[1])])

    def quotes(self, strikes: Sequence[float]):
        """(CDS par spread, put prices) from one batched solve.

        Columns: one put per strike, the CDS at zero coupon and at unit coupon.
        """
        ks = [float(k) for k in strikes]
        if any(k <= 0 for k in ks):
            raise ValueError("strikes must be positive")
        cbar = 1.0 / self.sigma ** 2
        loss = 1.0 - self.R
        nk = len(ks)
        left = np.array(ks + [loss, loss])
        zero = np.zeros(nk + 2)
        unit = np.zeros(nk + 2)
        unit[-1] = 1.0
        payoffs = [self._put_payoff(k) for k in ks] + [self._cds_payoff, self._cds_payoff]
        vals = self.solve_many(payoffs, lambda t: left, lambda t: -cbar * t * unit,
                               [self.strike_point(k) for k in ks], source=lambda t, y: cbar * unit)
        v0, v1 = vals[nk], vals[nk + 1]
        ann = v0 - v1
        if ann <= 1e-12:
            raise DegenerateAnnuity(f"annuity {ann:.3g} is not positive")
        return v0 / ann, vals[:nk]

    def put(self, K: float) -> float:
        if K <= 0:
            raise ValueError("strike must be positive")
        return float(self.solve_many([self._put_payoff(K)], lambda t: np.array([K]), lambda t: np.zeros(1),
                                     [self.strike_point(K)])[0])

    def cds_spread(self) -> float:
        return self.quotes([])[0]


def price_equity_put(bank: int, strike: float, spec: ModelSpec, numerics: Numerics = Numerics(),
                     m: int = 400) -> float:
    return BankModel1D(spec, bank, numerics, m).put(strike)


def bank_quotes_1d(spec: ModelSpec, bank: int, strikes: Sequence[float], numerics: Numerics = Numerics(),
                   m: int = 400):
    """(CDS par spread, put prices) of one bank on the single-bank model."""
    return BankModel1D(spec, bank, numerics, m).quotes(strikes)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class _Fit:
    z: np.ndarray
    cost: float
    iterations: int
    converged: bool
    trace: list


def projected_gauss_newton(fun: Callable, z0, lo, hi, max_iter: int = 200, gtol: float = 1e-8,
                           rel_step: float = 1e-4, ftol: float = 1e-18, damping: float = 1e-3) -> _Fit:
    """Damped Gauss-Newton (Levenberg-Marquardt) on a box.

    ``fun(z)`` returns the residual vector.  The Jacobian uses central
    differences with step ``rel_step * max(1, |z|)``; trial points are projected
    onto ``[lo, hi]``, and variables held at a bound by the gradient are left
    out of the step; a step is accepted only if the cost decreases (a trial
    point whose evaluation raises ``ArithmeticError`` counts as rejected).
    Convergence: projected gradient norm below ``gtol`` or cost below ``ftol``.
    """
    z = np.clip(np.asarray(z0, dtype=float), lo, hi)
    r = np.asarray(fun(z), dtype=float)
    cost = 0.5 * float(r @ r)
    trace = [(0, cost, z.copy())]
    mu = damping
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost <= ftol:
            converged = True
            it -= 1
            break
        J = np.empty((r.size, z.size))
        for k in range(z.size):
            h = rel_step * max(1.0, abs(z[k]))
            zp, zm = z.copy(), z.copy()
            zp[k] = min(z[k] + h, hi[k])
            zm[k] = max(z[k] - h, lo[k])
            J[:, k] = (np.asarray(fun(zp)) - np.asarray(fun(zm))) / (zp[k] - zm[k])
        g = J.T @ r
        # projected gradient: components pushing out of an active bound vanish
        pg = g.copy()
        pg[(z <= lo) & (g > 0)] = 0.0
        pg[(z >= hi) & (g < 0)] = 0.0
        if np.linalg.norm(pg) < gtol:
            converged = True
            it -= 1
            break
        H = J.T @ J
        # variables held at a bound by the gradient stay fixed for this step
        free = ~(((z <= lo) & (g > 0)) | ((z >= hi) & (g < 0)))
        Hf = H[np.ix_(free, free)]
        accepted = False
        for _ in range(30):
            A = Hf + mu * np.diag(np.maximum(np.diag(Hf), 1e-12))
            step = np.zeros_like(z)
            try:
                step[free] = np.linalg.solve(A, -g[free])
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            zt = np.clip(z + step, lo, hi)
            try:
                rt = np.asarray(fun(zt), dtype=float)
            except ArithmeticError:
                mu *= 4.0
                continue
            ct = 0.5 * float(rt @ rt)
            if ct < cost:
                z, r, cost = zt, rt, ct
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 4.0
        trace.append((it, cost, z.copy()))
        if not accepted:
            converged = np.linalg.norm(pg) < 1e3 * gtol or cost <= ftol
            break
    return _Fit(z, cost, it, converged, trace)


# ---------------------------------------------------------------------------
# single-bank calibration


DEFAULT_BANK_BOUNDS = ((0.002, 0.2), (1e-6, 1.0), (0.01, 5.0))


def _bank_residuals(sheets: BalanceSheets, bank: int, q: BankQuotes, numerics: Numerics, m: int):
    def fun(z):
        p = np.exp(z)
        sp = sheets.bank_spec(bank, p)
        cds, puts = bank_quotes_1d(sp, bank, q.strikes, numerics, m)
        return np.concatenate([[math.sqrt(q.weight) * (cds - q.cds_spread)], puts - np.asarray(q.puts)])
    return fun


def _profile_starts(fun: Callable, lo, hi, n: int) -> list:
    """Starting points ``(log sigma, log lambda, log varsigma)``: for each grid
    pair ``(sigma, varsigma)``, the log-intensity where the first residual
    changes sign along an ``n``-point ladder, refined by Brent's method (or the
    ladder point with the smallest first residual when there is no sign change)."""
    ladder = np.linspace(lo[1], hi[1], n)
    out = []
    for zs in np.linspace(lo[0], hi[0], n):
        for zv in np.linspace(lo[2], hi[2], n):
            def cds(zl):
                return float(fun(np.array([zs, zl, zv]))[0])
            vals = []
            for zl in ladder:
                try:
                    vals.append(cds(zl))
                except (ArithmeticError, ValueError):
                    vals.append(np.nan)
            vals = np.array(vals)
            ok = np.isfinite(vals)
            if not ok.any():
                continue
            zl = ladder[ok][np.argmin(np.abs(vals[ok]))]
            for k in range(n - 1):
                if ok[k] and ok[k + 1] and vals[k] * vals[k + 1] < 0:
                    try:
                        zl = optimize.brentq(cds, ladder[k], ladder[k + 1], xtol=1e-3)
                    except (ArithmeticError, ValueError):
                        pass
                    break
            out.append(np.array([zs, zl, zv]))
    return out


def calibrate_1d(bank: int, quotes: MarketQuotes | BankQuotes, sheets: BalanceSheets,
                 bounds=DEFAULT_BANK_BOUNDS, numerics: Numerics = Numerics(), n_coarse: int = 8,
                 n_starts: int = 2, max_residual: float = math.inf, m: int = 400,
                 max_iter: int = 100, coarse_m: int = 100, coarse_dt: float = 0.05) -> CalibResult:
    """Fit ``(sigma, lambda, varsigma)`` of one bank: damped Gauss-Newton from
    the best ``n_starts`` points of each of two coarse searches, keeping the
    lowest final cost.

    The search runs on cheaper numerics (``coarse_m`` nodes, time step
    ``coarse_dt``); only the local refinement uses ``numerics`` and ``m``.  The
    first search is a log-spaced grid over the interior of the box.  The second
    works on a ``(sigma, varsigma)`` grid and solves the intensity so that the
    CDS residual vanishes (the weighted CDS term dominates the cost and is steep
    in ``lambda``).  Both rank points by the full coarse residual."""
    q = quotes.bank(bank) if isinstance(quotes, MarketQuotes) else quotes
    lo = np.log([b[0] for b in bounds])
    hi = np.log([b[1] for b in bounds])
    fun = _bank_residuals(sheets, bank, q, numerics, m)
    coarse = _bank_residuals(sheets, bank, q, numerics.replace(dt=max(numerics.dt, coarse_dt), N=None),
                             min(m, coarse_m))
    grid = np.array(np.meshgrid(*[np.linspace(a, b, n_coarse + 2)[1:-1] for a, b in zip(lo, hi)],
                                indexing="ij")).reshape(3, -1).T
    starts = []
    for cands in (grid, _profile_starts(coarse, lo, hi, n_coarse)):
        ranked = []
        for z in cands:
            try:
                r = coarse(z)
            except (ArithmeticError, ValueError):
                continue
            ranked.append((0.5 * float(r @ r), z))
        ranked.sort(key=lambda s: s[0])
        starts += ranked[:n_starts]
    best = None
    for _, z in starts:
        fit = projected_gauss_newton(fun, z, lo, hi, max_iter=max_iter)
        if best is None or fit.cost < best.cost:
            best = fit
        if best.cost <= 1e-18:
            break
    if best is None:
        raise NoConvergence("no admissible starting point")
    res = CalibResult(np.exp(best.z), 0.0, 0.0, math.sqrt(2 * best.cost), best.iterations, best.converged,
                      [(i, c, np.exp(z)) for i, c, z in best.trace], names=BANK_PARAM_NAMES)
    if res.residual_norm > max_residual:
        raise NoConvergence(f"residual {res.residual_norm:.3g} exceeds {max_residual:.3g}", res)
    return res


# ---------------------------------------------------------------------------
# correlation


PAPER_FORMULA, MODEL_FORMULA = "paper", "model"


def estimate_correlation(series: HistoricalSeries, theta1: Sequence[float], theta2: Sequence[float],
                         sheets: Optional[BalanceSheets] = None, formula: str = PAPER_FORMULA,
                         n_sigma: float = 3.0) -> CorrelationEstimate:
    """Brownian correlation from the sample covariance of asset log returns,
    with ``lambda12 = rho * min(lambda1, lambda2)``.

    ``formula='paper'`` solves ``cov = s1 s2 (rho + rho m / (v1 v2))``;
    ``formula='model'`` solves ``cov = s1 s2 rho + rho m / (v1 v2)``, the
    covariance rate of log returns in this model (``m = min(lambda1, lambda2)``,
    ``v_i`` the jump-size rates; ``v1 v2`` is the same in either normalization).
    Intervals are ``n_sigma`` standard errors of the sample covariance, mapped
    through the (linear) relation.
    """
    s1, l1, v1 = (float(p) for p in theta1)
    s2, l2, v2 = (float(p) for p in theta2)
    r1, r2 = series.asset_log_returns(sheets)
    n = r1.size
    d1, d2 = r1 - r1.mean(), r2 - r2.mean()
    prod = d1 * d2
    ppy = series.periods_per_year
    cov = float(prod.sum() / (n - 1)) * ppy
    se = float(prod.std(ddof=1) / math.sqrt(n)) * ppy
    m = min(l1, l2)
    if formula == PAPER_FORMULA:
        slope = s1 * s2 * (1.0 + m / (v1 * v2))
    elif formula == MODEL_FORMULA:
        slope = s1 * s2 + m / (v1 * v2)
    else:
        raise ValueError(f"unknown formula {formula!r}")
    rho = cov / slope
    if not -1.0 <= rho <= 1.0:
        raise OutOfRange(f"implied correlation {rho:.4g} lies outside [-1, 1]")
    half = n_sigma * se / slope
    ci = (max(-1.0, rho - half), min(1.0, rho + half))
    return CorrelationEstimate(rho, rho * m, ci, (ci[0] * m, ci[1] * m), cov, se)


def simulate_history(spec: ModelSpec, n_days: int, sheets: BalanceSheets, seed: int = 0,
                     periods_per_year: float = 252.0) -> HistoricalSeries:
    """Equity closes implied by simulated asset paths ending at the sheets'
    total assets (liabilities held fixed)."""
    from .mc import simulate_log_returns
    r1, r2 = simulate_log_returns(spec, n_days, 1.0 / periods_per_year, seed)
    b1, b2 = sheets.bank1, sheets.bank2
    A1 = b1.A_total * np.exp(np.concatenate([[0.0], np.cumsum(r1)]) - r1.sum())
    A2 = b2.A_total * np.exp(np.concatenate([[0.0], np.cumsum(r2)]) - r2.sum())
    E1, E2 = A1 - b1.L_total, A2 - b2.L_total
    if np.any(E1 <= 0) or np.any(E2 <= 0):
        raise OutOfRange("simulated equity became nonpositive; use a less levered sheet")
    return HistoricalSeries(list(range(n_days + 1)), E1, E2, periods_per_year)


# ---------------------------------------------------------------------------
# two-bank calibration


DEFAULT_BOUNDS = ((0.002, 0.2), (0.002, 0.2), (1e-6, 1.0), (1e-6, 1.0), (0.01, 5.0), (0.01, 5.0))


def model_quotes(sheets: BalanceSheets, params: Sequence[float], rho: float, lambda12: float,
                 strikes1: Sequence[float], strikes2: Sequence[float], numerics: Numerics = Numerics(),
                 m: int = 400):
    """(cds1, cds2, puts1, puts2): CDS par spreads from the two-bank PIDE, puts
    from each bank's single-bank model with its total jump intensity."""
    sp = sheets.spec(params, rho, lambda12)
    c1 = cds_par_spread(sp, 1, numerics)
    c2 = cds_par_spread(sp, 2, numerics)
    p1 = BankModel1D(sp, 1, numerics, m).quotes(strikes1)[1]
    p2 = BankModel1D(sp, 2, numerics, m).quotes(strikes2)[1]
    return c1, c2, p1, p2


def synthetic_quotes(sheets: BalanceSheets, params: Sequence[float], rho: float, lambda12: float,
                     numerics: Numerics = Numerics(), weight: float = 1e4, m: int = 400) -> MarketQuotes:
    k1, k2 = default_strikes(sheets.bank1.E), default_strikes(sheets.bank2.E)
    c1, c2, p1, p2 = model_quotes(sheets, params, rho, lambda12, k1, k2, numerics, m)
    return MarketQuotes(BankQuotes(sheets.bank1.E, c1, tuple(p1), k1, weight),
                        BankQuotes(sheets.bank2.E, c2, tuple(p2), k2, weight))


def synthetic_bank_quotes(sheets: BalanceSheets, bank: int, params: Sequence[float],
                          numerics: Numerics = Numerics(), weight: float = 1e4, m: int = 400) -> BankQuotes:
    E = (sheets.bank1 if bank == 1 else sheets.bank2).E
    k = default_strikes(E)
    c, p = bank_quotes_1d(sheets.bank_spec(bank, params), bank, k, numerics, m)
    return BankQuotes(E, c, tuple(p), k, weight)


def joint_start(theta1: Sequence[float], theta2: Sequence[float], lambda12: float = 0.0,
                bounds=DEFAULT_BOUNDS) -> np.ndarray:
    """Two-bank starting vector from single-bank fits.

    A single-bank fit sees every jump of its bank, so its intensity is the total
    ``lambda_i + lambda12``, and its jump rate is the physical ``theta_i``
    (there ``Sigma = sigma_i``).  The joint vector carries the idiosyncratic
    intensities and ``varsigma_i = theta_i sigma_i / Sigma``.
    """
    s1, l1, t1 = (float(p) for p in theta1)
    s2, l2, t2 = (float(p) for p in theta2)
    Sigma = math.sqrt(s1 * s2)
    z = np.array([s1, s2, l1 - lambda12, l2 - lambda12, t1 * s1 / Sigma, t2 * s2 / Sigma])
    return np.clip(z, [b[0] for b in bounds], [b[1] for b in bounds])


def calibrate_joint(quotes: MarketQuotes, sheets: BalanceSheets, start: Sequence[float], rho: float,
                    lambda12: float, bounds=DEFAULT_BOUNDS, numerics: Numerics = Numerics(),
                    fix_jumps: bool = False, max_iter: int = 200, gtol: float = 1e-8,
                    m: int = 400) -> CalibResult:
    """Six-parameter least squares with ``rho`` and ``lambda12`` held fixed.

    ``fix_jumps`` pins the intensities (and ``lambda12``) to zero and fits the
    two volatilities only.  Raises :class:`NoConvergence` carrying the best
    result if the optimizer stalls.
    """
    q1, q2 = quotes.bank1, quotes.bank2
    start = np.asarray(start, dtype=float)
    free = [0, 1] if fix_jumps else list(range(6))
    lo_all = np.log([b[0] for b in bounds])
    hi_all = np.log([b[1] for b in bounds])
    base = start.copy()
    if fix_jumps:
        base[2] = base[3] = 0.0
        lambda12 = 0.0

    def params_of(z):
        p = base.copy()
        p[free] = np.exp(z)
        return p

    def fun(z):
        c1, c2, p1, p2 = model_quotes(sheets, params_of(z), rho, lambda12, q1.strikes, q2.strikes, numerics, m)
        return np.concatenate([[math.sqrt(q1.weight) * (c1 - q1.cds_spread)], p1 - np.asarray(q1.puts),
                               [math.sqrt(q2.weight) * (c2 - q2.cds_spread)], p2 - np.asarray(q2.puts)])

    z0 = np.log(np.clip(start[free], np.exp(lo_all[free]), np.exp(hi_all[free])))
    fit = projected_gauss_newton(fun, z0, lo_all[free], hi_all[free], max_iter=max_iter, gtol=gtol)
    res = CalibResult(params_of(fit.z), rho, lambda12, math.sqrt(2 * fit.cost), fit.iterations,
                      fit.converged, [(i, c, params_of(z)) for i, c, z in fit.trace])
    if not fit.converged:
        raise NoConvergence(f"optimizer stalled after {fit.iterations} iterations", res)
    return res


# ---------------------------------------------------------------------------
# CSV input


def read_quotes(path) -> MarketQuotes:
    """CSV with header ``bank,instrument,strike,price,spread`` where instrument
    is ``equity`` (price = close), ``cds`` (spread) or ``put`` (strike, price).
    An optional ``weight`` column on the cds row sets the CDS weight."""
    rows = {1: {"puts": []}, 2: {"puts": []}}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"bank", "instrument", "strike", "price", "spread"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"quote file must have columns {sorted(need)}")
        for row in reader:
            b = int(row["bank"])
            if b not in rows:
                raise ConfigError(f"bank must be 1 or 2, got {b}")
            kind = row["instrument"].strip().lower()
            if kind == "equity":
                rows[b]["equity"] = float(row["price"])
            elif kind == "cds":
                rows[b]["cds"] = float(row["spread"])
                if row.get("weight"):
                    rows[b]["weight"] = float(row["weight"])
            elif kind == "put":
                rows[b]["puts"].append((float(row["strike"]), float(row["price"])))
            else:
                raise ConfigError(f"unknown instrument {kind!r}")
    out = []
    for b in (1, 2):
        r = rows[b]
        if "equity" not in r or "cds" not in r or not r["puts"]:
            raise ConfigError(f"quotes for bank {b} are incomplete")
        ks, ps = zip(*r["puts"])
        out.append(BankQuotes(r["equity"], r["cds"], tuple(ps), tuple(ks), r.get("weight", 1e4)))
    return MarketQuotes(*out)


def write_quotes(path, quotes: MarketQuotes) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bank", "instrument", "strike", "price", "spread", "weight"])
        for b in (1, 2):
            q = quotes.bank(b)
            w.writerow([b, "equity", "", repr(q.equity), "", ""])
            w.writerow([b, "cds", "", "", repr(q.cds_spread), repr(q.weight)])
            for k, p in zip(q.strikes, q.puts):
                w.writerow([b, "put", repr(float(k)), repr(float(p)), "", ""])


def read_history(path, periods_per_year: float = 252.0) -> HistoricalSeries:
    """CSV with header ``date,close1,close2``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "close1", "close2"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"history file must have columns {sorted(need)}")
        rows = list(reader)
    return HistoricalSeries([r["date"] for r in rows], [float(r["close1"]) for r in rows],
                            [float(r["close2"]) for r in rows], periods_per_year)


def write_history(path, series: HistoricalSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close1", "close2"])
        for d, a, b in zip(series.dates, series.close1, series.close2):
            w.writerow([d, repr(float(a)), repr(float(b))])
