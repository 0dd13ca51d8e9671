"""Monte Carlo simulation of the two-bank cascade, used as an independent check
on the PIDE values.

Log-assets follow exact Gaussian increments between jump events.  The three
Poisson streams (bank 1, bank 2, common) are merged per time step; each step is
split at its event times.  Every diffusive piece is tested for a barrier
crossing with the Brownian-bridge probability when ``bridge`` is on.  When a
bank defaults before maturity the survivor's barrier moves to its shifted
level; a common jump that takes both banks down counts as a simultaneous
default with no shift.  Survivors at maturity are settled with the clearing
vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import model as mdl
from .model import ModelSpec

QUANTITIES = ("joint", "marginal1", "marginal2", "ftd_loss_leg", "cds_loss_leg")


@dataclass(frozen=True)
class PathConfig:
    n_paths: int = 100_000
    n_steps: int = 500  # per year
    seed: int = 12345
    bridge: bool = True
    n_batches: int = 1

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be at least 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_paths: int

    @property
    def defined(self) -> bool:
        return self.n_paths > 1 and math.isfinite(self.stderr)


@dataclass
class CascadeOutcome:
    """Per-path results; ``tau_i`` is ``inf`` when bank i is alive at maturity
    (before settlement)."""

    tau1: np.ndarray
    tau2: np.ndarray
    logA1: np.ndarray
    logA2: np.ndarray
    survive1: np.ndarray
    survive2: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    pair: np.ndarray  # antithetic pair index of each path


@numba.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@numba.njit(cache=True)
def _simulate(n_pairs, x01, x02, b1, b2, bt1, bt2, mu1, mu2, s1, s2, rho, th1, th2,
              l1, l2, l12, T, n_steps, bridge, seed):
    _seed(seed)
    n = 2 * n_pairs
    tau1 = np.full(n, np.inf)
    tau2 = np.full(n, np.inf)
    xa1 = np.empty(n)
    xa2 = np.empty(n)
    dt = T / n_steps
    lam = l1 + l2 + l12
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    ev_t = np.empty(64)
    ev_k = np.empty(64, dtype=np.int64)
    ev_j1 = np.empty(64)
    ev_j2 = np.empty(64)
    for p in range(n_pairs):
        # shared jump structure for the antithetic pair, drawn step by step
        xs1 = np.array([x01, x01])
        xs2 = np.array([x02, x02])
        bar1 = np.array([b1, b1])
        bar2 = np.array([b2, b2])
        dead1 = np.array([False, False])
        dead2 = np.array([False, False])
        t1 = np.array([np.inf, np.inf])
        t2 = np.array([np.inf, np.inf])
        for step in range(n_steps):
            t0 = step * dt
            # events inside the step
            ne = 0
            if lam > 0.0:
                u = 0.0
                while True:
                    u += -math.log(1.0 - np.random.random()) / lam
                    if u >= dt or ne >= 64:
                        break
                    r = np.random.random() * lam
                    if r < l1:
                        k = 1
                    elif r < l1 + l2:
                        k = 2
                    else:
                        k = 3
                    ev_t[ne] = u
                    ev_k[ne] = k
                    ev_j1[ne] = -math.log(1.0 - np.random.random()) / th1
                    ev_j2[ne] = -math.log(1.0 - np.random.random()) / th2
                    ne += 1
            # Gaussian draws for each piece, shared by the pair with opposite sign
            prev = 0.0
            for e in range(ne + 1):
                end = ev_t[e] if e < ne else dt
                h = end - prev
                z1 = np.random.normal()
                z2 = rho * z1 + rc * np.random.normal()
                ub1 = np.random.random()
                ub2 = np.random.random()
                for a in range(2):
                    sg = 1.0 if a == 0 else -1.0
                    if dead1[a] and dead2[a]:
                        continue
                    ya1 = xs1[a] + mu1 * h + s1 * math.sqrt(h) * sg * z1
                    ya2 = xs2[a] + mu2 * h + s2 * math.sqrt(h) * sg * z2
                    c1 = False
                    c2 = False
                    if not dead1[a]:
                        if ya1 <= bar1[a]:
                            c1 = True
                        elif bridge and h > 0.0:
                            c1 = ub1 < math.exp(-2.0 * (xs1[a] - bar1[a]) * (ya1 - bar1[a]) / (s1 * s1 * h))
                    if not dead2[a]:
                        if ya2 <= bar2[a]:
                            c2 = True
                        elif bridge and h > 0.0:
                            c2 = ub2 < math.exp(-2.0 * (xs2[a] - bar2[a]) * (ya2 - bar2[a]) / (s2 * s2 * h))
                    xs1[a] = ya1
                    xs2[a] = ya2
                    tt = t0 + end
                    # jump at the end of the piece
                    if e < ne:
                        k = ev_k[e]
                        if (k == 1 or k == 3) and not dead1[a] and not c1:
                            xs1[a] -= ev_j1[e]
                            if xs1[a] <= bar1[a]:
                                c1 = True
                        if (k == 2 or k == 3) and not dead2[a] and not c2:
                            xs2[a] -= ev_j2[e]
                            if xs2[a] <= bar2[a]:
                                c2 = True
                    if c1 and c2:
                        dead1[a] = True
                        dead2[a] = True
                        t1[a] = tt
                        t2[a] = tt
                    elif c1:
                        dead1[a] = True
                        t1[a] = tt
                        if not dead2[a]:
                            bar2[a] = bt2
                            if xs2[a] <= bar2[a]:
                                dead2[a] = True
                                t2[a] = tt
                    elif c2:
                        dead2[a] = True
                        t2[a] = tt
                        if not dead1[a]:
                            bar1[a] = bt1
                            if xs1[a] <= bar1[a]:
                                dead1[a] = True
                                t1[a] = tt
                prev = end
        for a in range(2):
            i = 2 * p + a
            tau1[i] = t1[a]
            tau2[i] = t2[a]
            xa1[i] = xs1[a]
            xa2[i] = xs2[a]
    return tau1, tau2, xa1, xa2


def _batch_seeds(seed: int, n_batches: int):
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in ss.spawn(n_batches)]


def simulate_cascade(spec: ModelSpec, cfg: PathConfig = PathConfig()) -> CascadeOutcome:
    bs = mdl.compute_boundaries(spec)
    n_pairs = max(1, (cfg.n_paths + 1) // 2)
    n_steps = max(1, int(math.ceil(cfg.n_steps * spec.T - 1e-9)))
    lt1, lt2 = spec.total_intensities
    k1 = -1.0 / (spec.theta1 + 1.0)
    k2 = -1.0 / (spec.theta2 + 1.0)
    mu1 = -k1 * lt1 - 0.5 * spec.sigma1 ** 2
    mu2 = -k2 * lt2 - 0.5 * spec.sigma2 ** 2
    seeds = _batch_seeds(cfg.seed, cfg.n_batches)
    sizes = np.full(cfg.n_batches, n_pairs // cfg.n_batches)
    sizes[: n_pairs % cfg.n_batches] += 1
    parts = []
    for s, m in zip(seeds, sizes):
        if m == 0:
            continue
        parts.append(_simulate(int(m), math.log(spec.A1), math.log(spec.A2), math.log(bs.Lam1_lt),
                               math.log(bs.Lam2_lt), math.log(bs.Lamt1_lt), math.log(bs.Lamt2_lt),
                               mu1, mu2, spec.sigma1, spec.sigma2, spec.rho, spec.theta1, spec.theta2,
                               spec.lambda1, spec.lambda2, spec.lambda12, spec.T, n_steps, cfg.bridge, s))
    tau1, tau2, x1, x2 = (np.concatenate(v)[: cfg.n_paths] for v in zip(*parts))
    alive1, alive2 = ~np.isfinite(tau1), ~np.isfinite(tau2)
    A1, A2 = np.exp(x1), np.exp(x2)
    w1 = np.where(alive1, 1.0, 0.0)
    w2 = np.where(alive2, 1.0, 0.0)
    both = alive1 & alive2
    if both.any():
        a, b = mdl.settle_arrays(A1[both], A2[both], spec.L1, spec.L2, spec.L12, spec.L21)
        w1[both], w2[both] = a, b
    only1 = alive1 & ~alive2
    # the defaulted counterparty paid R_k of its interbank debt
    w1[only1] = np.minimum(1.0, (A1[only1] + spec.R2 * spec.L21) / (spec.L1 + spec.L12))
    only2 = alive2 & ~alive1
    w2[only2] = np.minimum(1.0, (A2[only2] + spec.R1 * spec.L12) / (spec.L2 + spec.L21))
    s1 = alive1 & (w1 >= 1.0)
    s2 = alive2 & (w2 >= 1.0)
    pair = np.arange(tau1.size) // 2
    return CascadeOutcome(tau1, tau2, x1, x2, s1, s2, w1, w2, pair)


def _path_values(quantity: str, spec: ModelSpec, out: CascadeOutcome) -> np.ndarray:
    s1, s2 = out.survive1, out.survive2
    if quantity == "joint":
        return (s1 & s2).astype(float)
    if quantity == "marginal1":
        return s1.astype(float)
    if quantity == "marginal2":
        return s2.astype(float)
    A1, A2 = np.exp(out.logA1), np.exp(out.logA2)
    early1 = np.isfinite(out.tau1)
    early2 = np.isfinite(out.tau2)
    w1, w2 = out.omega1, out.omega2
    # recovery at maturity given the counterparty's payment fraction
    rt1 = np.minimum(1.0, (A1 + w2 * spec.L21) / (spec.L1 + w2 * spec.L12))
    rt2 = np.minimum(1.0, (A2 + w1 * spec.L12) / (spec.L2 + w1 * spec.L21))
    r1T = np.where(early2, spec.R1, np.minimum(spec.R1, rt1))
    r2T = np.where(early1, spec.R2, np.minimum(spec.R2, rt2))
    def1T = ~early1 & ~s1
    def2T = ~early2 & ~s2
    if quantity == "cds_loss_leg":
        return np.where(early1, 1.0 - spec.R1, np.where(def1T, 1.0 - r1T, 0.0))
    if quantity == "ftd_loss_leg":
        first1 = early1 & (out.tau1 < out.tau2)
        first2 = early2 & (out.tau2 < out.tau1)
        simul = early1 & early2 & (out.tau1 == out.tau2)
        at_T = ~early1 & ~early2
        loss_T = np.where(def1T & def2T, 1.0 - np.minimum(r1T, r2T),
                          np.where(def1T, 1.0 - r1T, np.where(def2T, 1.0 - r2T, 0.0)))
        return np.select([first1, first2, simul, at_T],
                         [1.0 - spec.R1, 1.0 - spec.R2, 1.0 - min(spec.R1, spec.R2), loss_T], 0.0)
    raise ValueError(f"unknown quantity {quantity!r}")


def estimate_from(quantity: str, spec: ModelSpec, out: CascadeOutcome) -> McEstimate:
    """Mean over paths; the standard error treats each antithetic pair mean as
    one independent sample."""
    v = _path_values(quantity, spec, out)
    n = v.size
    if n < 2:
        return McEstimate(float(v.mean()), float("nan"), n)
    sums = np.bincount(out.pair, weights=v)
    counts = np.bincount(out.pair)
    means = sums / counts
    se = means.std(ddof=1) / math.sqrt(means.size) if means.size > 1 else float("nan")
    return McEstimate(float(v.mean()), float(se), n)


def estimate(quantity: str, spec: ModelSpec, cfg: PathConfig = PathConfig()) -> McEstimate:
    return estimate_from(quantity, spec, simulate_cascade(spec, cfg))


def simulate_log_returns(spec: ModelSpec, n_periods: int, dt: float, seed: int = 0):
    """Log-asset increments over ``n_periods`` steps of length ``dt`` (years),
    ignoring default; used to generate return histories."""
    rng = np.random.default_rng(seed)
    lt1, lt2 = spec.total_intensities
    mu1 = lt1 / (spec.theta1 + 1.0) - 0.5 * spec.sigma1 ** 2
    mu2 = lt2 / (spec.theta2 + 1.0) - 0.5 * spec.sigma2 ** 2
    z1 = rng.standard_normal(n_periods)
    z2 = spec.rho * z1 + math.sqrt(max(0.0, 1.0 - spec.rho ** 2)) * rng.standard_normal(n_periods)
    n1 = rng.poisson(spec.lambda1 * dt, n_periods)
    n2 = rng.poisson(spec.lambda2 * dt, n_periods)
    n12 = rng.poisson(spec.lambda12 * dt, n_periods)

    def jumps(count, theta):
        # sum of `count` Exp(theta) sizes is Gamma(count, 1/theta)
        out = np.zeros(n_periods)
        k = count > 0
        out[k] = rng.gamma(count[k], 1.0 / theta)
        return out

    r1 = mu1 * dt + spec.sigma1 * math.sqrt(dt) * z1 - jumps(n1 + n12, spec.theta1)
    r2 = mu2 * dt + spec.sigma2 * math.sqrt(dt) * z2 - jumps(n2 + n12, spec.theta2)
    return r1, r2
