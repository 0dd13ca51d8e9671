"""Two-bank structural model: balance sheets, default boundaries, normalization
and terminal settlement.

Coordinates follow the dimensionless convention used by the solvers:
``X_i = (Sigma / sigma_i) * ln(A_i / Lambda_i^<)`` and ``t_bar = Sigma**2 * t`` with
``Sigma = sqrt(sigma_1 * sigma_2)``.  Bank ``i`` is alive before maturity while
``X_i > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Tuple

import numba
import numpy as np

from .errors import InvalidSpec, NoConsistentRegime, NonpositiveBoundary, NonpositiveShiftedBoundary

# region labels returned by classify_terminal
D12, D1, D2, D0 = "D12", "D1", "D2", "D0"
REGION_CODES = {D12: 3, D1: 1, D2: 2, D0: 0}


@dataclass(frozen=True)
class ModelSpec:
    """Economic inputs.  ``L12`` is owed by bank 1 to bank 2; intensities are the
    Marshall-Olkin stream rates (idiosyncratic ``lambda1``, ``lambda2`` and common
    ``lambda12``); ``theta_i`` is the rate of the exponential log-jump size."""

    A1: float
    A2: float
    L1: float
    L2: float
    L12: float
    L21: float
    R1: float
    R2: float
    sigma1: float
    sigma2: float
    rho: float
    theta1: float
    theta2: float
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda12: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "theta1", "theta2", "T"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("R1", "R2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidSpec(f"rho must lie in [-1, 1], got {self.rho}")
        for name in ("lambda1", "lambda2", "lambda12", "L1", "L2", "L12", "L21", "A1", "A2"):
            if not getattr(self, name) >= 0:
                raise InvalidSpec(f"{name} must be nonnegative, got {getattr(self, name)}")

    @property
    def total_liabilities(self) -> Tuple[float, float]:
        return self.L1 + self.L12, self.L2 + self.L21

    @property
    def total_intensities(self) -> Tuple[float, float]:
        """Jump intensity felt by each bank: own stream plus the common one."""
        return self.lambda1 + self.lambda12, self.lambda2 + self.lambda12

    @property
    def has_jumps(self) -> bool:
        return self.lambda1 + self.lambda2 + self.lambda12 > 0

    def swapped(self) -> "ModelSpec":
        """Same economy with the bank labels exchanged."""
        return ModelSpec(
            A1=self.A2, A2=self.A1, L1=self.L2, L2=self.L1, L12=self.L21, L21=self.L12,
            R1=self.R2, R2=self.R1, sigma1=self.sigma2, sigma2=self.sigma1, rho=self.rho,
            theta1=self.theta2, theta2=self.theta1, lambda1=self.lambda2,
            lambda2=self.lambda1, lambda12=self.lambda12, T=self.T,
        )

    def without_jumps(self) -> "ModelSpec":
        return replace(self, lambda1=0.0, lambda2=0.0, lambda12=0.0)

    def replace(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class BoundarySet:
    Lam1_lt: float
    Lam2_lt: float
    Lam1_eq: float
    Lam2_eq: float
    # post-counterparty-default boundaries of the survivor
    Lamt1_lt: float
    Lamt2_lt: float
    Lamt1_eq: float
    Lamt2_eq: float
    mu1_eq: float
    mu2_eq: float
    mut1_lt: float
    mut2_lt: float
    mut1_eq: float
    mut2_eq: float

    @property
    def shift1_lt(self) -> float:
        """Jump of bank 1's boundary when bank 2 defaults before maturity."""
        return self.Lamt1_lt - self.Lam1_lt

    @property
    def shift2_lt(self) -> float:
        return self.Lamt2_lt - self.Lam2_lt

    @property
    def shift1_eq(self) -> float:
        return self.Lamt1_eq - self.Lam1_eq

    @property
    def shift2_eq(self) -> float:
        return self.Lamt2_eq - self.Lam2_eq


@dataclass(frozen=True)
class NormalizedModel:
    Sigma: float
    xi1: float
    xi2: float
    zeta1: float
    zeta2: float
    varsigma1: float
    varsigma2: float
    kappa1: float
    kappa2: float
    lam1: float
    lam2: float
    lam12: float
    v: float
    Tbar: float
    x0: Tuple[float, float]
    rho: float

    @property
    def lam1_tot(self) -> float:
        return self.lam1 + self.lam12

    @property
    def lam2_tot(self) -> float:
        return self.lam2 + self.lam12


def compute_boundaries(spec: ModelSpec) -> BoundarySet:
    Lt1, Lt2 = spec.total_liabilities
    lam1_lt = spec.R1 * Lt1 - spec.L21
    lam2_lt = spec.R2 * Lt2 - spec.L12
    if lam1_lt <= 0 or lam2_lt <= 0:
        raise NonpositiveBoundary(
            f"pre-maturity default boundaries must be positive, got {lam1_lt:.6g}, {lam2_lt:.6g}"
        )
    lam1_eq = Lt1 - spec.L21
    lam2_eq = Lt2 - spec.L12
    # survivor's boundaries after the other bank defaulted
    lamt1_lt = spec.R1 * (spec.L1 + spec.L12 - spec.R2 * spec.L21)
    lamt2_lt = spec.R2 * (spec.L2 + spec.L21 - spec.R1 * spec.L12)
    lamt1_eq = spec.L1 + spec.L12 - spec.R2 * spec.L21
    lamt2_eq = spec.L2 + spec.L21 - spec.R1 * spec.L12
    if lamt1_lt <= 0 or lamt2_lt <= 0:
        raise NonpositiveShiftedBoundary(
            f"shifted boundaries must be positive, got {lamt1_lt:.6g}, {lamt2_lt:.6g}"
        )
    Sigma = np.sqrt(spec.sigma1 * spec.sigma2)
    z1, z2 = Sigma / spec.sigma1, Sigma / spec.sigma2
    return BoundarySet(
        Lam1_lt=lam1_lt, Lam2_lt=lam2_lt, Lam1_eq=lam1_eq, Lam2_eq=lam2_eq,
        Lamt1_lt=lamt1_lt, Lamt2_lt=lamt2_lt, Lamt1_eq=lamt1_eq, Lamt2_eq=lamt2_eq,
        mu1_eq=z1 * np.log(lam1_eq / lam1_lt), mu2_eq=z2 * np.log(lam2_eq / lam2_lt),
        mut1_lt=z1 * np.log(lamt1_lt / lam1_lt), mut2_lt=z2 * np.log(lamt2_lt / lam2_lt),
        mut1_eq=z1 * np.log(lamt1_eq / lam1_lt), mut2_eq=z2 * np.log(lamt2_eq / lam2_lt),
    )


def normalize(spec: ModelSpec) -> NormalizedModel:
    """Dimensionless drift, jump and time parameters of the PIDE.

    The drift carries the jump compensator in X-units, ``zeta_i * kappa_i * lam_i``,
    which is what Ito's formula gives for ``X_i``; for ``sigma_1 == sigma_2`` this
    reduces to ``kappa_i * lam_i``.
    """
    bs = compute_boundaries(spec)
    Sigma = float(np.sqrt(spec.sigma1 * spec.sigma2))
    s2 = Sigma * Sigma
    z1, z2 = Sigma / spec.sigma1, Sigma / spec.sigma2
    k1 = -1.0 / (spec.theta1 + 1.0)
    k2 = -1.0 / (spec.theta2 + 1.0)
    l1, l2, l12 = spec.lambda1 / s2, spec.lambda2 / s2, spec.lambda12 / s2
    xi1 = -(spec.sigma1 / (2 * Sigma) + z1 * k1 * (l1 + l12))
    xi2 = -(spec.sigma2 / (2 * Sigma) + z2 * k2 * (l2 + l12))
    if spec.A1 <= 0 or spec.A2 <= 0:
        raise InvalidSpec("initial asset values must be positive")
    x0 = (z1 * float(np.log(spec.A1 / bs.Lam1_lt)), z2 * float(np.log(spec.A2 / bs.Lam2_lt)))
    return NormalizedModel(
        Sigma=Sigma, xi1=float(xi1), xi2=float(xi2), zeta1=z1, zeta2=z2,
        varsigma1=spec.sigma1 * spec.theta1 / Sigma, varsigma2=spec.sigma2 * spec.theta2 / Sigma,
        kappa1=k1, kappa2=k2, lam1=l1, lam2=l2, lam12=l12, v=l1 + l2 + l12,
        Tbar=s2 * spec.T, x0=x0, rho=spec.rho,
    )


def assets_from_coords(x1, x2, spec: ModelSpec, bs: BoundarySet | None = None):
    """Invert the normalization: ``A_i = Lambda_i^< exp(sigma_i x_i / Sigma)``."""
    bs = bs or compute_boundaries(spec)
    Sigma = np.sqrt(spec.sigma1 * spec.sigma2)
    a1 = bs.Lam1_lt * np.exp(spec.sigma1 * np.asarray(x1, dtype=float) / Sigma)
    a2 = bs.Lam2_lt * np.exp(spec.sigma2 * np.asarray(x2, dtype=float) / Sigma)
    return a1, a2


@dataclass(frozen=True)
class SettlementVector:
    omega1: float
    omega2: float


def settle_arrays(A1T, A2T, L1, L2, L12, L21):
    """Vectorised closed-form clearing vector for two banks.

    Enumerates the four regimes {omega_i = 1 or < 1}; exactly one is consistent
    for nonnegative assets.  Returns ``(omega1, omega2)`` as float arrays.
    """
    a1 = np.asarray(A1T, dtype=float)
    a2 = np.asarray(A2T, dtype=float)
    a1, a2 = np.broadcast_arrays(a1, a2)
    Lt1, Lt2 = L1 + L12, L2 + L21
    if Lt1 <= 0 and Lt2 <= 0:
        return np.ones_like(a1), np.ones_like(a2)
    if Lt1 <= 0:
        return np.ones_like(a1), np.minimum(1.0, (a2 + L12) / Lt2)
    if Lt2 <= 0:
        return np.minimum(1.0, (a1 + L21) / Lt1), np.ones_like(a2)

    shape = a1.shape
    w1, w2, bad = _settle_flat(np.ascontiguousarray(a1, dtype=float).ravel(),
                               np.ascontiguousarray(a2, dtype=float).ravel(),
                               float(Lt1), float(Lt2), float(L12), float(L21))
    if bad:
        raise NoConsistentRegime("no self-consistent settlement regime found")
    return w1.reshape(shape), w2.reshape(shape)


@numba.njit(cache=True)
def _settle_flat(a1, a2, Lt1, Lt2, L12, L21):
    n = a1.size
    w1 = np.empty(n)
    w2 = np.empty(n)
    det = Lt1 * Lt2 - L12 * L21
    bad = False
    for k in range(n):
        x1, x2 = a1[k], a2[k]
        pays1 = x1 + L21 >= Lt1  # solvent when paid in full by the other bank
        pays2 = x2 + L12 >= Lt2
        w2_b = (x2 + L12) / Lt2
        w1_c = (x1 + L21) / Lt1
        if pays1 and pays2:
            u1, u2 = 1.0, 1.0
        elif not pays2 and x1 + w2_b * L21 >= Lt1:
            u1, u2 = 1.0, w2_b
        elif not pays1 and x2 + w1_c * L12 >= Lt2:
            u1, u2 = w1_c, 1.0
        else:
            u1 = (x1 * Lt2 + x2 * L21) / det
            u2 = (x2 * Lt1 + x1 * L12) / det
            if u1 >= 1.0 + 1e-12 or u2 >= 1.0 + 1e-12:
                bad = True
        w1[k] = min(u1, 1.0)
        w2[k] = min(u2, 1.0)
    return w1, w2, bad


def settle_terminal(A1T: float, A2T: float, spec: ModelSpec) -> SettlementVector:
    if A1T < 0 or A2T < 0:
        raise InvalidSpec("terminal asset values must be nonnegative")
    w1, w2 = settle_arrays(A1T, A2T, spec.L1, spec.L2, spec.L12, spec.L21)
    return SettlementVector(float(w1), float(w2))


def settlement_on_coords(x1, x2, spec: ModelSpec, bs: BoundarySet | None = None):
    """Clearing vector at maturity for normalized coordinates."""
    a1, a2 = assets_from_coords(x1, x2, spec, bs)
    return settle_arrays(a1, a2, spec.L1, spec.L2, spec.L12, spec.L21)


def region_codes(x1, x2, spec: ModelSpec, bs: BoundarySet | None = None):
    """Integer region codes (see ``REGION_CODES``) at maturity: bank i survives iff omega_i == 1."""
    w1, w2 = settlement_on_coords(x1, x2, spec, bs)
    s1 = w1 >= 1.0
    s2 = w2 >= 1.0
    return np.where(s1 & s2, 3, np.where(s1, 1, np.where(s2, 2, 0)))


def classify_terminal(x1: float, x2: float, spec: ModelSpec) -> str:
    code = int(region_codes(x1, x2, spec))
    return {3: D12, 1: D1, 2: D2, 0: D0}[code]
