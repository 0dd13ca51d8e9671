"""Von Neumann analysis of the HV scheme with jump terms.

On an infinite uniform mesh every operator acts diagonally on the Fourier mode
``exp(i(j1 phi1 + j2 phi2))``.  The scaled eigenvalues are

    z0 = -rho b sin(phi1) sin(phi2),            b = dt / (h1 h2)
    z_k = -a_k (1 - cos phi_k) + i xi_k q_k sin(phi_k),  a_k = dt / h_k^2, q_k = dt / h_k
    s_k = dt varsigma_k h_k (1/2 + E_k / (1 - E_k)),    E_k = exp(-varsigma_k h_k - i phi_k)
    s12 = s1 s2 / dt

The jump factor uses ``exp(-i phi)`` because the recursion reads values at
lower indices (``V(x - u)``); its modulus matches the conjugate convention.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import WindowViolation
from .model import NormalizedModel


@dataclass
class SymbolPoint:
    phi1: np.ndarray
    phi2: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s12: np.ndarray
    s0: np.ndarray
    zt0: np.ndarray
    zt1: np.ndarray
    zt2: np.ndarray
    T: np.ndarray | None = None


def scheme_eigenvalues(phi1, phi2, h1: float, h2: float, dt: float, nm: NormalizedModel) -> SymbolPoint:
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    a1, a2 = dt / h1 ** 2, dt / h2 ** 2
    q1, q2 = dt / h1, dt / h2
    b = dt / (h1 * h2)
    z0 = -nm.rho * b * np.sin(phi1) * np.sin(phi2) + 0j
    z1 = -2 * a1 * np.sin(phi1 / 2) ** 2 + 1j * nm.xi1 * q1 * np.sin(phi1)
    z2 = -2 * a2 * np.sin(phi2 / 2) ** 2 + 1j * nm.xi2 * q2 * np.sin(phi2)

    def jump(vs, h, phi):
        E = np.exp(-vs * h - 1j * phi)
        return dt * vs * h * (0.5 + E / (1.0 - E))

    s1 = jump(nm.varsigma1, h1, phi1)
    s2 = jump(nm.varsigma2, h2, phi2)
    s12 = s1 * s2 / dt
    s0 = nm.lam1 * s1 + nm.lam2 * s2 + nm.lam12 * s12
    zt0 = z0 + s0
    zt1 = z1 - (nm.lam1 + 0.5 * nm.lam12) * dt
    zt2 = z2 - (nm.lam2 + 0.5 * nm.lam12) * dt
    return SymbolPoint(phi1, phi2, z0, z1, z2, s1, s2, s12, s0, zt0, zt1, zt2)


def hv_symbol(zt0, zt1, zt2, theta: float = 0.75, sigma: float = 0.5):
    """Amplification factor of one HV step for commuting operators."""
    zt0, zt1, zt2 = (np.asarray(v, dtype=complex) for v in (zt0, zt1, zt2))
    w = zt0 + zt1 + zt2
    p = (1 - theta * zt1) * (1 - theta * zt2)
    T = 1 + 2 * w / p - w / p ** 2 + sigma * w ** 2 / p ** 2
    return T if T.ndim else complex(T)


def jump_constant(nm: NormalizedModel) -> float:
    """``c0 = 2 lam1 + 2 lam2 + 4 lam12``."""
    return 2 * nm.lam1 + 2 * nm.lam2 + 4 * nm.lam12


@dataclass
class StabilityReport:
    max_abs_T: float
    argmax: tuple
    c0: float
    c1: float
    c_loose: float
    bound: float
    K: float  # (max|T| - 1) / (c0 dt), the empirical constant relative to c0
    lemma_ok: bool
    passed: bool
    in_window: bool
    grid: tuple  # (phi1, phi2, |T|) arrays


def stability_sweep(nm: NormalizedModel, h1: float, h2: float, dt: float, theta: float = 0.75,
                    sigma: float = 0.5, n_phi: int = 257) -> StabilityReport:
    in_window = 0.5 <= sigma <= (1 + math.sqrt(2) / 2) * theta
    if not in_window:
        warnings.warn(WindowViolation(f"theta={theta}, sigma={sigma} outside the stability window"))
    phi = np.linspace(0.0, 2 * np.pi, n_phi)
    P1, P2 = np.meshgrid(phi, phi, indexing="ij")
    sp = scheme_eigenvalues(P1, P2, h1, h2, dt, nm)
    T = hv_symbol(sp.zt0, sp.zt1, sp.zt2, theta, sigma)
    absT = np.abs(T)
    k = np.unravel_index(np.argmax(absT), absT.shape)
    # Lemma inequality on the diffusive eigenvalues
    rhs = 2 * np.sqrt(np.real(sp.z1) * np.real(sp.z2))
    lemma_ok = bool(np.all(np.abs(sp.z0) <= rhs + 1e-12 * (1 + rhs)))
    c0 = jump_constant(nm)
    p = (1 - theta * sp.zt1) * (1 - theta * sp.zt2)
    c1 = float(np.max(np.abs(sp.z0 + sp.z1 + sp.z2) / np.abs(p)))
    c_loose = (3 + 2 * sigma * c1 + c0 * sigma) * c0
    bound = 1 + c_loose * dt
    mx = float(absT[k])
    K = (mx - 1) / (c0 * dt) if c0 > 0 else 0.0
    passed = mx <= (bound if c0 > 0 else 1.0) + 1e-12
    return StabilityReport(mx, (float(P1[k]), float(P2[k])), c0, c1, c_loose, bound, K, lemma_ok,
                           bool(passed), in_window, (P1, P2, absT))
