"""Two-bank structural credit model with mutual liabilities and jumps.

Finite-difference PIDE solver (Hundsdorfer-Verwer ADI with exponential-jump
recursions), pricing of survival probabilities and credit contracts, Fourier
stability analysis, a Monte Carlo oracle and market calibration.
"""
from __future__ import annotations

from .model import ModelSpec, compute_boundaries, normalize, settle_terminal
from .pricing import (cds_par_spread, cva_unilateral, dva_unilateral, ftd_par_spread, joint_survival,
                      marginal_survival, price)
from .solver import HvParams, Numerics

__version__ = "0.1.0"

__all__ = ["ModelSpec", "Numerics", "HvParams", "compute_boundaries", "normalize", "settle_terminal",
           "joint_survival", "marginal_survival", "cds_par_spread", "ftd_par_spread", "cva_unilateral",
           "dva_unilateral", "price"]
