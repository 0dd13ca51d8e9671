from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bankpide.errors import InvalidSpec, NonpositiveBoundary
from bankpide.model import (D0, D1, D12, assets_from_coords, classify_terminal, compute_boundaries,
                            normalize, settle_arrays, settle_terminal)

from conftest import TABLE1, TABLE2


def fixed_point(a1, a2, L1, L2, L12, L21, tol=1e-14, max_iter=100_000):
    """Clearing vector by monotone iteration from full payment."""
    Lt1, Lt2 = L1 + L12, L2 + L21
    w1 = w2 = 1.0
    for _ in range(max_iter):
        n1 = min(1.0, (a1 + w2 * L21) / Lt1)
        n2 = min(1.0, (a2 + w1 * L12) / Lt2)
        if abs(n1 - w1) < tol and abs(n2 - w2) < tol:
            return n1, n2
        w1, w2 = n1, n2
    return w1, w2


def test_normalize_table1():
    nm = normalize(TABLE1)
    assert nm.Sigma == 1.0
    assert nm.zeta1 == nm.zeta2 == 1.0
    assert nm.varsigma1 == nm.varsigma2 == 1.0
    assert nm.kappa1 == nm.kappa2 == -0.5
    assert nm.xi1 == nm.xi2 == -0.5


def test_normalize_table2_drift():
    nm = normalize(TABLE2)
    assert nm.lam1_tot == pytest.approx(0.8)
    assert nm.xi1 == pytest.approx(-0.1, abs=1e-15)
    assert nm.v == pytest.approx(1.3)


def test_boundaries_table1():
    bs = compute_boundaries(TABLE1)
    assert bs.Lam1_lt == pytest.approx(13.0)
    assert bs.Lam1_eq == pytest.approx(55.0)
    assert bs.mu1_eq == pytest.approx(math.log(55 / 13), abs=1e-12)
    # survivor's shift is (1 - R1 R2) times what the defaulter owed it
    assert bs.shift2_lt == pytest.approx((1 - 0.45 * 0.4) * 10)
    assert bs.shift2_lt == pytest.approx(8.2)
    assert bs.shift1_lt == pytest.approx((1 - 0.45 * 0.4) * 15)
    assert bs.shift1_eq == pytest.approx((1 - 0.45) * 15)
    assert bs.shift2_eq == pytest.approx((1 - 0.4) * 10)


def test_boundaries_no_links_full_recovery():
    sp = TABLE1.replace(R1=1.0, R2=1.0, L12=0.0, L21=0.0)
    bs = compute_boundaries(sp)
    assert bs.Lam1_lt == bs.Lam1_eq and bs.mu1_eq == 0.0 and bs.shift1_lt == 0.0 and bs.shift2_eq == 0.0


def test_nonpositive_boundary():
    with pytest.raises(NonpositiveBoundary):
        compute_boundaries(TABLE1.replace(R1=0.1))


def test_invalid_spec():
    with pytest.raises(InvalidSpec):
        TABLE1.replace(sigma1=0.0)
    with pytest.raises(InvalidSpec):
        TABLE1.replace(rho=1.5)
    with pytest.raises(InvalidSpec):
        TABLE1.replace(lambda1=-0.1)


def test_settlement_examples():
    w = settle_terminal(100, 100, TABLE1)
    assert (w.omega1, w.omega2) == (1.0, 1.0)
    w = settle_terminal(30, 40, TABLE1)
    assert w.omega1 == pytest.approx(0.54310, abs=5e-6)
    assert w.omega2 == pytest.approx(0.53448, abs=5e-6)
    ref = fixed_point(30, 40, 60, 70, 10, 15)
    assert (w.omega1, w.omega2) == pytest.approx(ref, abs=1e-12)
    sp = TABLE1.replace(L12=0.0, L21=0.0)
    assert settle_terminal(30, 5, sp).omega1 == pytest.approx(0.5)


def test_classify_terminal():
    assert classify_terminal(50.0, 50.0, TABLE1) == D12
    assert classify_terminal(0.0, 0.0, TABLE1) == D0
    bs = compute_boundaries(TABLE1)
    # x2 such that A2(T) = 40
    x2 = math.log(40 / bs.Lam2_lt)
    w = settle_terminal(float(assets_from_coords(8.0, x2, TABLE1)[0]), 40.0, TABLE1)
    assert (classify_terminal(8.0, x2, TABLE1) == D1) == (w.omega1 == 1.0 and w.omega2 < 1.0)
    assert classify_terminal(8.0, x2, TABLE1) == D1


liab = st.floats(0.0, 100.0)
assets = st.floats(0.0, 300.0)


@given(a1=assets, a2=assets, L1=st.floats(1.0, 100.0), L2=st.floats(1.0, 100.0), L12=liab, L21=liab)
def test_settlement_matches_fixed_point(a1, a2, L1, L2, L12, L21):
    w1, w2 = settle_arrays(a1, a2, L1, L2, L12, L21)
    r1, r2 = fixed_point(a1, a2, L1, L2, L12, L21)
    assert float(w1) == pytest.approx(r1, abs=1e-10)
    assert float(w2) == pytest.approx(r2, abs=1e-10)
    # the clearing equations hold
    assert min(a1 + float(w2) * L21, L1 + L12) == pytest.approx(float(w1) * (L1 + L12), abs=1e-9)
    assert min(a2 + float(w1) * L12, L2 + L21) == pytest.approx(float(w2) * (L2 + L21), abs=1e-9)


@given(a1=assets, a2=assets, d1=st.floats(0.0, 50.0), d2=st.floats(0.0, 50.0), L12=liab, L21=liab)
def test_settlement_monotone(a1, a2, d1, d2, L12, L21):
    w = settle_arrays(a1, a2, 60.0, 70.0, L12, L21)
    v = settle_arrays(a1 + d1, a2 + d2, 60.0, 70.0, L12, L21)
    assert float(v[0]) >= float(w[0]) - 1e-12
    assert float(v[1]) >= float(w[1]) - 1e-12


@given(a1=assets, a2=assets)
def test_full_payment_iff_covered(a1, a2):
    w1, w2 = (float(x) for x in settle_arrays(a1, a2, 60.0, 70.0, 10.0, 15.0))
    covered = a1 + 15.0 >= 70.0 and a2 + 10.0 >= 85.0
    assert (w1 == 1.0 and w2 == 1.0) == covered


@given(R1=st.floats(0.0, 1.0), R2=st.floats(0.0, 1.0))
def test_boundary_shifts_nonnegative(R1, R2):
    sp = TABLE1.replace(R1=max(R1, 0.3), R2=max(R2, 0.3))
    bs = compute_boundaries(sp)
    assert bs.shift1_lt >= -1e-12 and bs.shift2_lt >= -1e-12
    assert bs.shift1_eq >= -1e-12 and bs.shift2_eq >= -1e-12
    assert bs.Lam1_eq >= bs.Lam1_lt and bs.Lam2_eq >= bs.Lam2_lt


@given(s1=st.floats(0.05, 2.0), s2=st.floats(0.05, 2.0), A1=st.floats(20.0, 500.0), A2=st.floats(20.0, 500.0))
def test_normalize_roundtrip(s1, s2, A1, A2):
    sp = TABLE1.replace(sigma1=s1, sigma2=s2, A1=A1, A2=A2)
    nm = normalize(sp)
    a1, a2 = assets_from_coords(*nm.x0, sp)
    assert float(a1) == pytest.approx(A1, rel=1e-12)
    assert float(a2) == pytest.approx(A2, rel=1e-12)
    assert nm.varsigma1 * nm.varsigma2 == pytest.approx(sp.theta1 * sp.theta2, rel=1e-12)
    assert -1 < nm.kappa1 < 0


def test_swapped_is_involution():
    assert TABLE2.swapped().swapped() == TABLE2
    assert np.isclose(normalize(TABLE2.swapped()).x0[0], normalize(TABLE2).x0[1])
