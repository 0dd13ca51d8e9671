from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bankpide.calibration import (BalanceSheets, BankModel1D, BankQuotes, HistoricalSeries, MarketQuotes,
                                  calibrate_1d, calibrate_joint, default_strikes, estimate_correlation,
                                  projected_gauss_newton, read_history, read_quotes, synthetic_bank_quotes,
                                  synthetic_quotes, write_history, write_quotes)
from bankpide.config import load_preset
from bankpide.errors import ConfigError
from bankpide.solver import Numerics

from conftest import TABLE1

BANK1 = (0.0122, 0.0950, 0.3958)
JOINT = (0.0122, 0.0160, 0.0950, 0.0148, 0.3958, 0.0505)


@pytest.fixture(scope="module")
def sheets() -> BalanceSheets:
    return load_preset("section5").sheets


def test_put_limits_and_monotonicity():
    bm = BankModel1D(TABLE1.replace(sigma1=0.3, sigma2=0.3, lambda1=0.2, theta1=3.0), 1, Numerics(), m=200)
    E = TABLE1.A1 + TABLE1.L21 - TABLE1.L1 - TABLE1.L12
    ks = np.linspace(0.2, 1.5, 6) * E
    puts = [bm.put(k) for k in ks]
    assert np.all(np.diff(puts) > 0)
    assert 0 <= bm.put(1e-6) <= 1e-6 and bm.put(1e-4) < bm.put(1e-2)
    hi = BankModel1D(TABLE1.replace(sigma1=0.4, sigma2=0.4, lambda1=0.2, theta1=3.0), 1, Numerics(), m=200)
    assert hi.put(E) > bm.put(E)


def test_put_vanishes_without_risk():
    sp = TABLE1.replace(sigma1=1e-3, sigma2=1e-3)
    bm = BankModel1D(sp, 1, Numerics(), m=200)
    E = sp.A1 + sp.L21 - sp.L1 - sp.L12
    assert bm.put(0.5 * E) < 1e-10


def test_put_rejects_nonpositive_strike():
    with pytest.raises(ValueError):
        BankModel1D(TABLE1, 1, Numerics(), m=50).put(0.0)


def test_single_bank_round_trip(sheets):
    q = synthetic_bank_quotes(sheets, 1, BANK1)
    res = calibrate_1d(1, q, sheets)
    err = np.max(np.abs(res.params - BANK1)) / max(BANK1)
    assert err < 1e-2


def test_single_bank_round_trip_without_jumps(sheets):
    q = synthetic_bank_quotes(sheets, 2, (0.03, 1e-6, 1.0))
    res = calibrate_1d(2, q, sheets)
    assert res.params[1] < 1e-3
    assert res.params[0] == pytest.approx(0.03, rel=1e-2)


def test_objective_never_increases():
    fun = lambda z: np.array([z[0] - 1.0, 10 * (z[1] - z[0] ** 2)])
    fit = projected_gauss_newton(fun, np.array([-1.0, 2.0]), np.array([-5.0, -5.0]), np.array([5.0, 5.0]))
    costs = [c for _, c, _ in fit.trace]
    assert np.all(np.diff(costs) <= 0)
    assert fit.converged and np.allclose(fit.z, [1.0, 1.0], atol=1e-6)


def test_joint_fixed_point(sheets):
    num = Numerics(m1=40, m2=40)
    q = synthetic_quotes(sheets, JOINT, 0.5, 0.0075, num, m=200)
    res = calibrate_joint(q, sheets, JOINT, 0.5, 0.0075, numerics=num, m=200)
    assert res.iterations <= 2
    assert res.residual_norm < 1e-10


def _history(rho, n=1000, seed=0, cov_scale=1.0):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n) * 0.01 * cov_scale
    c1 = 10 * np.exp(np.concatenate([[0.0], np.cumsum(z[:, 0])]))
    c2 = 20 * np.exp(np.concatenate([[0.0], np.cumsum(z[:, 1])]))
    return HistoricalSeries(list(range(n + 1)), c1, c2)


def test_zero_covariance_gives_zero_correlation():
    s = _history(0.0)
    r1, r2 = s.asset_log_returns()
    # replace the second series so its returns are exactly uncorrelated with the first
    d1 = r1 - r1.mean()
    v = np.ones_like(d1) - (d1 @ np.ones_like(d1)) / (d1 @ d1) * d1
    c2 = 5 * np.exp(np.concatenate([[0.0], np.cumsum(1e-3 * v)]))
    est = estimate_correlation(HistoricalSeries(s.dates, s.close1, c2), (0.01, 0.1, 1.0), (0.01, 0.2, 1.0))
    assert est.rho == pytest.approx(0.0, abs=1e-12) and est.lambda12 == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=20)
@given(scale=st.floats(0.01, 100.0))
def test_correlation_scale_invariant(scale, sheets):
    s = _history(0.4, seed=2)
    a = estimate_correlation(s, (0.1, 0.1, 1.0), (0.1, 0.1, 1.0), sheets)
    t = HistoricalSeries(s.dates, s.close1 * scale, s.close2 * scale)
    b = estimate_correlation(t, (0.1, 0.1, 1.0), (0.1, 0.1, 1.0), sheets)
    assert b.rho == pytest.approx(a.rho, rel=1e-9)


def test_correlation_formulas():
    s = _history(0.3, seed=4)
    p = estimate_correlation(s, (0.1, 0.1, 2.0), (0.1, 0.3, 2.0), formula="paper")
    m = estimate_correlation(s, (0.1, 0.1, 2.0), (0.1, 0.3, 2.0), formula="model")
    assert p.cov == m.cov
    assert p.rho * 0.01 * (1 + 0.1 / 4) == pytest.approx(m.rho * (0.01 + 0.1 / 4), rel=1e-12)
    assert p.lambda12 == pytest.approx(p.rho * 0.1)
    with pytest.raises(ValueError):
        estimate_correlation(s, (0.1, 0.1, 2.0), (0.1, 0.3, 2.0), formula="other")


def test_history_validation():
    with pytest.raises(ConfigError):
        HistoricalSeries(list(range(10)), np.ones(10), np.ones(10))
    with pytest.raises(ConfigError):
        HistoricalSeries(list(range(40)), np.ones(40), np.ones(39))


def test_quotes_validation():
    assert default_strikes(10.0) == pytest.approx((11.0, 10.0, 9.0))
    with pytest.raises(ConfigError):
        BankQuotes(10.0, 0.01, (1.0, 2.0))
    with pytest.raises(ConfigError):
        BankQuotes(10.0, -0.01, (1.0, 2.0, 3.0))


def test_csv_round_trip(tmp_path):
    q = MarketQuotes(BankQuotes(6.02, 0.06, (0.7, 0.6, 0.5)), BankQuotes(6.23, 0.02, (0.3, 0.2, 0.1)))
    write_quotes(tmp_path / "q.csv", q)
    assert read_quotes(tmp_path / "q.csv") == q
    s = _history(0.2, n=50)
    write_history(tmp_path / "h.csv", s)
    t = read_history(tmp_path / "h.csv")
    assert np.allclose(t.close1, s.close1, rtol=1e-10) and np.allclose(t.close2, s.close2, rtol=1e-10)
