"""Regenerate the packaged synthetic quote and history files.

Quotes are model prices at the ``section5`` preset parameters.  The history is
a Gaussian return series whose covariance makes the default correlation
estimator target the preset's ``rho`` when it is fed the single-bank fits to
those quotes, as the ``calibrate`` command does; equity closes end at book
equity.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from bankpide import calibration as cal
from bankpide.config import parse_config, preset_path

DATA = Path(__file__).resolve().parents[1] / "src" / "bankpide" / "data"
N_DAYS = 1000
SEED = 20240607


def make_history(cfg, thetas) -> cal.HistoricalSeries:
    sp, sheets = cfg.spec, cfg.sheets
    (s1, l1, v1), (s2, l2, v2) = thetas
    scale = math.sqrt(1.0 + min(l1, l2) / (v1 * v2))
    vol = np.array([s1, s2]) * scale
    cov = np.array([[vol[0] ** 2, sp.rho * vol[0] * vol[1]], [sp.rho * vol[0] * vol[1], vol[1] ** 2]])
    rng = np.random.default_rng(SEED)
    r = rng.multivariate_normal(np.zeros(2), cov / 252.0, size=N_DAYS)
    closes = []
    for k, b in enumerate((sheets.bank1, sheets.bank2)):
        logA = np.concatenate([[0.0], np.cumsum(r[:, k])])
        A = b.A_total * np.exp(logA - logA[-1])
        closes.append(A - b.L_total)
    if min(c.min() for c in closes) <= 0:
        raise SystemExit("equity became nonpositive; change SEED")
    return cal.HistoricalSeries(list(range(N_DAYS + 1)), closes[0], closes[1])


def main() -> None:
    raw = yaml.safe_load(preset_path("section5").read_text())
    raw.pop("calibration")  # the files it names are the outputs
    cfg = parse_config(raw)
    v1, v2 = cfg.varsigma
    sp = cfg.spec
    params = (sp.sigma1, sp.sigma2, sp.lambda1, sp.lambda2, v1, v2)
    quotes = cal.synthetic_quotes(cfg.sheets, params, sp.rho, sp.lambda12, cfg.numerics)
    cal.write_quotes(DATA / "section5_quotes.csv", quotes)
    cc = cfg.calibration
    thetas = [tuple(cal.calibrate_1d(b, quotes, cfg.sheets, numerics=cfg.numerics, n_coarse=cc.n_coarse,
                                     m=cc.m_1d).params) for b in (1, 2)]
    cal.write_history(DATA / "section5_history.csv", make_history(cfg, thetas))


if __name__ == "__main__":
    main()
