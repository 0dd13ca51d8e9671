"""Command-line interface: ``bankpide {price,converge,stability,mc-validate,calibrate}``.

Exit codes: 0 success, 1 computation error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import convergence as conv
from . import mc
from .config import PRESETS, RunConfig, load_config, load_preset
from .errors import BankPideError, ConfigError, NoConvergence
from .model import normalize
from .pricing import QUANTITIES, price
from .stability import stability_sweep

STABILITY_H = (0.2, 0.1, 0.05)
STABILITY_DT = (0.1, 0.01, 0.001)
MC_QUANTITIES = ("joint", "marginal1", "marginal2")
MC_TOLERANCE = 5e-3
# single-bank fit with the intensity pinned (effectively) to zero
NO_JUMP_BANK_BOUNDS = ((0.002, 0.2), (1e-9, 1e-9), (1.0, 1.0))


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else cfg.resolve(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plots(cfg: RunConfig, args) -> bool:
    return bool(args.plots or cfg.plots)


# ---------------------------------------------------------------------------


def cmd_price(cfg: RunConfig, args) -> int:
    q = args.quantity or cfg.quantity
    if q not in QUANTITIES:
        raise ConfigError(f"unknown quantity {q!r}; choose from {', '.join(sorted(QUANTITIES))}")
    out = _out_dir(cfg, args)
    res = price(q, cfg.spec, cfg.numerics, companion=args.no_jumps, coupon=cfg.coupon)
    res.surface.to_csv(out / f"{q}_surface.csv")
    rows = [(q, "jumps", res.value)]
    if res.surface_nojump is not None:
        res.surface_nojump.to_csv(out / f"{q}_surface_nojump.csv")
        res.difference.to_csv(out / f"{q}_difference.csv")
        rows.append((q, "nojumps", res.value_nojump))
    write_csv(out / f"{q}_value.csv", ["quantity", "model", "value"], rows)
    for r in rows:
        print(f"{r[0]} ({r[1]}): {fmt(r[2])}")
    if _plots(cfg, args):
        from . import plots
        x0 = normalize(cfg.spec).x0
        plots.surface_plot(res.surface, out / f"{q}_surface.png", q, x0)
        if res.surface_nojump is not None:
            plots.surface_plot(res.difference, out / f"{q}_difference.png", f"{q}: jumps minus no jumps", x0)
    return 0


def cmd_converge(cfg: RunConfig, args) -> int:
    cc = cfg.converge
    q = args.quantity or cc.quantity
    if q not in QUANTITIES:
        raise ConfigError(f"unknown quantity {q!r}")
    out = _out_dir(cfg, args)
    ladders = []
    axes = ("space", "time") if args.axis == "both" else (args.axis,)
    for axis in axes:
        for flag in (False, True):
            if axis == "space":
                lad = conv.space_ladder(cfg.spec, cfg.numerics, cc.space_levels, cc.space_nT, flag, q)
            else:
                lad = conv.time_ladder(cfg.spec, cfg.numerics, cc.time_levels, cc.time_nX, cc.time_T, flag, q)
            ladders.append(lad)
            print(f"{axis} {'on' if flag else 'off'}: slope l2 {lad.slope_l2:.3f}, linf {lad.slope_linf:.3f}")
    rows = [r for lad in ladders for r in conv.ladder_rows(lad)]
    write_csv(out / "converge_levels.csv", ["axis", "flag", "n", "value", "l2", "linf", "extrapolated"], rows)
    write_csv(out / "converge_slopes.csv", ["axis", "flag", "slope_l2", "slope_linf"],
              [(lad.axis, lad.flag, lad.slope_l2, lad.slope_linf) for lad in ladders])
    if _plots(cfg, args):
        from . import plots
        plots.ladder_plot(ladders, out / "converge.png")
    return 0


def cmd_stability(cfg: RunConfig, args) -> int:
    st = cfg.stability
    nm = normalize(cfg.spec)
    hv = cfg.numerics.hv
    out = _out_dir(cfg, args)
    points = [(h, h, dt) for h in STABILITY_H for dt in STABILITY_DT] if args.sweep else [(st.h1, st.h2, st.dt)]
    rows, ok, last = [], True, None
    for h1, h2, dt in points:
        rep = stability_sweep(nm, h1, h2, dt, hv.theta, hv.sigma_hv, st.n_phi)
        rows.append((h1, h2, dt, rep.max_abs_T, rep.c0, rep.c_loose, rep.bound, rep.K, rep.lemma_ok, rep.passed))
        ok &= rep.passed and rep.lemma_ok
        last = rep
        print(f"h=({h1:g},{h2:g}) dt={dt:g}: max|T|={rep.max_abs_T:.12f} bound={rep.bound:.6f} "
              f"lemma={'ok' if rep.lemma_ok else 'FAIL'} {'pass' if rep.passed else 'FAIL'}")
    write_csv(out / "stability.csv", ["h1", "h2", "dt", "max_abs_T", "c0", "c_loose", "bound", "K", "lemma_ok",
                                      "passed"], rows)
    P1, P2, absT = last.grid
    write_csv(out / "stability_symbol.csv", ["phi1", "phi2", "abs_T"],
              zip(P1.ravel(), P2.ravel(), absT.ravel()))
    if _plots(cfg, args):
        from . import plots
        plots.stability_plot(*last.grid, out / "stability.png")
    print("stability: " + ("pass" if ok else "FAIL"))
    return 0 if ok else 1


def cmd_mc(cfg: RunConfig, args) -> int:
    pc = cfg.mc
    if args.paths is not None:
        pc = replace(pc, n_paths=args.paths)
    pc = replace(pc, seed=cfg.seed)
    out = _out_dir(cfg, args)
    outcome = mc.simulate_cascade(cfg.spec, pc)
    rows, ok = [], True
    for q in MC_QUANTITIES:
        pide = price(q, cfg.spec, cfg.numerics).value
        est = mc.estimate_from(q, cfg.spec, outcome)
        tol = max(3 * est.stderr, MC_TOLERANCE) if est.defined else MC_TOLERANCE
        agree = abs(pide - est.value) <= tol
        ok &= agree
        rows.append((q, pide, est.value, est.stderr, tol, agree))
        print(f"{q}: PIDE {pide:.6f}  MC {est.value:.6f} +- {est.stderr:.2g}  {'ok' if agree else 'MISMATCH'}")
    write_csv(out / "mc_validate.csv", ["quantity", "pide", "mc", "stderr", "tolerance", "agree"], rows)
    if _plots(cfg, args):
        from . import plots
        plots.mc_plot([(r[0], r[1], r[2], r[3]) for r in rows], out / "mc_validate.png")
    return 0 if ok else 1


def _calib_inputs(cfg: RunConfig, args):
    cc = cfg.calibration
    if cfg.sheets is None:
        raise ConfigError("calibration needs the balance-sheet form of 'balance_sheet' (bank1/bank2)")
    qpath = Path(args.quotes) if args.quotes else cfg.resolve(cc.quotes)
    hpath = Path(args.history) if args.history else cfg.resolve(cc.history)
    if qpath is None:
        raise ConfigError("no quote file: set 'calibration.quotes' or pass --quotes")
    for p in (qpath, hpath):
        if p is not None and not p.exists():
            raise ConfigError(f"file {p} does not exist")
    quotes = cal.read_quotes(qpath)
    quotes = cal.MarketQuotes(replace(quotes.bank1, weight=cc.weight), replace(quotes.bank2, weight=cc.weight))
    history = cal.read_history(hpath) if hpath is not None else None
    return quotes, history


def _report(path: Path, sections) -> None:
    lines = []
    for title, items in sections:
        lines.append(f"[{title}]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in items)
        lines.append("")
    path.write_text("\n".join(lines))


def cmd_calibrate(cfg: RunConfig, args) -> int:
    cc = cfg.calibration
    quotes, history = _calib_inputs(cfg, args)
    sheets = cfg.sheets
    out = _out_dir(cfg, args)
    num = cfg.numerics
    fix_jumps = cc.fix_jumps or args.no_jumps
    sections, status = [], 0

    bounds = NO_JUMP_BANK_BOUNDS if fix_jumps else cal.DEFAULT_BANK_BOUNDS
    thetas = []
    for b in (1, 2):
        r = cal.calibrate_1d(b, quotes, sheets, bounds, numerics=num, n_coarse=cc.n_coarse, m=cc.m_1d)
        thetas.append(tuple(float(x) for x in r.params))
        sections.append((f"bank{b}_1d", list(r.as_dict().items())[:3] + [("residual_norm", r.residual_norm),
                                                                          ("iterations", r.iterations)]))
        print(f"bank {b} 1D: " + ", ".join(f"{k}={fmt(v)}" for k, v in zip(cal.BANK_PARAM_NAMES, r.params)))

    rho, lam12, corr = cc.rho, cc.lambda12, None
    if rho is None:
        if history is None:
            raise ConfigError("no history file and no 'calibration.rho': cannot fix the correlation")
        corr = cal.estimate_correlation(history, thetas[0], thetas[1], sheets, cc.formula)
        rho = corr.rho
        lam12 = corr.lambda12 if lam12 is None else lam12
        sections.append(("correlation", [("rho", corr.rho), ("rho_ci_low", corr.rho_ci[0]),
                                         ("rho_ci_high", corr.rho_ci[1]), ("lambda12", corr.lambda12),
                                         ("lambda12_ci_low", corr.lambda12_ci[0]),
                                         ("lambda12_ci_high", corr.lambda12_ci[1]), ("formula", cc.formula)]))
        print(f"correlation: rho={rho:.4f} lambda12={lam12:.5f}")
    lam12 = 0.0 if lam12 is None else lam12

    if cc.start is not None:
        start = cc.start
    else:
        start = cal.joint_start(thetas[0], thetas[1], lam12)
    jnum = num.replace(m1=cc.m1, m2=cc.m2)
    try:
        res = cal.calibrate_joint(quotes, sheets, start, rho, lam12, numerics=jnum, fix_jumps=fix_jumps,
                                  max_iter=cc.max_iter, m=cc.m_1d)
    except NoConvergence as e:
        res = e.result
        status = 1
        print(f"warning: {e}", file=sys.stderr)
    res.rho_ci = corr.rho_ci if corr else None
    res.lambda12_ci = corr.lambda12_ci if corr else None
    sections.append(("joint", list(res.as_dict().items())))
    write_csv(out / "calibration_trace.csv", ["iteration", "cost", *cal.PARAM_NAMES],
              [(i, c, *p) for i, c, p in res.trace])

    spec = sheets.spec(res.params, res.rho, res.lambda12)
    surv = [(q, price(q, spec, num).value) for q in MC_QUANTITIES]
    sections.append(("survival", surv))
    _report(out / "calibration.txt", sections)
    write_csv(out / "calibration.csv", ["name", "value"],
              [(k, v) for k, v in res.as_dict().items()] + surv)
    for k, v in res.as_dict().items():
        print(f"{k} = {fmt(v)}")
    for q, v in surv:
        print(f"{q} = {fmt(v)}")
    if _plots(cfg, args) and res.trace:
        from . import plots
        plots.trace_plot(res.trace, out / "calibration_trace.png")
    return status


COMMANDS = {"price": cmd_price, "converge": cmd_converge, "stability": cmd_stability, "mc-validate": cmd_mc,
            "calibrate": cmd_calibrate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bankpide", description="Two-bank structural credit PIDE engine.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML run configuration")
    src.add_argument("--preset", choices=PRESETS, help="packaged configuration")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--plots", action="store_true", help="also render PNG figures")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("price", "converge"):
            sp.add_argument("--quantity", help="priced quantity")
        if name in ("price", "calibrate", "mc-validate", "stability", "converge"):
            sp.add_argument("--no-jumps", action="store_true",
                            help="price: add a no-jump companion; calibrate: pin intensities to zero; "
                                 "others: drop jumps from the model")
        if name == "converge":
            sp.add_argument("--axis", choices=("space", "time", "both"), default="both")
        if name == "stability":
            sp.add_argument("--sweep", action="store_true", help="sweep h in {0.2,0.1,0.05}, dt in {0.1,0.01,0.001}")
        if name == "mc-validate":
            sp.add_argument("--paths", type=int, help="number of paths (overrides mc.n_paths)")
        if name == "calibrate":
            sp.add_argument("--quotes", help="quote CSV (overrides calibration.quotes)")
            sp.add_argument("--history", help="history CSV (overrides calibration.history)")
    return p


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, mc=replace(cfg.mc, seed=args.seed))
    if getattr(args, "no_jumps", False) and args.command in ("mc-validate", "stability", "converge"):
        cfg = replace(cfg, spec=cfg.spec.replace(lambda1=0.0, lambda2=0.0, lambda12=0.0))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        cfg = _apply_flags(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (BankPideError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
