"""Run configuration: YAML with fixed sections and strict key checking.

Sections: ``balance_sheet``, ``diffusion``, ``jumps``, ``contract``,
``numerics``, ``mc``, ``stability``, ``converge``, ``calibration``, ``output``
and a top-level ``seed``.  Unknown keys raise :class:`ConfigError` naming the
key.  See ``docs/config.md`` for every key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from . import operators as ops
from .calibration import BalanceSheets, BankSheet, PER_BANK, SYSTEM, PAPER_FORMULA, MODEL_FORMULA
from .errors import ConfigError, InvalidSpec
from .mc import PathConfig
from .model import ModelSpec
from .solver import HvParams, Numerics

SECTIONS = {"balance_sheet", "diffusion", "jumps", "contract", "numerics", "mc", "stability", "converge",
            "calibration", "output", "seed"}
EXPLICIT_SHEET = {"A1", "A2", "L1", "L2", "L12", "L21", "R1", "R2"}
SHEET_FORM = {"bank1", "bank2", "mutual_fraction", "rule", "reduce_external"}
BANK_KEYS = {"E", "L_total", "A_total", "R"}
DIFFUSION = {"sigma1", "sigma2", "rho"}
JUMPS = {"theta1", "theta2", "varsigma1", "varsigma2", "lambda1", "lambda2", "lambda12"}
CONTRACT = {"T", "coupon", "quantity"}
NUMERICS = {"m1", "m2", "x_max", "beta", "cluster", "dt", "N", "theta", "sigma_hv", "smoothing", "sqrt_time",
            "jump_variant", "jump_mode", "m_1d", "rannacher", "picard"}
MC = {"n_paths", "n_steps", "bridge", "n_batches"}
STABILITY = {"h1", "h2", "dt", "n_phi"}
CONVERGE = {"space_levels", "time_levels", "space_nT", "time_nX", "time_T", "quantity"}
CALIBRATION = {"quotes", "history", "formula", "weight", "m_1d", "n_coarse", "fix_jumps", "max_iter", "m1",
               "m2", "start", "rho", "lambda12"}
OUTPUT = {"dir", "plots"}


@dataclass
class StabilityConfig:
    h1: float = 0.1
    h2: float = 0.1
    dt: float = 0.01
    n_phi: int = 257


@dataclass
class ConvergeConfig:
    space_levels: tuple = (50, 100, 200, 400)
    time_levels: tuple = (25, 50, 100, 200)
    space_nT: int = 1000
    time_nX: int = 800
    time_T: float = 5.0
    quantity: str = "joint"


@dataclass
class CalibrationConfig:
    quotes: Optional[str] = None
    history: Optional[str] = None
    formula: str = PAPER_FORMULA
    weight: float = 1e4
    m_1d: int = 400
    n_coarse: int = 8
    fix_jumps: bool = False
    max_iter: int = 50
    m1: int = 80
    m2: int = 80
    start: Optional[tuple] = None
    rho: Optional[float] = None
    lambda12: Optional[float] = None


@dataclass
class RunConfig:
    spec: ModelSpec
    numerics: Numerics = field(default_factory=Numerics)
    coupon: float = 0.01
    quantity: str = "joint"
    sheets: Optional[BalanceSheets] = None
    varsigma: Optional[tuple] = None  # jump rates given in normalized form
    mc: PathConfig = field(default_factory=PathConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    converge: ConvergeConfig = field(default_factory=ConvergeConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    out_dir: str = "out"
    plots: bool = False
    seed: int = 12345
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _check_keys(section: str, d, allowed) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key '{section}.{k}'")
    return d


def _num(section: str, d: dict, key: str, default=None, kind=float, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"missing key '{section}.{key}'")
        return default
    try:
        v = kind(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"'{section}.{key}' must be {kind.__name__}, got {d[key]!r}") from None
    if kind is float and not math.isfinite(v):
        raise ConfigError(f"'{section}.{key}' must be finite")
    return v


def _bool(section: str, d: dict, key: str, default: bool) -> bool:
    if key not in d:
        return default
    if not isinstance(d[key], bool):
        raise ConfigError(f"'{section}.{key}' must be true or false")
    return d[key]


def _sheets(bs: dict, T: float) -> BalanceSheets:
    banks = []
    for name in ("bank1", "bank2"):
        b = _check_keys(f"balance_sheet.{name}", bs.get(name), BANK_KEYS)
        sec = f"balance_sheet.{name}"
        banks.append(BankSheet(E=_num(sec, b, "E", required=True), L_total=_num(sec, b, "L_total", required=True),
                               A_total=_num(sec, b, "A_total", required=True), R=_num(sec, b, "R", required=True)))
    rule = bs.get("rule", PER_BANK)
    if rule not in (PER_BANK, SYSTEM):
        raise ConfigError(f"'balance_sheet.rule' must be {PER_BANK!r} or {SYSTEM!r}")
    return BalanceSheets(banks[0], banks[1], _num("balance_sheet", bs, "mutual_fraction", 0.05),
                         rule, _bool("balance_sheet", bs, "reduce_external", True), T)


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a parsed YAML mapping and build a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    for k in raw:
        if k not in SECTIONS:
            raise ConfigError(f"unknown key '{k}'")
    bs = raw.get("balance_sheet")
    if not isinstance(bs, dict):
        raise ConfigError("missing section 'balance_sheet'")
    sheet_form = "bank1" in bs or "bank2" in bs
    _check_keys("balance_sheet", bs, SHEET_FORM if sheet_form else EXPLICIT_SHEET)
    dif = _check_keys("diffusion", raw.get("diffusion"), DIFFUSION)
    jmp = _check_keys("jumps", raw.get("jumps"), JUMPS)
    con = _check_keys("contract", raw.get("contract"), CONTRACT)
    T = _num("contract", con, "T", 1.0)
    s1 = _num("diffusion", dif, "sigma1", required=True)
    s2 = _num("diffusion", dif, "sigma2", required=True)
    rho = _num("diffusion", dif, "rho", 0.0)
    lam = tuple(_num("jumps", jmp, k, 0.0) for k in ("lambda1", "lambda2", "lambda12"))
    has_theta = "theta1" in jmp or "theta2" in jmp
    has_vs = "varsigma1" in jmp or "varsigma2" in jmp
    if has_theta and has_vs:
        raise ConfigError("give either jumps.theta1/theta2 or jumps.varsigma1/varsigma2, not both")
    varsigma = None
    if has_vs:
        varsigma = (_num("jumps", jmp, "varsigma1", 1.0), _num("jumps", jmp, "varsigma2", 1.0))
        if s1 <= 0 or s2 <= 0:
            raise ConfigError("diffusion volatilities must be positive")
        Sigma = math.sqrt(s1 * s2)
        th = (varsigma[0] * Sigma / s1, varsigma[1] * Sigma / s2)
    else:
        th = (_num("jumps", jmp, "theta1", 1.0), _num("jumps", jmp, "theta2", 1.0))
    sheets = None
    try:
        if sheet_form:
            sheets = _sheets(bs, T)
            v = varsigma or (th[0] * s1 / math.sqrt(s1 * s2), th[1] * s2 / math.sqrt(s1 * s2))
            spec = sheets.spec((s1, s2, lam[0], lam[1], v[0], v[1]), rho, lam[2])
        else:
            vals = {k: _num("balance_sheet", bs, k, required=True) for k in sorted(EXPLICIT_SHEET)}
            spec = ModelSpec(**vals, sigma1=s1, sigma2=s2, rho=rho, theta1=th[0], theta2=th[1],
                             lambda1=lam[0], lambda2=lam[1], lambda12=lam[2], T=T)
    except InvalidSpec as e:
        raise ConfigError(str(e)) from None

    nu = _check_keys("numerics", raw.get("numerics"), NUMERICS)
    d = Numerics()
    variant = nu.get("jump_variant", d.jump_variant)
    if variant not in (ops.ADAMS_MOULTON, ops.EXACT_EXP):
        raise ConfigError(f"'numerics.jump_variant' must be {ops.ADAMS_MOULTON!r} or {ops.EXACT_EXP!r}")
    mode = nu.get("jump_mode", d.jump_mode)
    if mode not in (ops.ZERO_INIT, ops.EDGE_INIT):
        raise ConfigError(f"'numerics.jump_mode' must be {ops.ZERO_INIT!r} or {ops.EDGE_INIT!r}")
    hv = HvParams(_num("numerics", nu, "theta", 0.75), _num("numerics", nu, "sigma_hv", 0.5))
    numerics = Numerics(
        m1=_num("numerics", nu, "m1", d.m1, int), m2=_num("numerics", nu, "m2", d.m2, int),
        x_max=_num("numerics", nu, "x_max", d.x_max), beta=_num("numerics", nu, "beta", None),
        cluster=_bool("numerics", nu, "cluster", d.cluster), dt=_num("numerics", nu, "dt", d.dt),
        N=_num("numerics", nu, "N", None, int), hv=hv,
        smoothing=_bool("numerics", nu, "smoothing", d.smoothing),
        sqrt_time=_bool("numerics", nu, "sqrt_time", d.sqrt_time), jump_variant=variant, jump_mode=mode,
        m_1d=_num("numerics", nu, "m_1d", None, int), rannacher=_num("numerics", nu, "rannacher", 4, int),
        picard=_num("numerics", nu, "picard", 2, int),
    )
    if numerics.m1 < 16 or numerics.m2 < 16:
        raise ConfigError("'numerics.m1' and 'numerics.m2' must be at least 16")
    if numerics.x_max <= 0 or numerics.dt <= 0 or (numerics.N is not None and numerics.N < 1):
        raise ConfigError("'numerics.x_max', 'numerics.dt' and 'numerics.N' must be positive")
    if not hv.in_window():
        raise ConfigError(f"'numerics.theta'/'numerics.sigma_hv' outside the stability window")
    nm_x0 = _x0(spec)
    if nm_x0 is not None and max(nm_x0) >= numerics.x_max:
        raise ConfigError(f"initial point {nm_x0} lies outside the domain; increase 'numerics.x_max'")

    seed = _num("seed", {"seed": raw.get("seed")}, "seed", 12345, int)
    mcd = _check_keys("mc", raw.get("mc"), MC)
    try:
        mc = PathConfig(n_paths=_num("mc", mcd, "n_paths", 100_000, int), n_steps=_num("mc", mcd, "n_steps", 500, int),
                        seed=seed, bridge=_bool("mc", mcd, "bridge", True),
                        n_batches=_num("mc", mcd, "n_batches", 1, int))
    except ValueError as e:
        raise ConfigError(f"mc: {e}") from None
    st = _check_keys("stability", raw.get("stability"), STABILITY)
    stab = StabilityConfig(_num("stability", st, "h1", 0.1), _num("stability", st, "h2", 0.1),
                           _num("stability", st, "dt", 0.01), _num("stability", st, "n_phi", 257, int))
    cv = _check_keys("converge", raw.get("converge"), CONVERGE)
    dc = ConvergeConfig()
    conv = ConvergeConfig(
        tuple(int(x) for x in cv.get("space_levels", dc.space_levels)),
        tuple(int(x) for x in cv.get("time_levels", dc.time_levels)),
        _num("converge", cv, "space_nT", dc.space_nT, int), _num("converge", cv, "time_nX", dc.time_nX, int),
        _num("converge", cv, "time_T", dc.time_T), cv.get("quantity", dc.quantity))
    if len(conv.space_levels) < 3 or len(conv.time_levels) < 3:
        raise ConfigError("'converge' ladders need at least three levels")
    ca = _check_keys("calibration", raw.get("calibration"), CALIBRATION)
    dca = CalibrationConfig()
    formula = ca.get("formula", dca.formula)
    if formula not in (PAPER_FORMULA, MODEL_FORMULA):
        raise ConfigError(f"'calibration.formula' must be {PAPER_FORMULA!r} or {MODEL_FORMULA!r}")
    start = ca.get("start")
    if start is not None and (not isinstance(start, list) or len(start) != 6):
        raise ConfigError("'calibration.start' must list six numbers")
    cal = CalibrationConfig(
        ca.get("quotes"), ca.get("history"), formula, _num("calibration", ca, "weight", dca.weight),
        _num("calibration", ca, "m_1d", dca.m_1d, int), _num("calibration", ca, "n_coarse", dca.n_coarse, int),
        _bool("calibration", ca, "fix_jumps", dca.fix_jumps), _num("calibration", ca, "max_iter", dca.max_iter, int),
        _num("calibration", ca, "m1", dca.m1, int), _num("calibration", ca, "m2", dca.m2, int),
        tuple(float(x) for x in start) if start is not None else None,
        _num("calibration", ca, "rho", None), _num("calibration", ca, "lambda12", None))
    out = _check_keys("output", raw.get("output"), OUTPUT)
    quantity = con.get("quantity", "joint")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    cfg = RunConfig(spec=spec, numerics=numerics, coupon=_num("contract", con, "coupon", 0.01), quantity=quantity,
                    sheets=sheets, varsigma=varsigma, mc=mc, stability=stab, converge=conv, calibration=cal,
                    out_dir=str(out.get("dir", "out")), plots=_bool("output", out, "plots", False), seed=seed,
                    base_dir=base)
    for key in ("quotes", "history"):
        p = cfg.resolve(getattr(cal, key))
        if p is not None and not p.exists():
            raise ConfigError(f"'calibration.{key}' file {p} does not exist")
    return cfg


def _x0(spec: ModelSpec):
    from .model import normalize
    try:
        return normalize(spec).x0
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"configuration file {p} does not exist")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {p}: {e}") from None
    return parse_config(raw, p.parent)


PRESETS = ("table1", "table2", "section5", "section5-nojump")


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(str(resources.files("bankpide") / "data" / f"{name}.yaml"))


def load_preset(name: str) -> RunConfig:
    return load_config(preset_path(name))
