from __future__ import annotations

import csv

import pytest
import yaml

from bankpide.cli import main
from bankpide.config import PRESETS, load_config, load_preset, parse_config
from bankpide.errors import ConfigError

from conftest import TABLE2

SMALL = {"m1": 30, "m2": 30, "x_max": 10.0, "dt": 0.05, "theta": 0.75, "sigma_hv": 0.5}


def small_config(tmp_path, **extra):
    raw = yaml.safe_load(open(load_preset.__globals__["preset_path"]("table2")))
    raw["numerics"] = dict(SMALL)
    raw.update(extra)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert cfg.spec.T > 0


def test_table2_preset_matches_reference():
    assert load_preset("table2").spec == TABLE2


def test_unknown_key_is_named():
    raw = yaml.safe_load(open(load_preset.__globals__["preset_path"]("table1")))
    raw["numerics"]["gird"] = 3
    with pytest.raises(ConfigError, match="gird"):
        parse_config(raw)


def test_invalid_values_rejected():
    raw = yaml.safe_load(open(load_preset.__globals__["preset_path"]("table1")))
    raw["diffusion"]["rho"] = 1.5
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_cli_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("balance_sheet: {A1: 100, bogus: 1}\n")
    assert main(["price", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cli_price_outputs(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert main(["price", "--config", str(cfg), "--out", str(out), "--no-jumps"]) == 0
    for name in ("joint_surface.csv", "joint_surface_nojump.csv", "joint_difference.csv", "joint_value.csv"):
        assert (out / name).exists()
    rows = read_csv(out / "joint_value.csv")
    assert rows[0] == ["quantity", "model", "value"]
    vals = {r[1]: float(r[2]) for r in rows[1:]}
    assert 0 < vals["jumps"] < vals["nojumps"] < 1
    surf = read_csv(out / "joint_surface.csv")
    assert surf[0] == ["x1", "x2", "value"] and len(surf) == 31 * 31 + 1


def test_cli_outputs_are_byte_identical(tmp_path):
    cfg = small_config(tmp_path)
    for d in ("a", "b"):
        assert main(["price", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        assert main(["mc-validate", "--config", str(cfg), "--out", str(tmp_path / d), "--paths", "2000"]) in (0, 1)
    for name in ("joint_surface.csv", "joint_value.csv", "mc_validate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_stability(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["stability", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "stability.csv")
    assert rows[0][:4] == ["h1", "h2", "dt", "max_abs_T"] and rows[1][-1] == "1"
    assert read_csv(tmp_path / "o" / "stability_symbol.csv")[0] == ["phi1", "phi2", "abs_T"]


def test_cli_converge_writes_slopes(tmp_path):
    raw_cfg = small_config(tmp_path, converge={"space_levels": [20, 40, 80], "space_nT": 20})
    assert main(["converge", "--config", str(raw_cfg), "--out", str(tmp_path / "o"), "--axis", "space"]) == 0
    rows = read_csv(tmp_path / "o" / "converge_slopes.csv")
    assert rows[0] == ["axis", "flag", "slope_l2", "slope_linf"] and len(rows) == 3


def test_cli_plots_flag(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["price", "--config", str(cfg), "--out", str(tmp_path / "o"), "--plots"]) == 0
    assert list((tmp_path / "o").glob("*.png"))


def test_load_config_resolves_relative_paths(tmp_path):
    cfg = load_config(small_config(tmp_path))
    assert cfg.base_dir == tmp_path
    assert cfg.resolve("q.csv") == tmp_path / "q.csv"
