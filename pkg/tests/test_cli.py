"""Command-line interface: exit codes, config handling and output formats."""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from navier_bn import asymptotics, make_dims
from navier_bn.cli import (EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, ExperimentConfig, UsageError,
                           dumps, main, parse_config, read_sweep_csv, to_csv)

GOLDEN = Path(__file__).parent / "golden"


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_dim_out_of_range_is_usage_error(capsys):
    assert main(["constants", "--dim", "7", "--json"]) == EXIT_OK
    assert main(["sweep", "--dim", "7"]) == EXIT_USAGE
    assert "dim" in capsys.readouterr().err
    assert main(["constants", "--dim", "40"]) == EXIT_USAGE


def test_bad_flag_is_usage_error(capsys):
    assert main(["constants", "--no-such-flag"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_unwritable_output_leaves_no_file(tmp_path, capsys):
    target = tmp_path / "missing_dir" / "out.json"
    assert main(["constants", "--dim", "9", "--json", "--out", str(target)]) == EXIT_USAGE
    assert not target.exists()
    assert "cannot write" in capsys.readouterr().err


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0,
                    reason="root ignores directory permissions")
def test_readonly_directory_leaves_no_partial_file(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    try:
        assert main(["constants", "--dim", "9", "--json", "--out", str(d / "x.json")]) \
            == EXIT_USAGE
        assert list(d.iterdir()) == []
    finally:
        d.chmod(0o700)


def test_n8_minimize_reports_nonconvergence(capsys):
    assert main(["minimize", "--dim", "8", "--eps", "0.1"]) == EXIT_NONCONVERGED
    assert "lambda_max" in capsys.readouterr().err


@pytest.mark.parametrize("body, key", [
    ("dim = 'nine'\n", "dim"),
    ("rho = -1.0\n", "rho"),
    ("potential = 'wave:3'\n", "potential"),
    ("eps_list = [0.1, 0.2]\n", "eps_list"),
    ("eps_list = [0.1, 0.1]\n", "eps_list"),
    ("eps_list = [0.1, -0.01]\n", "eps_list"),
    ("mode = 'partial'\n", "mode"),
    ("workers = 0\n", "workers"),
    ("[grid]\npoints = 10\n", "grid.points"),
    ("[output]\nformat = 'xml'\n", "output.format"),
])
def test_config_errors_name_the_key(tmp_path, body, key):
    with pytest.raises(UsageError, match=key.replace(".", r"\.")):
        parse_config(_write(tmp_path, body))


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(UsageError, match="colour"):
        parse_config(_write(tmp_path, "colour = 'red'\n"))
    with pytest.raises(UsageError, match=r"\[grid\]"):
        parse_config(_write(tmp_path, "[grid]\nspacing = 2\n"))


def test_malformed_and_missing_config(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        parse_config(str(tmp_path / "nope.toml"))
    with pytest.raises(UsageError):
        parse_config(_write(tmp_path, "dim = \n"))


def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, "eps_list = [0.01]\n"))
    assert cfg == ExperimentConfig(eps_list=(0.01,))
    assert (cfg.dim, cfg.rho, cfg.grid_points, cfg.mode, cfg.potential) == \
        (9, 1.0, 3000, "full", "const:-1")


def test_flags_override_config(tmp_path):
    path = _write(tmp_path, "dim = 10\nrho = 2.0\n")
    cfg = parse_config(path, {"dim": 12, "rho": None})
    assert cfg.dim == 12 and cfg.rho == 2.0


def test_constants_json_fields(capsys):
    assert main(["constants", "--dim", "8", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    d = make_dims(8)
    assert out["n"] == 8
    assert out["sobolev_S2"] == d.sobolev_S2
    assert out["b_n"] == d.omega_n
    assert out["frak_C_n"] is None and out["frak_D_n"] is None
    assert out["c0_distributional"] == 2 * out["c0_convention"]
    assert out["report"]["passed"] is True


def test_constants_csv_header_matches_golden(capsys):
    assert main(["constants", "--dim", "9", "--csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert "\n".join(lines[:2]) + "\n" == (GOLDEN / "constants_header.csv").read_text()


def test_sweep_csv_header_and_fit_roundtrip(tmp_path, capsys):
    cfg = _write(tmp_path, "dim = 8\npotential = 'const:-1'\nmode = 'bubble_only'\n"
                           "eps_list = [0.2, 0.15, 0.11, 0.085, 0.065, 0.05]\n")
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", cfg, "--workers", "1", "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "\n".join(text.splitlines()[:2]) + "\n" == \
        (GOLDEN / "sweep_header.csv").read_text()
    assert "\r" not in text
    recs = read_sweep_csv(str(out))
    assert len(recs) == 6 and all(r.converged for r in recs)

    fit_out = tmp_path / "fit.json"
    assert main(["fit", "--config", cfg, "--records", str(out), "--json",
                 "--out", str(fit_out)]) == EXIT_OK
    fit = json.loads(fit_out.read_text())
    assert fit["gap_law"]["relative_error"] < 0.15


def test_fit_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    assert main(["fit", "--dim", "9", "--records", str(p)]) == EXIT_USAGE
    assert main(["fit", "--dim", "9", "--records", str(tmp_path / "none.csv")]) == EXIT_USAGE


def test_json_nonfinite_roundtrip():
    obj = {"a": math.nan, "b": math.inf, "c": -math.inf, "d": [0.1, 1e-300], "e": None}
    back = json.loads(dumps(obj))
    assert math.isnan(back["a"]) and back["b"] == math.inf and back["c"] == -math.inf
    assert back["d"] == [0.1, 1e-300] and back["e"] is None


def test_csv_float_roundtrip():
    x = 0.1 + 0.2
    text = to_csv("t", [{"x": x, "y": math.nan, "flag": True}])
    header, row = text.splitlines()[1:]
    assert header == "x,y,flag"
    vals = row.split(",")
    assert float(vals[0]) == x and vals[1] == "NaN" and vals[2] == "true"


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"c{i}.json"
        assert main(["lambda-star", "--dim", "9", "--eps", "0.01", "--json",
                     "--out", str(p)]) == EXIT_OK
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("flag, env, conf, expected", [
    ("2", "3", 4, 2),
    (None, "3", 4, 3),
    (None, None, 4, 4),
])
def test_workers_precedence(tmp_path, monkeypatch, flag, env, conf, expected):
    seen = {}

    def fake_sweep(*args, **kw):
        seen["workers"] = kw["workers"]
        return []

    monkeypatch.setattr(asymptotics, "sweep", fake_sweep)
    if env is None:
        monkeypatch.delenv("NAVIER_BN_WORKERS", raising=False)
    else:
        monkeypatch.setenv("NAVIER_BN_WORKERS", env)
    cfg = _write(tmp_path, f"eps_list = [0.01]\nworkers = {conf}\n")
    argv = ["sweep", "--config", cfg, "--out", str(tmp_path / "o.csv")]
    if flag is not None:
        argv += ["--workers", flag]
    assert main(argv) == EXIT_OK
    assert seen["workers"] == expected


def test_bad_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NAVIER_BN_WORKERS", "many")
    cfg = _write(tmp_path, "eps_list = [0.01]\n")
    assert main(["sweep", "--config", cfg]) == EXIT_USAGE


def test_robin_and_expand_commands(capsys):
    assert main(["robin", "--dim", "9", "--scan", "4", "--csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "t,R,method" and len(lines) == 6
    assert main(["robin", "--dim", "9", "--t", "1.5"]) == EXIT_USAGE
    capsys.readouterr()
    assert main(["expand", "--dim", "9", "--eps", "1", "--lambdas", "25,50",
                 "--points", "1500"]) == EXIT_OK
    assert "deflection" in capsys.readouterr().out


def test_lambda_star_n8_log_form(capsys):
    assert main(["lambda-star", "--dim", "8", "--eps", "0.1", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert "lambda0" not in out
    assert out["log_lambda"] == pytest.approx(720, rel=0.01)


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "navier_bn.cli", "constants", "--dim", "9",
                           "--json"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 9
