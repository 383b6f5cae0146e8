"""Command-line front end.

Exit status is 0 on success, 1 on usage errors (bad flags or config,
unwritable output) and 2 when a computation does not converge.

Config files are TOML with the keys below. Flags override file keys.

    dim = 9
    rho = 1.0
    potential = "const:-1"
    eps_list = [0.03, 0.01, 0.003]
    mode = "full"            # or "bubble_only"
    seeds = 0
    workers = 4
    [grid]
    points = 3000
    lambda_max = 2.5e5       # optional; sized from the smallest eps if absent
    [output]
    format = "csv"           # or "json"
    path = "sweep.csv"
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import asymptotics
from .bubblefun import (PotentialSpec, deflection_coefficients, expansion_report,
                        lambda_star, log_lambda_star)
from .dimconsts import (N_MAX, make_dims, sobolev_quotient_quadrature,
                        verify_integral_constants)
from .greenrobin import robin_center, robin_offcenter, robin_scan
from .minimizer import MinimizerOptions, minimize_quotient
from .radial import build_grid

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2
WORKERS_ENV = "NAVIER_BN_WORKERS"


class UsageError(Exception):
    pass


class NonConvergence(Exception):
    pass


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 9
    rho: float = 1.0
    grid_points: int = 3000
    lambda_max: float | None = None
    potential: str = "const:-1"
    eps_list: tuple = ()
    mode: str = "full"
    seeds: int = 0
    workers: int | None = None
    output_format: str | None = None
    output_path: str | None = None

    @property
    def V(self) -> PotentialSpec:
        return PotentialSpec.parse(self.potential)


_TOP_KEYS = {"dim", "rho", "grid", "potential", "eps_list", "mode", "seeds", "workers",
             "output"}
_GRID_KEYS = {"points", "lambda_max"}
_OUTPUT_KEYS = {"format", "path"}


def _expect(key, value, kinds, what):
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise UsageError(f"config key '{key}': expected {what}, got {type(value).__name__}")
    return value


def _from_mapping(data: dict) -> dict:
    out = {}
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    if "dim" in data:
        out["dim"] = _expect("dim", data["dim"], int, "an integer")
    if "rho" in data:
        out["rho"] = float(_expect("rho", data["rho"], (int, float), "a number"))
    if "potential" in data:
        out["potential"] = _expect("potential", data["potential"], str, "a string")
    if "eps_list" in data:
        lst = _expect("eps_list", data["eps_list"], list, "a list of numbers")
        out["eps_list"] = tuple(float(_expect("eps_list", e, (int, float), "a list of numbers"))
                                for e in lst)
    if "mode" in data:
        out["mode"] = _expect("mode", data["mode"], str, "a string")
    if "seeds" in data:
        out["seeds"] = _expect("seeds", data["seeds"], int, "an integer")
    if "workers" in data:
        out["workers"] = _expect("workers", data["workers"], int, "an integer")
    if "grid" in data:
        g = _expect("grid", data["grid"], dict, "a table")
        unknown = set(g) - _GRID_KEYS
        if unknown:
            raise UsageError(f"unknown config key(s) in [grid]: {', '.join(sorted(unknown))}")
        if "points" in g:
            out["grid_points"] = _expect("grid.points", g["points"], int, "an integer")
        if "lambda_max" in g:
            out["lambda_max"] = float(_expect("grid.lambda_max", g["lambda_max"],
                                              (int, float), "a number"))
    if "output" in data:
        o = _expect("output", data["output"], dict, "a table")
        unknown = set(o) - _OUTPUT_KEYS
        if unknown:
            raise UsageError(f"unknown config key(s) in [output]: {', '.join(sorted(unknown))}")
        if "format" in o:
            out["output_format"] = _expect("output.format", o["format"], str, "a string")
        if "path" in o:
            out["output_path"] = _expect("output.path", o["path"], str, "a string")
    return out


def validate(cfg: ExperimentConfig, command: str | None = None) -> ExperimentConfig:
    """Check every field; the message names the offending key."""
    if not 5 <= cfg.dim <= N_MAX:
        raise UsageError(f"config key 'dim': n={cfg.dim} outside the supported range 5..{N_MAX}")
    if command in ("sweep", "fit", "minimize") and cfg.dim < 8:
        raise UsageError(f"config key 'dim': {command} needs n >= 8 (the gap laws assume "
                         f"n >= 8), got n={cfg.dim}")
    if not (math.isfinite(cfg.rho) and cfg.rho > 0):
        raise UsageError("config key 'rho': must be a positive number")
    if cfg.grid_points < 200:
        raise UsageError("config key 'grid.points': must be at least 200")
    if cfg.lambda_max is not None and not cfg.lambda_max >= 1:
        raise UsageError("config key 'grid.lambda_max': must be >= 1")
    try:
        cfg.V
    except ValueError as exc:
        raise UsageError(f"config key 'potential': {exc}") from None
    if any(not (math.isfinite(e) and e > 0) for e in cfg.eps_list):
        raise UsageError("config key 'eps_list': values must be positive")
    if any(b >= a for a, b in zip(cfg.eps_list, cfg.eps_list[1:])):
        raise UsageError("config key 'eps_list': values must be strictly decreasing")
    if cfg.mode not in ("full", "bubble_only"):
        raise UsageError("config key 'mode': must be 'full' or 'bubble_only'")
    if cfg.seeds < 0:
        raise UsageError("config key 'seeds': must be nonnegative")
    if cfg.workers is not None and cfg.workers < 1:
        raise UsageError("config key 'workers': must be at least 1")
    if cfg.output_format not in (None, "csv", "json"):
        raise UsageError("config key 'output.format': must be 'csv' or 'json'")
    return cfg


def parse_config(path: str | None = None, overrides: dict | None = None,
                 command: str | None = None) -> ExperimentConfig:
    """Read and validate a config file, then apply flag overrides."""
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from None
        values.update(_from_mapping(data))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return validate(ExperimentConfig(**values), command)


# ---------------------------------------------------------------- output

def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits.

    Non-finite floats are written as ``NaN``/``Infinity``, which Python's
    ``json`` module reads back.
    """
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _num(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return "" if v is None else str(v)


def to_csv(kind: str, rows: list[dict]) -> str:
    """CSV text with a schema line, a header row and LF line endings."""
    buf = io.StringIO()
    buf.write(f"# schema: navier-bn-{kind} v{SCHEMA_VERSION}\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(r[k]) for k in keys])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".navier-bn-", suffix=".tmp")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _emit(args, cfg, kind: str, payload, rows=None, default="json",
          config_format: bool = True) -> None:
    fmt = cfg.output_format if config_format else None
    fmt = "csv" if args.csv else "json" if args.json else (fmt or default)
    if fmt == "csv" and rows is None:
        raise UsageError(f"{kind} output has no CSV form; use --json")
    text = to_csv(kind, rows) if fmt == "csv" else dumps(payload) + "\n"
    path = args.out or cfg.output_path
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def _workers(args, cfg) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if w < 1:
            raise UsageError(f"{WORKERS_ENV} must be at least 1")
        return w
    if cfg.workers is not None:
        return cfg.workers
    return os.cpu_count() or 1


def cmd_constants(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    out = dims.as_dict()
    out["S2_quadrature"] = sobolev_quotient_quadrature(cfg.dim)
    if cfg.dim >= 8:
        out["report"] = verify_integral_constants(cfg.dim).as_dict()
    rows = [{"key": k, "value": v} for k, v in out.items() if k != "report"]
    if "report" in out:
        rows += [{"key": f"report.{k}", "value": v} for k, v in out["report"].items()
                 if k != "notes"]
    _emit(args, cfg, "constants", out, rows)
    return EXIT_OK


def cmd_robin(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    try:
        if args.scan is not None:
            vals = robin_scan(dims, cfg.rho, args.scan)
        elif args.t is not None:
            vals = [robin_offcenter(dims, cfg.rho, args.t)]
        else:
            vals = [robin_center(dims, cfg.rho)]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [{"t": v.x_radius, "R": v.value, "method": v.method} for v in vals]
    _emit(args, cfg, "robin", rows, rows, default="csv")
    return EXIT_OK


def _eps(args, cfg) -> float:
    if args.eps is not None:
        return args.eps
    if cfg.eps_list:
        return cfg.eps_list[0]
    raise UsageError("--eps is required")


def cmd_expand(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    if dims.n < 8:
        raise UsageError("expand needs n >= 8")
    eps = _eps(args, cfg)
    try:
        lams = [float(x) for x in args.lambdas.split(",")]
    except ValueError:
        raise UsageError("--lambdas must be a comma-separated list of numbers") from None
    if not lams or any(not x > 0 for x in lams):
        raise UsageError("--lambdas must be positive")
    lam_max = cfg.lambda_max or 4.0 * max(lams)
    grid = build_grid(dims.n, cfg.rho, cfg.grid_points, lam_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = expansion_report(dims, grid, cfg.V, eps, lams)
    rows = list(rep.rows())
    payload = {"n": rep.n, "rho": rep.rho, "eps": rep.eps, "rows": rows,
               "slopes": rep.slopes, "warnings": rep.warnings}
    _emit(args, cfg, "expand", payload, rows, default="csv")
    return EXIT_OK


def cmd_lambda_star(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    eps = _eps(args, cfg)
    A, B = args.A, args.B
    if A is None or B is None:
        A, B = deflection_coefficients(dims, cfg.rho, cfg.V)
    try:
        if dims.n == 8:
            payload = {"n": 8, "A": A, "B": B, "eps": eps,
                       "log_lambda": log_lambda_star(dims, A, B, eps)}
        else:
            ls = lambda_star(dims, A, B, eps)
            payload = {"n": ls.n, "A": ls.A, "B": ls.B, "eps": ls.eps, "lambda0": ls.lambda0,
                       "log_lambda": math.log(ls.lambda0), "f_at_min": ls.f_at_min,
                       "c0": ls.c0, "bound_holds": ls.bound_holds, "samples": ls.samples}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, cfg, "lambda-star", payload, [payload])
    return EXIT_OK


def cmd_minimize(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    eps = _eps(args, cfg)
    V = cfg.V
    lam_max = cfg.lambda_max
    if lam_max is None:
        lam_max = asymptotics.sweep_grid_lambda_max(dims, cfg.rho, V, eps)
    if lam_max > asymptotics.GRID_LAMBDA_CAP:
        raise NonConvergence(f"optimal scale needs lambda_max={lam_max:.3g}; out of grid range")
    grid = build_grid(dims.n, cfg.rho, cfg.grid_points, lam_max)
    init = "random" if args.seed is not None else "bubble"
    opts = MinimizerOptions(seed=cfg.seeds, init=init)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize_quotient(dims, grid, eps, V, opts)
    payload = {"n": dims.n, "rho": cfg.rho, "eps": eps, "potential": V.to_string(),
               "S_value": res.S_value, "gap": res.gap, "bubble_gap": res.bubble_gap,
               "alpha": res.alpha, "alpha_excess": res.alpha_excess, "lambda": res.lam,
               "v_norm": res.v_norm, "el_residual": res.el_residual,
               "grad_norm": res.grad_norm, "orthogonality": list(res.orthogonality),
               "iterations": res.iterations, "converged": res.converged,
               "grid_points": grid.size - 1, "lambda_max": lam_max}
    _emit(args, cfg, "minimize", payload, [payload])
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _sweep(args, cfg):
    if not cfg.eps_list:
        raise UsageError("config key 'eps_list' is required")
    dims = make_dims(cfg.dim)
    opts = MinimizerOptions(seed=cfg.seeds)
    return dims, asymptotics.sweep(dims, cfg.rho, cfg.V, list(cfg.eps_list), cfg.mode,
                                   points=cfg.grid_points, lambda_max=cfg.lambda_max,
                                   opts=opts, workers=_workers(args, cfg))


def cmd_sweep(args, cfg) -> int:
    _, recs = _sweep(args, cfg)
    rows = [r.as_dict() for r in recs]
    _emit(args, cfg, "sweep", rows, rows, default="csv")
    bad = [r for r in recs if not r.converged]
    return EXIT_NONCONVERGED if bad else EXIT_OK


def _float_field(v: str) -> float:
    return float(v) if v else math.nan


def read_sweep_csv(path: str) -> list:
    """Records from a CSV written by the ``sweep`` command."""
    try:
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("# schema: navier-bn-sweep"):
                raise UsageError(f"{path}: not a sweep CSV")
            recs = []
            for row in csv.DictReader(fh):
                recs.append(asymptotics.SweepRecord(
                    eps=float(row["eps"]), gap=float(row["gap"]), log_gap=float(row["log_gap"]),
                    bubble_gap=float(row["bubble_gap"]),
                    bubble_log_gap=float(row["bubble_log_gap"]),
                    lambda_fit=float(row["lambda_fit"]),
                    log_lambda_fit=float(row["log_lambda_fit"]),
                    alpha_fit=float(row["alpha_fit"]), alpha_excess=float(row["alpha_excess"]),
                    v_norm=float(row["v_norm"]), converged=row["converged"] == "true",
                    mode=row["mode"], grid_points=int(row["grid_points"]),
                    lambda_max=_float_field(row["lambda_max"]),
                    iterations=int(row["iterations"]),
                    el_residual=_float_field(row["el_residual"]),
                    orthogonality=tuple(_float_field(x) for x in row["orthogonality"].split(";")),
                    error=row["error"]))
    except FileNotFoundError:
        raise UsageError(f"records file not found: {path}") from None
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: malformed sweep CSV ({exc})") from None
    return recs


def cmd_fit(args, cfg) -> int:
    dims = make_dims(cfg.dim)
    if args.records:
        recs = read_sweep_csv(args.records)
    else:
        dims, recs = _sweep(args, cfg)
    V = cfg.V
    try:
        gap = asymptotics.fit_gap_law(dims, recs, rho=cfg.rho, V=V)
        laws = asymptotics.fit_blowup_laws(dims, cfg.rho, V, recs)
    except asymptotics.InsufficientWindow as exc:
        raise NonConvergence(str(exc)) from None
    sign = asymptotics.concentration_sign_check(dims, cfg.rho, V, recs[-1])
    payload = {"n": dims.n, "rho": cfg.rho, "potential": V.to_string(),
               "gap_law": gap.as_dict(),
               "blowup_laws": [f.as_dict() for f in laws],
               "concentration_sign": {"ok": sign.ok, "argmax_radius": sign.argmax_radius,
                                      "V_at_argmax": sign.V_at_argmax,
                                      "diagnostics": sign.diagnostics}}
    rows = [f.as_dict() for f in [gap, *laws]]
    # the config's output section describes the sweep table, not the summary
    _emit(args, cfg, "fit", payload, rows, config_format=False)
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "robin": cmd_robin,
    "expand": cmd_expand,
    "lambda-star": cmd_lambda_star,
    "minimize": cmd_minimize,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, help="space dimension n (default 9)")
    common.add_argument("--rho", type=float, help="ball radius (default 1)")
    common.add_argument("--eps", type=float, help="potential strength")
    common.add_argument("--potential", help="const:V | poly:c0,c1,... | table:r:v,... "
                                            "(default const:-1)")
    common.add_argument("--config", help="TOML experiment file")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output")
    fmt.add_argument("--csv", action="store_true", help="CSV output")
    common.add_argument("--out", help="output file (default stdout); written atomically")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--workers", type=int,
                        help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    common.add_argument("--points", type=int, help="grid intervals (default 3000)")

    p = _Parser(prog="navier-bn", description="Bubble concentration for the Navier "
                "bilaplacian with a small potential on a ball.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("constants", parents=[common], help="dimension constants and checks")
    r = sub.add_parser("robin", parents=[common], help="Robin function values")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--t", type=float, help="distance from the center")
    g.add_argument("--scan", type=int, help="number of equally spaced radii on [0, 0.9 rho]")
    e = sub.add_parser("expand", parents=[common], help="bubble energies vs expansions")
    e.add_argument("--lambdas", required=True, help="comma-separated scales")
    ls = sub.add_parser("lambda-star", parents=[common], help="optimal scale of the model")
    ls.add_argument("--A", type=float, help="coefficient A (default: from the potential)")
    ls.add_argument("--B", type=float, help="coefficient B (default: from the potential)")
    sub.add_parser("minimize", parents=[common], help="minimize the quotient at one eps")
    sub.add_parser("sweep", parents=[common], help="eps sweep from a config file")
    f = sub.add_parser("fit", parents=[common], help="fit the limiting laws of a sweep")
    f.add_argument("--records", help="sweep CSV to fit instead of running the sweep")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be at least 1")
        overrides = {"dim": args.dim, "rho": args.rho, "potential": args.potential,
                     "grid_points": args.points,
                     "seeds": args.seed}
        cfg = parse_config(args.config, overrides, args.command)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"navier-bn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"navier-bn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"navier-bn: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ArithmeticError, RuntimeError) as exc:
        print(f"navier-bn: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
