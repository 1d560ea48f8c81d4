"""Command-line front end: JSON experiment configs in, CSV/JSON results out.

Subcommands: solve, curve, tv, channel, separate, asymptotics, validate.
One JSON config file describes the problem; a few flags (--lambda,
--upsilon, --beta, --output, ...) override single fields.  Outputs are
deterministic: repeated runs with the same config produce byte-identical
files.  Information is reported in nats; --bits converts at output time
only (columns carrying a unit suffix are renamed accordingly).

Exit codes: 0 success, 2 config/validation error, 3 numerical failure
(infeasible target, non-convergence).  Errors are emitted as a JSON
object on stderr.

CSV files are RFC-4180 with LF line endings and '.' decimal separators.
Column orders are stable and documented per subcommand in --help:

  curve    lambda, upsilon, beta_inverse, saturated
  channel  beta, expected_utility, mutual_info_nats, iterations, converged
  separate lambda, best_det_E, channel_E, gap
  asymptotics  parameter, T_or_N, value, verdict
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import asymptotics as asy
from .functionals import functional_from_json
from .kernels import ConvergenceError, channel_optimize
from .separation import separation_experiment
from .solver import (
    InfeasibleError,
    NonConvexDualError,
    solution_at_beta,
    solve_for_lambda,
    solve_for_upsilon,
    solve_tv,
    value_curve,
)
from .spaces import (
    ProbMeasure,
    normalize,
    space_from_json,
    utility_from_json,
)

LN2 = math.log(2.0)


class ConfigError(ValueError):
    """Bad or missing configuration; maps to exit code 2."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def _fmt(value: Any, precision: int) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, f".{precision}g")
    return str(value)


def _write_csv(stream, header: Sequence[str], rows, precision: int):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v, precision) for v in row])


def _emit(text: str, output: str | None):
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, frozenset):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _emit_json(payload, args):
    text = json.dumps(payload, indent=2, default=_json_default, sort_keys=True) + "\n"
    _emit(text, args.output)


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

def _load_config(args) -> dict:
    if not args.config:
        raise ConfigError("a --config JSON file is required", field="config")
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}", field="config")
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="config")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", field="config")
    return cfg


def _need(cfg: dict, field: str):
    if field not in cfg:
        raise ConfigError(f"missing required field {field!r}", field=field)
    return cfg[field]


def _build_problem(cfg: dict):
    space = space_from_json(_need(cfg, "space"))
    x = utility_from_json(_need(cfg, "utility"), space)
    functional_cfg = dict(_need(cfg, "functional"))
    if "mode" in cfg:  # top-level mode overrides the functional's own
        functional_cfg["mode"] = cfg["mode"]
    functional = functional_from_json(functional_cfg, space)
    return space, x, functional


def _nats_factor(args) -> float:
    return LN2 if getattr(args, "bits", False) else 1.0


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("INFOKERNEL_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Validation (schema + semantics, no solving)
# ---------------------------------------------------------------------------

def validate_config(command: str, cfg: dict) -> list[dict]:
    """Semantic findings for a config; empty list means clean."""
    findings: list[dict] = []

    def check_weights(field: str, weights, want_simplex: bool):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            findings.append({"field": field, "message": "negative weights"})
        total = float(w.sum())
        if want_simplex and abs(total - 1.0) > 1e-9:
            findings.append({"field": field,
                             "message": f"input not normalized (sum {total:.6g})"})

    def check_grid(field: str, grid):
        g = [float(v) for v in grid]
        if any(b <= a for a, b in zip(g, g[1:])):
            findings.append({"field": field, "message": "grid is not strictly increasing"})

    if command in ("solve", "curve", "tv"):
        for field in ("space", "utility"):
            if field not in cfg:
                findings.append({"field": field, "message": "missing"})
        if command == "tv":
            ref = cfg.get("reference") or (cfg.get("functional") or {}).get("reference")
            if ref is None:
                findings.append({"field": "reference", "message": "missing"})
            elif "weights" in ref:
                check_weights("reference.weights", ref["weights"], True)
        elif "functional" not in cfg:
            findings.append({"field": "functional", "message": "missing"})
        if "lambda_grid" in cfg:
            check_grid("lambda_grid", cfg["lambda_grid"])
        if "upsilon_grid" in cfg:
            check_grid("upsilon_grid", cfg["upsilon_grid"])
    elif command in ("channel", "separate"):
        if "utility_matrix" not in cfg:
            findings.append({"field": "utility_matrix", "message": "missing"})
        if "input" not in cfg:
            findings.append({"field": "input", "message": "missing"})
        else:
            check_weights("input", cfg["input"], True)
        if "lambda_grid" in cfg:
            check_grid("lambda_grid", cfg["lambda_grid"])
        if command == "separate" and "utility_matrix" in cfg:
            mat = cfg["utility_matrix"]
            na = len(mat)
            nb = len(mat[0]) if na else 0
            count = na ** nb if na else 0
            limit = int(cfg.get("enumeration_limit", 10 ** 6))
            if count > limit:
                findings.append({
                    "field": "utility_matrix",
                    "message": f"deterministic enumeration needs {count} maps, "
                               f"over the limit {limit}",
                })
    elif command == "asymptotics":
        if "scenario" not in cfg:
            findings.append({"field": "scenario", "message": "missing"})
        elif cfg["scenario"] not in ("gauss-kernel", "cauchy-loss", "series", "zeta"):
            findings.append({"field": "scenario",
                             "message": f"unknown scenario {cfg['scenario']!r}"})
    else:
        findings.append({"field": "command", "message": f"unknown command {command!r}"})
    return findings


def _validate_or_raise(command: str, cfg: dict):
    findings = validate_config(command, cfg)
    if findings:
        first = findings[0]
        raise ConfigError(first["message"], field=first.get("field"))


# ---------------------------------------------------------------------------
# Subcommand runners
# ---------------------------------------------------------------------------

def _solution_payload(sol, factor: float) -> dict:
    return {
        "beta": sol.beta,
        "beta_inverse": sol.beta_inverse,
        "upsilon": sol.upsilon,
        "lambda": sol.info / factor,
        "saturated": sol.saturated,
        "flat_objective": sol.flat_objective,
        "note": sol.note,
        "weights": sol.measure.weights.tolist(),
    }


def run_solve(args) -> int:
    cfg = _load_config(args)
    _validate_or_raise("solve", cfg)
    _, x, functional = _build_problem(cfg)
    lam = args.lam if args.lam is not None else cfg.get("lambda")
    ups = args.upsilon if args.upsilon is not None else cfg.get("upsilon")
    beta = args.beta if args.beta is not None else cfg.get("beta")
    targets = [t for t in (lam, ups, beta) if t is not None]
    if len(targets) != 1:
        raise ConfigError("give exactly one of lambda/upsilon/beta", field="lambda")
    if lam is not None:
        sol = solve_for_lambda(x, functional, float(lam))
    elif ups is not None:
        sol = solve_for_upsilon(x, functional, float(ups))
    else:
        sol = solution_at_beta(x, functional, float(beta))
    _emit_json(_solution_payload(sol, _nats_factor(args)), args)
    return 0


def run_curve(args) -> int:
    cfg = _load_config(args)
    _validate_or_raise("curve", cfg)
    _, x, functional = _build_problem(cfg)
    factor = _nats_factor(args)
    buf = io.StringIO()
    header = ["lambda", "upsilon", "beta_inverse", "saturated"]
    if "upsilon_grid" in cfg and "lambda_grid" not in cfg:
        rows = []
        for ups in cfg["upsilon_grid"]:
            sol = solve_for_upsilon(x, functional, float(ups))
            rows.append((sol.info / factor, sol.upsilon, sol.beta_inverse,
                         sol.saturated))
        _write_csv(buf, header, rows, args.precision)
        _emit(buf.getvalue(), args.output)
        return 0
    grid = cfg.get("lambda_grid")
    if not grid:
        raise ConfigError("curve requires lambda_grid or upsilon_grid",
                          field="lambda_grid")
    branch = cfg.get("branch", "upper")
    curve = value_curve(x, functional, [float(v) for v in grid], branch=branch,
                        threads=_threads(args))
    _write_csv(buf, header,
               [(s.lam / factor, s.upsilon, s.beta_inverse, s.saturated)
                for s in curve.samples], args.precision)
    _emit(buf.getvalue(), args.output)
    return 0


def run_tv(args) -> int:
    cfg = _load_config(args)
    _validate_or_raise("tv", cfg)
    space = space_from_json(_need(cfg, "space"))
    x = utility_from_json(_need(cfg, "utility"), space)
    ref_cfg = cfg.get("reference") or _need(cfg, "functional")["reference"]
    from .spaces import measure_from_json
    q = normalize(measure_from_json(ref_cfg, space))
    lam = args.lam if args.lam is not None else _need(cfg, "lambda")
    sol = solve_tv(x, q, float(lam))
    _emit_json({
        "lambda": float(lam),
        "upsilon": sol.upsilon,
        "info": sol.info,
        "weights": sol.measure.weights.tolist(),
        "moved_mass": sol.moved_mass,
        "unique_maximizer": sol.unique_maximizer,
        "on_boundary": sol.on_boundary,
        "saturated": sol.saturated,
    }, args)
    return 0


def _channel_target(cfg: dict, args) -> dict:
    if args.beta is not None:
        return {"beta": args.beta}
    if args.lam is not None:
        return {"lambda": args.lam}
    if args.upsilon is not None:
        return {"upsilon": args.upsilon}
    target = cfg.get("target")
    if not isinstance(target, dict) or len(target) != 1:
        raise ConfigError("channel target must be one of beta/lambda/upsilon",
                          field="target")
    return target


def run_channel(args) -> int:
    cfg = _load_config(args)
    _validate_or_raise("channel", cfg)
    mat = np.asarray(cfg["utility_matrix"], dtype=float)
    input_dist = np.asarray(cfg["input"], dtype=float)

    targets: list[dict]
    if "beta_grid" in cfg and args.beta is args.lam is args.upsilon is None:
        targets = [{"beta": float(b)} for b in cfg["beta_grid"]]
    else:
        targets = [_channel_target(cfg, args)]

    solutions = []
    for target in targets:
        key, value = next(iter(target.items()))
        kwargs = {"beta": None, "lam": None, "upsilon": None}
        kwargs["lam" if key == "lambda" else key] = float(value)
        solutions.append(channel_optimize(mat, input_dist, **kwargs))

    factor = _nats_factor(args)
    info_col = "mutual_info_bits" if factor != 1.0 else "mutual_info_nats"
    if args.format == "json":
        _emit_json([{
            "beta": s.beta,
            "expected_utility": s.expected_utility,
            info_col: s.mutual_info / factor,
            "iterations": s.iterations,
            "converged": s.converged,
            "saturated": s.saturated,
            "kernel": s.kernel.to_json(),
        } for s in solutions], args)
    else:
        buf = io.StringIO()
        _write_csv(buf, ["beta", "expected_utility", info_col, "iterations", "converged"],
                   [(s.beta, s.expected_utility, s.mutual_info / factor,
                     s.iterations, s.converged) for s in solutions], args.precision)
        _emit(buf.getvalue(), args.output)
    for s in solutions:
        if not s.converged:
            raise ConvergenceError(
                f"channel at beta={s.beta} stopped at residual {s.residual:.3e} "
                f"after {s.iterations} iterations")
    return 0


def run_separate(args) -> int:
    cfg = _load_config(args)
    _validate_or_raise("separate", cfg)
    mat = np.asarray(cfg["utility_matrix"], dtype=float)
    input_dist = ProbMeasure(_input_space(mat), np.asarray(cfg["input"], dtype=float))
    limit = int(cfg.get("enumeration_limit", 10 ** 6))
    factor = _nats_factor(args)

    if "lambda_grid" in cfg and args.lam is None:
        rows = []
        for lam in cfg["lambda_grid"]:
            rep = separation_experiment(mat, input_dist, float(lam), limit=limit,
                                        dual_check=False)
            rows.append((float(lam) / factor,
                         rep.best_det_value if rep.best_det_value is not None else "",
                         rep.channel.expected_utility,
                         rep.gap if rep.gap is not None else ""))
        buf = io.StringIO()
        _write_csv(buf, ["lambda", "best_det_E", "channel_E", "gap"], rows, args.precision)
        _emit(buf.getvalue(), args.output)
        return 0

    lam = args.lam if args.lam is not None else _need(cfg, "lambda")
    rep = separation_experiment(mat, input_dist, float(lam), limit=limit,
                                dual_check=bool(cfg.get("dual_check", True)))
    payload = {
        "lambda": float(lam) / factor,
        "best_deterministic": None if rep.best_map is None else {
            "map": rep.best_map.images.tolist(),
            "expected_utility": rep.best_det_value,
            "mutual_info_nats": rep.best_det_info,
        },
        "channel": {
            "beta": rep.channel.beta,
            "expected_utility": rep.channel.expected_utility,
            "mutual_info_nats": rep.channel.mutual_info,
            "converged": rep.channel.converged,
            "saturated": rep.channel.saturated,
            "kernel": rep.channel.kernel.to_json(),
        },
        "gap": rep.gap,
        "feasible_deterministic_count": rep.feasible_count,
        "dual_checks": [{
            "map": c.map.images.tolist(),
            "expected_utility": c.value,
            "mutual_info_nats": c.info,
            "min_info_for_value": c.min_info_for_value,
            "strictly_worse": c.strictly_worse,
        } for c in rep.dual_checks],
    }
    _emit_json(payload, args)
    return 0


def _input_space(mat: np.ndarray):
    from .spaces import FiniteSpace
    return FiniteSpace.of_size(mat.shape[1], "b")


def run_asymptotics(args) -> int:
    cfg = _load_config(args) if args.config else {}
    if args.scenario:
        cfg["scenario"] = args.scenario
    _validate_or_raise("asymptotics", cfg)
    scenario = cfg["scenario"]
    rows = []
    if scenario == "gauss-kernel":
        betas = cfg.get("betas", [0.5, 1.0, 2.0])
        for beta in betas:
            value = asy.gaussian_conditional_utility(float(beta))
            rows.append((f"beta={beta}", "", value, ""))
    elif scenario == "series":
        beta = float(cfg.get("beta", 1.0))
        for n in cfg.get("truncations", [10, 50, 200]):
            chk = asy.series_example(beta, int(n))
            rows.append((f"beta={beta}", int(n), chk.partial, ""))
    elif scenario == "cauchy-loss":
        reps = cfg.get("representatives", [0.0])
        truncs = cfg.get("truncations", [1e3, 1e4, 1e5])
        sweep = asy.cauchy_truncated_loss(reps, truncs,
                                          source=cfg.get("source", "cauchy"))
        for t, v in zip(sweep.points, sweep.values):
            rows.append((f"n_cells={len(reps)}", t, v, sweep.verdict))
    elif scenario == "zeta":
        m = int(cfg.get("m", 1))
        truncs = cfg.get("truncations", [1000, 10000, 100000])
        image = cfg.get("constant_image", 1)
        sweep = asy.zeta_tail_loss(m, truncs, lambda b: np.full_like(b, int(image)))
        for t, v in zip(sweep.points, sweep.values):
            rows.append((f"m={m}", int(t), v, sweep.verdict))
    buf = io.StringIO()
    _write_csv(buf, ["parameter", "T_or_N", "value", "verdict"], rows, args.precision)
    _emit(buf.getvalue(), args.output)
    return 0


def run_validate(args) -> int:
    cfg = _load_config(args)
    command = args.command_name or cfg.get("command")
    if not command:
        raise ConfigError("validate needs a command (flag or 'command' field)",
                          field="command")
    findings = validate_config(command, cfg)
    _emit_json({"command": command, "findings": findings}, args)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser, flags: Sequence[str] = ()):
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--output", help="write results here instead of stdout")
    parser.add_argument("--format", choices=["csv", "json"], default=None)
    parser.add_argument("--precision", type=int, default=9,
                        help="significant digits for text output (default 9)")
    parser.add_argument("--bits", action="store_true",
                        help="report information in bits (divide nats by ln 2)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for sweeps (default $INFOKERNEL_THREADS or 1)")
    if "lambda" in flags:
        parser.add_argument("--lambda", dest="lam", type=float, default=None,
                            help="information budget override (nats)")
    if "upsilon" in flags:
        parser.add_argument("--upsilon", type=float, default=None,
                            help="expected-utility target override")
    if "beta" in flags:
        parser.add_argument("--beta", type=float, default=None,
                            help="inverse-temperature override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infokernel",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single budget-, value- or multiplier-"
                                     "constrained solve")
    _add_common(p, ["lambda", "upsilon", "beta"])
    p.set_defaults(func=run_solve)

    p = sub.add_parser("curve", help="optimal value curve over a lambda grid "
                                     "(CSV: lambda,upsilon,beta_inverse,saturated)")
    _add_common(p)
    p.set_defaults(func=run_curve)

    p = sub.add_parser("tv", help="total-variation ball maximizer (LP path)")
    _add_common(p, ["lambda"])
    p.set_defaults(func=run_tv)

    p = sub.add_parser("channel", help="information-constrained channel optimization "
                                       "(CSV: beta,expected_utility,mutual_info_nats,"
                                       "iterations,converged)")
    _add_common(p, ["lambda", "upsilon", "beta"])
    p.set_defaults(func=run_channel)

    p = sub.add_parser("separate", help="deterministic-vs-channel gap report "
                                        "(CSV sweep: lambda,best_det_E,channel_E,gap)")
    _add_common(p, ["lambda"])
    p.set_defaults(func=run_separate)

    p = sub.add_parser("asymptotics", help="continuous/infinite example probes "
                                           "(CSV: parameter,T_or_N,value,verdict)")
    _add_common(p)
    p.add_argument("--scenario", choices=["gauss-kernel", "cauchy-loss", "series", "zeta"])
    p.set_defaults(func=run_asymptotics)

    p = sub.add_parser("validate", help="schema and semantic checks, no solving")
    _add_common(p)
    p.add_argument("--command-name", help="command whose schema to validate against")
    p.set_defaults(func=run_validate)

    return parser


def _error_json(code: int, exc: Exception) -> str:
    payload = {"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}}
    field = getattr(exc, "field", None)
    if field:
        payload["error"]["field"] = field
    return json.dumps(payload)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", None) is None:
        args.format = "csv"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(_error_json(2, exc), file=sys.stderr)
        return 2
    except (InfeasibleError, NonConvexDualError, ConvergenceError, OverflowError) as exc:
        print(_error_json(3, exc), file=sys.stderr)
        return 3
    except ValueError as exc:
        print(_error_json(2, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
