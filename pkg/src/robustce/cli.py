"""Command-line entry point: ``robustce {explain,verify,calibrate,pareto}``.

Exit codes: 0 converged (or a completed report), 2 time limit, 3 infeasible,
1 usage, input or model-file errors. JSON on stdout is the machine contract;
``--pretty`` switches to a readable table.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adversarial import PreconditionError, robustness_radius
from .calibration import CAVEAT, CalibrationError, CalibrationQuery, calibrate, pareto_front, write_csv
from .engine import solve_heuristic_tree, solve_robust_ce
from .formulations import DistanceSpec, EngineConfig, UncertaintySet
from .io import ModelFileError, load_model
from .milp import SolverConfig
from .models import InputError, TrainedModel, predict_class
from .oracle import sample_audit
from .results import RunStatus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TIME_LIMIT = 2
EXIT_INFEASIBLE = 3
ROBUST_TOL = 1e-6

_STATUS_EXIT = {RunStatus.CONVERGED: EXIT_OK, RunStatus.TIME_LIMIT: EXIT_TIME_LIMIT,
                RunStatus.INFEASIBLE: EXIT_INFEASIBLE}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# -- input parsing -------------------------------------------------------

def _numbers(text: str, what: str) -> np.ndarray:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise CliError(f"{what}: cannot parse {text!r} as numbers") from exc
    if not vals:
        raise CliError(f"{what}: no values given")
    return np.asarray(vals)


def _vector(arg: str | None, model: TrainedModel, what: str) -> np.ndarray:
    """Inline comma list, a JSON file (array or object with ``factual``) or a CSV file."""
    if arg is None:
        if what == "factual" and "factual" in model.meta:
            return np.asarray(model.meta["factual"], dtype=float)
        raise CliError(f"--{what} is required")
    path = Path(arg)
    if path.is_file():
        text = path.read_text()
        if path.suffix.lower() == ".json":
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise CliError(f"{what}: invalid JSON in {arg}: {exc.msg}") from exc
            if isinstance(doc, dict):
                doc = doc.get("factual", doc.get("point"))
            vec = np.asarray(doc, dtype=float).reshape(-1)
        else:
            rows = [r for r in csv.reader(io.StringIO(text)) if r]
            if not rows:
                raise CliError(f"{what}: {arg} is empty")
            try:
                vec = np.asarray([float(v) for v in rows[0]])
            except ValueError:
                # header line
                if len(rows) < 2:
                    raise CliError(f"{what}: {arg} has a header but no data row") from None
                vec = _numbers(",".join(rows[1]), what)
    else:
        vec = _numbers(arg, what)
    if vec.size != model.dim:
        raise CliError(f"{what}: has {vec.size} entries, model expects {model.dim}")
    if not np.all(np.isfinite(vec)):
        raise CliError(f"{what}: entries must be finite")
    return vec


def _load(path: str, immutable: str | None = None) -> TrainedModel:
    try:
        model = load_model(path)
    except ModelFileError as exc:
        raise CliError(f"model file {path}: {exc}") from exc
    if immutable:
        try:
            idx = [int(t) for t in immutable.split(",") if t.strip()]
        except ValueError as exc:
            raise CliError(f"--immutable: expected comma-separated indices, got {immutable!r}") from exc
        bad = [i for i in idx if not 0 <= i < model.dim]
        if bad:
            raise CliError(f"--immutable: index {bad[0]} out of range for dimension {model.dim}")
        model = replace(model, space=model.space.with_immutable(idx))
    return model


def _time_limit(flag: float | None) -> float:
    env = os.environ.get("RCE_TIME_LIMIT")
    if env:
        try:
            value = float(env)
        except ValueError as exc:
            raise CliError(f"RCE_TIME_LIMIT: cannot parse {env!r}") from exc
    else:
        value = 1000.0 if flag is None else flag
    if not value > 0:
        raise CliError("time limit must be positive")
    return value


def _grid(text: str | None, lo, hi, steps) -> list[float]:
    if text:
        return [float(v) for v in _numbers(text, "rho-grid")]
    if lo is None or hi is None:
        raise CliError("give --rho-grid or both --rho-min and --rho-max")
    return [float(v) for v in np.linspace(lo, hi, steps)]


# -- output --------------------------------------------------------------

def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def _emit(doc: dict, pretty: bool, out) -> None:
    if not pretty:
        out.write(json.dumps(doc) + "\n")
        return
    width = max(len(k) for k in doc)
    for k, v in doc.items():
        if isinstance(v, dict):
            out.write(f"{k:<{width}}\n")
            for k2, v2 in v.items():
                out.write(f"  {k2:<{width}} {_fmt(v2)}\n")
        elif isinstance(v, list) and v and isinstance(v[0], (str, dict)):
            out.write(f"{k:<{width}} {len(v)} item(s)\n")
            for item in v:
                out.write(f"  {item}\n")
        else:
            out.write(f"{k:<{width}} {_fmt(v)}\n")


# -- commands ------------------------------------------------------------

def cmd_explain(args, out) -> int:
    model = _load(args.model, args.immutable)
    factual = _vector(args.factual, model, "factual")
    try:
        uset = UncertaintySet(args.norm, args.rho)
        dist = DistanceSpec(args.distance)
        cfg = EngineConfig(epsilon=args.epsilon, time_limit=_time_limit(args.time_limit),
                           trace_path=args.trace, negate_positive=args.negate_positive,
                           solver=SolverConfig())
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    try:
        if args.mode == "heuristic":
            res = solve_heuristic_tree(model, factual, uset, dist, cfg)
        else:
            res = solve_robust_ce(model, factual, uset, dist, cfg)
    except (PreconditionError, TypeError, InputError) as exc:
        raise CliError(str(exc)) from exc

    if args.output == "csv":
        w = csv.writer(out, lineterminator="\n")
        cols = [f"x{i}" for i in range(model.dim)]
        w.writerow(["status", "distance", "rho_requested", "rho_certified", "iterations", "method"] + cols)
        pt = [""] * model.dim if res.point is None else [repr(float(v)) for v in res.point]
        w.writerow([res.status.value, repr(float(res.distance)), repr(float(uset.rho)),
                    repr(float(res.rho_certified)), res.iterations, res.method] + pt)
    else:
        doc = res.to_dict(include_trace=False)
        doc.pop("incumbents", None)
        _emit(doc, args.pretty, out)
    return _STATUS_EXIT[res.status]


def verify_point(model: TrainedModel, point, rho: float, norm: str = "linf",
                 samples: int = 10_000, seed: int = 0) -> dict:
    """Validity, exact radius and a sampled audit for one candidate point."""
    point = np.asarray(point, dtype=float)
    valid = predict_class(model, point, clamp=False) == 1
    uset = UncertaintySet(norm, rho)
    score, worst, all_valid = sample_audit(model, point, uset, samples, seed)
    rbar = None
    if valid:
        try:
            rbar = robustness_radius(model, point, norm)
        except PreconditionError:
            rbar = 0.0
    return {
        "valid": bool(valid),
        "robust": bool(valid and rbar >= rho - ROBUST_TOL),
        "rho": float(rho),
        "rho_bar": None if rbar is None else float(rbar),
        "norm": str(uset.norm.value),
        "audit": {"all_valid": all_valid, "min_score": score, "tau": model.tau,
                  "worst_s": worst.tolist(), "samples": samples, "seed": seed},
    }


def cmd_verify(args, out) -> int:
    model = _load(args.model)
    point = _vector(args.point, model, "point")
    try:
        report = verify_point(model, point, args.rho, args.norm, args.samples, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _emit(report, args.pretty, out)
    return EXIT_OK


def cmd_calibrate(args, out) -> int:
    try:
        q = calibrate(CalibrationQuery(k=args.k, norm=args.norm, alpha=args.alpha,
                                       rho=args.rho, sigma=args.sigma))
    except CalibrationError as exc:
        raise CliError(str(exc)) from exc
    doc = q.to_dict()
    doc["caveat"] = CAVEAT
    _emit(doc, args.pretty, out)
    return EXIT_OK


def cmd_pareto(args, out) -> int:
    model = _load(args.model, args.immutable)
    factual = _vector(args.factual, model, "factual")
    try:
        grid = _grid(args.rho_grid, args.rho_min, args.rho_max, args.steps)
        cfg = EngineConfig(epsilon=args.epsilon, time_limit=_time_limit(args.time_limit))
        points = pareto_front(model, factual, grid, DistanceSpec(args.distance), cfg,
                              norm=args.norm, workers=args.workers)
    except (ValueError, PreconditionError) as exc:
        raise CliError(str(exc)) from exc
    text = write_csv(points)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robustce", description="Robust counterfactual explanations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("explain", help="compute a robust counterfactual")
    e.add_argument("--model", required=True)
    e.add_argument("--factual", help="path (JSON/CSV) or inline comma list; defaults to the model's factual")
    e.add_argument("--rho", type=float, required=True)
    e.add_argument("--norm", choices=["linf", "l2"], default="linf")
    e.add_argument("--distance", choices=["l1", "linf"], default="l1")
    e.add_argument("--mode", choices=["exact", "heuristic"], default="exact")
    e.add_argument("--epsilon", type=float, default=1e-7)
    e.add_argument("--time-limit", type=float, default=None, help="seconds; RCE_TIME_LIMIT overrides")
    e.add_argument("--trace", help="write per-iteration JSONL here")
    e.add_argument("--immutable", help="comma-separated feature indices to freeze")
    e.add_argument("--negate-positive", action="store_true",
                   help="if the factual is already +1, search for a robust -1 counterfactual")
    e.add_argument("--output", choices=["json", "csv"], default="json")
    e.add_argument("--pretty", action="store_true")
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("verify", help="check a candidate point")
    v.add_argument("--model", required=True)
    v.add_argument("--point", required=True)
    v.add_argument("--rho", type=float, required=True)
    v.add_argument("--norm", choices=["linf", "l2"], default="linf")
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--pretty", action="store_true")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("calibrate", help="relate alpha, rho and sigma under Gaussian noise")
    c.add_argument("--k", type=int, required=True, help="feature dimension")
    c.add_argument("--norm", choices=["l2", "linf"], default="l2")
    c.add_argument("--alpha", type=float)
    c.add_argument("--rho", type=float)
    c.add_argument("--sigma", type=float)
    c.add_argument("--pretty", action="store_true")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("pareto", help="sweep rho and write distance per radius as CSV")
    r.add_argument("--model", required=True)
    r.add_argument("--factual")
    r.add_argument("--rho-grid", help="comma list of radii, ascending")
    r.add_argument("--rho-min", type=float)
    r.add_argument("--rho-max", type=float)
    r.add_argument("--steps", type=int, default=11)
    r.add_argument("--norm", choices=["linf", "l2"], default="linf")
    r.add_argument("--distance", choices=["l1", "linf"], default="l1")
    r.add_argument("--epsilon", type=float, default=1e-7)
    r.add_argument("--time-limit", type=float, default=None)
    r.add_argument("--immutable")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--csv", help="write here instead of stdout")
    r.set_defaults(func=cmd_pareto)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"robustce {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
