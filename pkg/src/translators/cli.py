"""Batch command-line interface: ``translators verify|solve|diagnose``.

Exit codes: 0 pass, 1 a check failed, 2 configuration error, 3 geometric
degeneracy (loss of spacelikeness, solver breakdown).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, geometry, solver
from .errors import (
    ConfigError,
    DegenerateSolutionError,
    ExpressionError,
    InvalidInputError,
    NotSpacelikeError,
)
from .fields import AnalyticGraph, AnalyticGrid, GridField, fd_jets, parse_system, read_grid_csv, write_grid_csv

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3
CHECKS = ("prop31", "prop32", "decay", "gauss_image", "gradient_estimate", "rigidity_sweep")

_vector = {"type": "array", "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["signature", "functions", "translator", "domain", "grid"],
    "additionalProperties": False,
    "properties": {
        "signature": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "functions": {
            "oneOf": [
                {"type": "array", "items": {"type": "string"}, "minItems": 1},
                {"type": "object", "required": ["grid_file"], "additionalProperties": False,
                 "properties": {"grid_file": {"type": "string"}}},
            ]
        },
        "translator": {"type": "object", "required": ["a", "b"], "additionalProperties": False,
                       "properties": {"a": _vector, "b": _vector}},
        "domain": {"type": "object", "required": ["lo", "hi"], "additionalProperties": False,
                   "properties": {"lo": _vector, "hi": _vector}},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2}},
        "jets": {"enum": ["analytic", "fd"]},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "residual": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "max_halvings": {"type": "integer", "minimum": 1},
                "delta_space": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial_guess": {"oneOf": [{"enum": ["affine-fit", "zero", "random"]},
                                            {"type": "array", "items": {"type": "string"}}]},
                "random_amplitude": {"type": "number", "minimum": 0},
                "sweep_radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "diagnose": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {"type": "array", "items": {"enum": list(CHECKS)}, "minItems": 1},
                "source": {"enum": ["functions", "solve"]},
                "eps_probe": {"type": "number", "exclusiveMinimum": 0},
                "R0": {"type": "number", "minimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "jets": "analytic",
    "tolerances": {"residual": 1e-8, "max_iter": 50, "max_halvings": 40, "delta_space": geometry.DELTA_SPACE},
    "solve": {"initial_guess": "affine-fit", "random_amplitude": 0.05},
    "diagnose": {"checks": ["prop31"], "source": "functions", "eps_probe": 0.5},
}


# ------------------------------------------------------------------ config


def resolve_config(raw):
    """Validate against the schema, fill defaults and cross-check dimensions."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = copy.deepcopy(raw)
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            cfg[key] = {**val, **cfg.get(key, {})}
        else:
            cfg.setdefault(key, val)
    m, n = cfg["signature"]
    checks = {
        "translator.a": (len(cfg["translator"]["a"]), m),
        "translator.b": (len(cfg["translator"]["b"]), n),
        "domain.lo": (len(cfg["domain"]["lo"]), m),
        "domain.hi": (len(cfg["domain"]["hi"]), m),
        "grid": (len(cfg["grid"]), m),
    }
    if isinstance(cfg["functions"], list):
        checks["functions"] = (len(cfg["functions"]), n)
        guess = cfg["solve"]["initial_guess"]
        if isinstance(guess, list):
            checks["solve.initial_guess"] = (len(guess), n)
    for name, (got, want) in checks.items():
        if got != want:
            raise ConfigError(f"{name} has {got} entries, signature needs {want}")
    if any(h <= l for l, h in zip(cfg["domain"]["lo"], cfg["domain"]["hi"])):
        raise ConfigError("domain needs hi > lo on every axis")
    if not any(cfg["translator"]["a"] + cfg["translator"]["b"]):
        raise ConfigError("translating vector must be non-zero")
    return cfg


def _translator(cfg):
    t = cfg["translator"]
    return geometry.TranslatorSpec(tuple(t["a"]), tuple(t["b"]))


def _refined_shape(shape, level):
    return tuple((s - 1) * 2**level + 1 for s in shape)


def _expressions(cfg):
    if not isinstance(cfg["functions"], list):
        return None
    return parse_system(cfg["functions"], cfg["signature"][0])


def _grid_input(cfg, config_dir):
    path = Path(cfg["functions"]["grid_file"])
    if not path.is_absolute():
        path = config_dir / path
    try:
        field = read_grid_csv(path)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from None
    m, n = cfg["signature"]
    if field.m != m or field.n != n:
        raise ConfigError(f"grid file has m={field.m}, n={field.n}; signature says ({m}, {n})")
    return field


def _source(cfg, config_dir, level=0):
    """The configured functions as an AnalyticGrid or a GridField."""
    exprs = _expressions(cfg)
    if exprs is None:
        if level:
            raise ConfigError("--h-refine needs expression functions, not a grid file")
        return _grid_input(cfg, config_dir)
    shape = _refined_shape(cfg["grid"], level)
    grid = AnalyticGrid(AnalyticGraph(exprs, cfg["signature"][0]), cfg["domain"]["lo"], cfg["domain"]["hi"], shape)
    return grid if cfg["jets"] == "analytic" else grid.sample()


def _problem(cfg, level=0, seed=None):
    if _expressions(cfg) is None:
        raise ConfigError("solve needs boundary functions given as expressions")
    tol = cfg["tolerances"]
    guess = cfg["solve"]["initial_guess"]
    return solver.TranslatorProblem(
        T=_translator(cfg),
        lo=tuple(cfg["domain"]["lo"]),
        hi=tuple(cfg["domain"]["hi"]),
        shape=_refined_shape(cfg["grid"], level),
        boundary=tuple(cfg["functions"]),
        initial_guess=tuple(guess) if isinstance(guess, list) else guess,
        residual_tol=tol["residual"],
        max_iter=tol["max_iter"],
        max_halvings=tol["max_halvings"],
        delta_space=tol["delta_space"],
        seed=seed,
        random_amplitude=cfg["solve"]["random_amplitude"],
    )


def _boxes(cfg):
    radii = cfg["solve"].get("sweep_radii")
    if not radii:
        return None
    lo, hi = np.array(cfg["domain"]["lo"]), np.array(cfg["domain"]["hi"])
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    base = float(half.max())
    return [(tuple(center - half * r / base), tuple(center + half * r / base)) for r in radii]


# ------------------------------------------------------------------ output


class Output:
    """Collects results and series files under one directory."""

    def __init__(self, command, cfg, out_dir):
        self.command = command
        self.cfg = cfg
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.results = []
        self.files = []

    def add(self, row):
        self.results.append(row)

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def write(self, extra=None):
        doc = {
            "command": self.command,
            "config": self.cfg,
            "results": self.results,
            "series_files": sorted(self.files),
            "note": solver.TRUNCATION_NOTE if self.command == "solve" else None,
        }
        if extra:
            doc.update(extra)
        text = json.dumps(analysis.jsonable(doc), indent=2, sort_keys=True, allow_nan=False)
        (self.dir / f"{self.command}_report.json").write_text(text + "\n")


def _row(check, h, tolerance, worst, where, passed, details=None, mode="grid"):
    return analysis.DiagnosticsReport(check, h, tolerance, worst, where, passed, mode, details=details or {}).result()


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([v if isinstance(v, str) else f"{v:.17g}" for v in r])


# ------------------------------------------------------------------ verify


def _verify_jets(src):
    if isinstance(src, AnalyticGrid):
        return src.jets(), "analytic"
    return fd_jets(src, margin=1), "fd"


def _verify_level(cfg, src, out, tag=""):
    T = _translator(cfg)
    jets, mode = _verify_jets(src)
    delta = cfg["tolerances"]["delta_space"]
    metric = geometry.induced_metric(jets, delta)
    extr = geometry.second_fundamental_form(jets, metric)
    r = geometry.translator_residual(jets, T, metric)
    h = float(max(src.spacing))
    coords = jets.base.reshape(-1, jets.m)
    res = np.abs(r).max(axis=-1)
    worst_r, where_r = analysis.extremum(-res, jets.base)
    tol = cfg["tolerances"]["residual"]
    out.add(_row(f"translator_residual{tag}", h, tol, -worst_r, where_r, bool(-worst_r <= tol), mode=mode))
    lam, where_l = analysis.extremum(metric.lambda_min, jets.base)
    out.add(_row(f"spacelike{tag}", h, delta, lam, where_l, bool(lam > delta), mode=mode))
    schwarz = extr.B_norm2 - extr.H_norm2 / jets.m
    s_worst, s_where = analysis.extremum(schwarz, jets.base)
    out.add(_row(f"schwarz{tag}", h, 1e-12, s_worst, s_where, bool(s_worst >= -1e-12), mode=mode))
    m, n = jets.m, jets.n
    header = [f"x{i + 1}" for i in range(m)]
    header += [f"g{i + 1}{j + 1}" for i in range(m) for j in range(i, m)]
    header += ["det_g", "H_norm2", "B_norm2"] + [f"r{a + 1}" for a in range(n)]
    g = metric.g.reshape(-1, m, m)
    cols = [coords] + [g[:, i, j][:, None] for i in range(m) for j in range(i, m)]
    cols += [metric.det_g.reshape(-1, 1), extr.H_norm2.reshape(-1, 1), extr.B_norm2.reshape(-1, 1), r.reshape(-1, n)]
    _write_rows(out.path(f"verify_fields{tag}.csv"), header, np.concatenate(cols, axis=1))
    return h, -worst_r


def cmd_verify(cfg, out_dir, config_dir=Path("."), h_refine=0, seed=None):
    out = Output("verify", cfg, out_dir)
    levels = []
    for level in range(h_refine + 1):
        tag = f"_L{level}" if h_refine else ""
        levels.append(_verify_level(cfg, _source(cfg, config_dir, level), out, tag))
    extra = {}
    if h_refine:
        extra["refinement"] = _refinement_table(levels)
    out.write(extra)
    return EXIT_PASS if all(r["pass"] for r in out.results) else EXIT_FAIL


def _refinement_table(levels):
    rows = []
    for k, (h, err) in enumerate(levels):
        order = None
        if k and err > 0 and levels[k - 1][1] > 0:
            order = analysis.observed_order(levels[k - 1][1], err, levels[k - 1][0] / h)
        rows.append({"h": h, "value": err, "observed_order": order})
    return rows


# ------------------------------------------------------------------- solve


def _report_row(report: solver.SolveReport, p, tag=""):
    return _row(
        f"solve{tag}", float(max(p.spacing)), p.residual_tol, report.final_residual_inf, None, bool(report.converged),
        {
            "iterations": report.iterations,
            "message": report.message,
            "residual_history": list(report.residual_history),
            "spacelike_min_eig": report.spacelike_min_eig,
        },
    )


def _run_sweep(cfg, boxes, level, seed):
    p = _problem(cfg, level, seed)
    return solver.continuation_sweep(p.with_box(*boxes[0]), boxes)


def _write_sweep(out, sweep, tag=""):
    keys = list(sweep.series)
    rows = [[float(sweep.series[k][i]) for k in keys] for i in range(len(sweep.series["radius"]))]
    _write_rows(out.path(f"sweep{tag}.csv"), keys, rows)


def cmd_solve(cfg, out_dir, config_dir=Path("."), h_refine=0, seed=None):
    out = Output("solve", cfg, out_dir)
    boxes = _boxes(cfg)
    if boxes:
        for level in range(h_refine + 1):
            tag = f"_L{level}" if h_refine else ""
            sweep = _run_sweep(cfg, boxes, level, seed)
            for k, report in enumerate(sweep.reports):
                p = _problem(cfg, level, seed).with_box(*sweep.boxes[k])
                out.add(_report_row(report, p, f"{tag}[box {k}]"))
                write_grid_csv(report.solution, out.path(f"solution{tag}_box{k}.csv"))
            _write_sweep(out, sweep, tag)
            out.add(_row(f"sweep{tag}", None, None, float(len(sweep.reports)), None, True,
                         {"failure": sweep.failure, "boxes": len(boxes)}))
        out.write()
        return EXIT_PASS
    levels, solutions = [], []
    for level in range(h_refine + 1):
        tag = f"_L{level}" if h_refine else ""
        p = _problem(cfg, level, seed)
        report = solver.newton_solve(p)
        out.add(_report_row(report, p, tag))
        write_grid_csv(report.solution, out.path(f"solution{tag}.csv"))
        solutions.append(report.solution)
        levels.append((float(max(p.spacing)), report))
    extra = {}
    if h_refine:
        # successive-difference study on the nodes shared with the coarsest grid
        rows = []
        for k in range(1, len(solutions)):
            fine = solutions[k].samples[(slice(None),) + (slice(None, None, 2**k),) * solutions[k].m]
            prev = solutions[k - 1].samples[(slice(None),) + (slice(None, None, 2 ** (k - 1)),) * solutions[k].m]
            rows.append({"h": levels[k][0], "difference": float(np.abs(fine - prev).max())})
        for k in range(1, len(rows)):
            rows[k]["observed_order"] = analysis.observed_order(rows[k - 1]["difference"], rows[k]["difference"])
        extra["refinement"] = rows
    out.write(extra)
    return EXIT_PASS if all(r["pass"] for r in out.results) else EXIT_FAIL


# ---------------------------------------------------------------- diagnose


def _diagnose_solutions(cfg, config_dir, h_refine, seed):
    """(finest solution, its 2h companion or None)."""
    if cfg["diagnose"]["source"] == "solve":
        sols = []
        for level in range(h_refine + 1):
            report = solver.newton_solve(_problem(cfg, level, seed))
            if not report.converged:
                raise DegenerateSolutionError(f"solve for diagnostics did not converge: {report.message}")
            sols.append(report.solution)
    else:
        sols = [_source(cfg, config_dir, level) for level in range(h_refine + 1)]
    return sols[-1], (sols[-2] if len(sols) > 1 else None)


def cmd_diagnose(cfg, out_dir, config_dir=Path("."), h_refine=0, seed=None):
    out = Output("diagnose", cfg, out_dir)
    opts = cfg["diagnose"]
    T = _translator(cfg)
    eps = opts["eps_probe"]
    needs_solution = [c for c in opts["checks"] if c != "rigidity_sweep"]
    sol, coarse = _diagnose_solutions(cfg, config_dir, h_refine, seed) if needs_solution else (None, None)
    if isinstance(coarse, AnalyticGrid):
        coarse = None  # exact jets need no extrapolation
    reports = []
    for check in opts["checks"]:
        if check == "prop31":
            reports.append(analysis.prop31_check(sol, T))
        elif check == "prop32":
            reports.append(analysis.prop32_check(sol, T))
        elif check == "decay":
            reports.append(analysis.decay_check(sol, eps, R0=opts.get("R0"), coarse=coarse))
        elif check == "gauss_image":
            reports.append(analysis.gauss_image_check(sol, eps, coarse=coarse))
        elif check == "gradient_estimate":
            reports.append(analysis.gradient_estimate_check(sol))
        elif check == "rigidity_sweep":
            boxes = _boxes(cfg)
            if not boxes:
                raise ConfigError("rigidity_sweep needs solve.sweep_radii")
            sweeps = [_run_sweep(cfg, boxes, level, seed) for level in range(h_refine + 1)]
            reports.append(analysis.rigidity_sweep(sweeps[-1], T, eps,
                                                   coarse_sweep=sweeps[-2] if h_refine else None))
    for rep in reports:
        out.add(rep.result())
        rep.write_csv(out.path(f"{rep.name}.csv"))
    out.write()
    return EXIT_PASS if all(r["pass"] is not False for r in out.results) else EXIT_FAIL


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "diagnose": cmd_diagnose}


# -------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="translators", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        cmd.add_argument("--out", required=True, type=Path, help="output directory")
        cmd.add_argument("--h-refine", type=int, default=0, metavar="K", help="also run K successive grid halvings")
        cmd.add_argument("--seed", type=int, default=None, help="seed for the random initial guess")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.h_refine < 0:
            raise ConfigError("--h-refine must be non-negative")
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = resolve_config(raw)
        return COMMANDS[args.command](cfg, args.out, args.config.parent, args.h_refine, args.seed)
    except (ConfigError, ExpressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotSpacelikeError as exc:
        print(f"not spacelike: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DegenerateSolutionError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
