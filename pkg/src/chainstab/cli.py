"""Config-driven batch front end.

One JSON config describes the model, grid, target, solver settings, ladder
and Monte Carlo settings; subcommands run classification, hitting-time
solves, window-ladder studies, or simulation and write self-contained
reports (every number ships with the settings that produced it, so a rerun
of an emitted config reproduces the outputs bit for bit).

Exit codes: 0 run completed (whatever the verdicts), 2 config error,
3 internal-consistency error.  Files are written atomically (temp+rename).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from . import montecarlo
from .criteria import classify
from .hitting import expected_return_time, geometric_sum, return_probability
from .kernel import (
    COUNTABLE,
    GridScheme,
    InternalConsistencyError,
    Kernel,
    Region,
    TransitionRow,
    discretize,
)
from .models import PRESETS, preset
from .truncation import TruncationFamily, hitting_sequence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCONSISTENT = 3

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"type": "string", "enum": list(PRESETS)},
                "params": {"type": "object"},
                "inline": {
                    "type": "object",
                    "required": ["rows"],
                    "additionalProperties": False,
                    "properties": {
                        "rows": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "array",
                                "items": {
                                    "type": "array",
                                    "minItems": 2,
                                    "maxItems": 2,
                                    "items": {"type": "number"},
                                },
                            },
                        }
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cutoff": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "target": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "interval": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "number"},
                },
                "states": {"type": "array", "minItems": 1,
                           "items": {"type": "number"}},
            },
        },
        "criteria": {"type": "array", "items": {"type": "string"}},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "cap": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "slack": {"type": "number", "minimum": 0},
                "div_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "rates": {"type": "array", "items": {"type": "number"}},
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ladder": {"type": "array", "minItems": 1,
                           "items": {"type": "number"}},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "paths": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "x0": {"type": "number", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

SOLVER_DEFAULTS = {
    "tol": 1e-10,
    "cap": 1e12,
    "max_iter": 1_000_000,
    "slack": 1e-9,
}
MC_DEFAULTS = {"paths": 100_000, "horizon": 100_000, "seed": 0, "x0": 0.0}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {exc.message}") from exc
    model = cfg.get("model", {})
    if ("preset" in model) == ("inline" in model):
        raise ConfigError("config field model: give exactly one of preset/inline")
    return cfg


def _inline_kernel(rows) -> Kernel:
    table = []
    for i, row_spec in enumerate(rows):
        pts = np.array([float(j) for j, _ in row_spec])
        ms = np.array([float(m) for _, m in row_spec])
        if abs(float(np.sum(ms)) - 1.0) > 1e-9:
            raise ConfigError(f"inline row {i} has mass {float(np.sum(ms)):.12g}")
        table.append(TransitionRow(points=pts, masses=ms))

    def row_fn(x: float, horizon: float) -> TransitionRow:
        return table[int(x)]

    return Kernel(space=COUNTABLE, row_fn=row_fn, name="inline")


def build_model(cfg: dict):
    """Kernel + grid + target from the config; bundle only for presets."""
    model = cfg["model"]
    bundle = None
    if "preset" in model:
        try:
            bundle = preset(model["preset"], **model.get("params", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"config field model/params: {exc}") from exc
        kernel, grid, target = bundle.kernel, bundle.grid, bundle.target
    else:
        kernel = _inline_kernel(model["inline"]["rows"])
        grid = GridScheme(COUNTABLE, float(len(model["inline"]["rows"])))
        target = Region.states([0.0])
    if "grid" in cfg:
        g = cfg["grid"]
        h = float(g.get("h", grid.h))
        cutoff = float(g.get("cutoff", grid.cutoff))
        try:
            grid = GridScheme(kernel.space, cutoff, 1.0 if kernel.space == COUNTABLE else h)
        except ValueError as exc:
            raise ConfigError(f"config field grid: {exc}") from exc
    if "target" in cfg:
        t = cfg["target"]
        if ("interval" in t) == ("states" in t):
            raise ConfigError("config field target: give exactly one of interval/states")
        target = (
            Region.interval(*t["interval"])
            if "interval" in t
            else Region.states(t["states"])
        )
    if bundle is not None:
        bundle.grid = grid
        bundle.target = target
    return kernel, grid, target, bundle


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True,
                                   allow_nan=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    _atomic_write(path, buf.getvalue())


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_classify(cfg: dict, outdir: Path, quiet: bool = False,
                 plots: bool = False) -> int:
    kernel, grid, target, bundle = build_model(cfg)
    if bundle is None:
        raise ConfigError(
            "classify needs a preset model: inline kernels carry no bundled "
            "test functions"
        )
    solver = {**SOLVER_DEFAULTS, **cfg.get("solver", {})}
    if "div_threshold" in solver:
        bundle.thresholds = {c: solver["div_threshold"] for c in bundle.suite}
    bundle.slack_abs = bundle.slack_rel = solver["slack"]
    checks = cfg.get("criteria")
    try:
        result = classify(bundle, checks=checks)
    except ValueError as exc:  # e.g. a criterion without a bundled family
        raise ConfigError(f"config field criteria: {exc}") from exc

    reports = {name: _jsonable(rep) for name, rep in result.reports.items()}
    _write_json(outdir / "report.json", {
        "config": cfg,
        "model": result.model,
        "flags": result.flags,
        "reports": reports,
    })
    _atomic_write(outdir / "summary.txt", result.summary_table() + "\n")
    rows = []
    for cname in sorted(result.reports):
        rep = result.reports[cname]
        for cond in rep.conditions:
            rows.append([
                cname, cond.name, "ok" if cond.holds else "fail",
                f"{cond.margin:.12g}", f"{cond.witness:.12g}", cond.detail,
            ])
    _write_csv(outdir / "margins.csv",
               ["criterion", "condition", "holds", "margin", "witness", "detail"],
               rows)
    if plots:
        from . import plots as _plots

        _plots.render_classification(result, outdir / "margins.png")
    if not quiet:
        print(result.summary_table())
    return EXIT_OK


def run_solve(cfg: dict, outdir: Path, quiet: bool = False,
              plots: bool = False) -> int:
    kernel, grid, target, _ = build_model(cfg)
    solver = {**SOLVER_DEFAULTS, **cfg.get("solver", {})}
    fk = discretize(kernel, grid)
    kw = dict(tol=solver["tol"], cap=solver["cap"], max_iter=solver["max_iter"])
    lres = return_probability(fk, target, **kw)
    eres = expected_return_time(fk, target, return_prob=lres, **kw)
    rates = [float(r) for r in cfg.get("rates", [])]
    geo = {r: geometric_sum(fk, target, r, **kw) for r in rates}

    statuses = {"L": lres, "E_tau": eres}
    statuses.update({f"geom_{r:g}": g for r, g in geo.items()})
    diverged = {name: set(res.diverged_states) for name, res in statuses.items()}
    header = ["state", "L", "E_tau"] + [f"geom_{r:g}" for r in rates] + ["status"]
    rows = []
    for i, x in enumerate(grid.reps):
        vals = [lres.values[i], eres.values[i]] + [geo[r].values[i] for r in rates]
        tags = [name for name, dv in diverged.items() if i in dv]
        rows.append(
            [f"{x:.12g}"] + [f"{v:.12g}" for v in vals]
            + ["exceeds-cap:" + "+".join(tags) if tags else "ok"]
        )
    _write_csv(outdir / "solution.csv", header, rows)
    _write_json(outdir / "solve.json", {
        "config": cfg,
        # minimum return probability over the grid: < 1 signals transience
        # or window leakage
        "min_return_probability": float(np.min(lres.values)),
        "statuses": {
            name: {
                "status": res.status,
                "iterations": res.iterations,
                "final_increment": res.final_increment,
                "diverged_states": list(res.diverged_states),
            }
            for name, res in statuses.items()
        },
    })
    if plots:
        from . import plots as _plots

        cols = {"L": lres.values, "E_tau": eres.values}
        cols.update({f"geom_{r:g}": geo[r].values for r in rates})
        _plots.render_solution(grid.reps, cols, outdir / "solution.png")
    if not quiet:
        st = ", ".join(f"{k}={v.status}" for k, v in statuses.items())
        print(f"solved {fk.n} states: {st}")
    return EXIT_OK


def run_truncate_study(cfg: dict, outdir: Path, quiet: bool = False,
                       plots: bool = False) -> int:
    kernel, grid, target, _ = build_model(cfg)
    solver = {**SOLVER_DEFAULTS, **cfg.get("solver", {})}
    ladder = cfg.get("truncation", {}).get("ladder")
    if not ladder:
        ladder = []
        c = 2.0 if grid.space != COUNTABLE else 4.0
        while c <= grid.cutoff:
            ladder.append(c)
            c *= 2.0
    fk = discretize(kernel, grid)
    family = TruncationFamily(base=fk, target=target, ladder=tuple(ladder))
    seq = hitting_sequence(family, tol=solver["tol"])
    rows = []
    for rung, sup in zip(seq.rungs, seq.sup_sequence):
        rows.append([
            f"{rung.cutoff:.12g}", rung.kernel.n, f"{sup:.12g}",
            rung.result.status, rung.result.iterations,
        ])
    _write_csv(outdir / "rungs.csv",
               ["cutoff", "states", "sup_off_target", "status", "iterations"],
               rows)
    final = seq.rungs[-1]
    _write_csv(
        outdir / "final_values.csv",
        ["state", "E_tau_lower_bound"],
        [
            [f"{x:.12g}", f"{v:.12g}"]
            for x, v in zip(final.kernel.grid.reps, final.values)
        ],
    )
    _write_json(outdir / "truncate.json", {
        "config": cfg,
        "sup_sequence": list(seq.sup_sequence),
        "tail_agreement": seq.tail_agreement,
        "ladder": list(family.ladder),
    })
    if plots:
        from . import plots as _plots

        _plots.render_rungs(list(family.ladder), list(seq.sup_sequence),
                            outdir / "rungs.png")
    if not quiet:
        print(f"ladder {family.ladder}: sup -> {seq.sup_sequence[-1]:.6g}, "
              f"last-two agreement {seq.tail_agreement:.3g}")
    return EXIT_OK


def run_simulate(cfg: dict, outdir: Path, quiet: bool = False,
                 plots: bool = False) -> int:
    kernel, grid, target, _ = build_model(cfg)
    mc = {**MC_DEFAULTS, **cfg.get("mc", {})}
    stats = montecarlo.estimate_tail(
        kernel, target, x0=float(mc["x0"]), n_paths=int(mc["paths"]),
        horizon=int(mc["horizon"]), seed=int(mc["seed"]),
    )
    _write_json(outdir / "mc_summary.json", {
        "config": cfg,
        "stats": _jsonable(stats),
    })
    _write_csv(
        outdir / "survival.csv",
        ["n", "survival", "se"],
        [
            [s, f"{p:.12g}", f"{se:.12g}"]
            for s, p, se in zip(stats.survival_steps, stats.survival,
                                stats.survival_se)
        ],
    )
    if plots:
        from . import plots as _plots

        _plots.render_survival(stats, outdir / "survival.png")
    if not quiet:
        print(
            f"paths={stats.n_paths} censored={stats.n_censored} "
            f"mean={stats.mean:.6g} se={stats.std_error:.3g} seed={stats.seed}"
        )
    return EXIT_OK


COMMANDS = {
    "classify": run_classify,
    "solve": run_solve,
    "simulate": run_simulate,
    "truncate-study": run_truncate_study,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chainstab",
        description="hitting-time solvers and stability certificates for "
                    "Markov chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the Monte Carlo seed")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--plots", action="store_true",
                       help="also render figures next to the delimited output")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.setdefault("mc", {})["seed"] = int(args.seed)
    outdir = Path(args.out or cfg.get("output", {}).get("dir", "out"))
    try:
        return COMMANDS[args.command](cfg, outdir, quiet=args.quiet,
                                      plots=args.plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InternalConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT


if __name__ == "__main__":
    sys.exit(main())
