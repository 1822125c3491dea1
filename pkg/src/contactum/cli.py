"""``contactum`` command line: catalog, simulate, verify, hj.

Exit codes: 0 pass, 1 verification failure, 2 config error, 3 runtime
numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .contact import ModelError
from .dynamics import EscapeError, decay_check, integrate
from .exprparse import DomainError, as_expr, evaluate
from .geometry import BUILTIN_MODELS, GeometryError, builtin
from .hj import characteristic_table, hj_characteristics, hj_verify
from .suites import run_suites
from .symplectic import SymplecticError

log = logging.getLogger("contactum")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DECAY_TOLERANCE = 1e-5
HJ_RESIDUAL_TOLERANCE = 1e-9
HJ_TANGENCY_TOLERANCE = 1e-6
CHARACTERISTIC_TOLERANCE = 1e-6

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    raw = os.environ.get("CONTACTUM_LOG", "warn").strip().lower()
    level = _LEVELS.get(raw)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("contactum")
    root.handlers[:] = [handler]
    root.setLevel(level if level is not None else logging.WARNING)
    root.propagate = False
    if level is None:
        root.warning("ignoring CONTACTUM_LOG=%r; expected one of %s", raw, ", ".join(_LEVELS))


def _clean(obj):
    """Replace non-finite floats (not valid JSON) by None, numpy scalars by floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


# ---------------------------------------------------------------------------
# catalog


def _eta_text(chart) -> str:
    parts = [f"d{chart.z_name}"]
    for s, q, p in zip(chart.momentum_signs, chart.q_names, chart.p_names):
        parts.append(f"{'-' if s > 0 else '+'} {p} d{q}")
    return " ".join(parts)


def catalog_entries(name_filter: Optional[str], n: int, verbose: bool) -> List[dict]:
    out = []
    for name in BUILTIN_MODELS:
        if name_filter is not None and name != name_filter:
            continue
        atlas = builtin(name, n)
        entry = atlas.describe(verbose)
        for c, d in zip(atlas.charts, entry["charts"]):
            d["coordinates"] = list(c.names)
            d["eta"] = _eta_text(c)
        out.append(entry)
    return out


def _catalog_text(entries: Sequence[dict], verbose: bool) -> str:
    lines = []
    for e in entries:
        lines.append(f"{e['name']}  (n={e['n']}, dim={e['dim']})  {e['description']}")
        for c in e["charts"]:
            roles = c["roles"]
            lines.append(
                f"  chart {c['id']}: coords ({', '.join(c['coordinates'])}); "
                f"z={roles['z']} q={','.join(roles['q'])} p={','.join(roles['p'])}; eta = {c['eta']}"
            )
        if verbose:
            for t in e.get("transitions", []):
                lines.append(
                    f"  transition {t['source']} -> {t['target']}: ({', '.join(t['forward'])}), "
                    f"cocycle {t['cocycle']}"
                )
    return "\n".join(lines) + ("\n" if lines else "")


def cmd_catalog(args) -> int:
    entries = catalog_entries(args.name, args.n, args.verbose)
    sys.stdout.write(_catalog_text(entries, args.verbose))
    if not entries:
        log.info("no builtin model matches %r", args.name)
    if args.out:
        _write(os.path.join(_out_dir(args), "catalog.json"), dumps(entries))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# simulate


def trajectory_csv(traj, dim: int) -> str:
    header = ["t", "chart"] + [f"coord_{i}" for i in range(dim)]
    rows = [",".join(header)]
    for t, p in traj.samples:
        rows.append(",".join([_fmt(t), p.chart] + [_fmt(v) for v in p.coords]))
    return "\n".join(rows) + "\n"


def cmd_simulate(args, cfg: RunConfig) -> int:
    model = cfg.require_model()
    if cfg.initial is None:
        raise ConfigError("simulate needs 'initial'")
    traj = integrate(model, cfg.initial, cfg.t0, cfg.t1, cfg.h)
    residual = decay_check(model, traj)
    dim = cfg.atlas.charts[0].dim
    out = _out_dir(args)
    _write(os.path.join(out, "trajectory.csv"), trajectory_csv(traj, dim))
    end_t, end = traj.samples[-1]
    summary = {
        "atlas": cfg.atlas.name,
        "method": traj.method,
        "h": traj.h,
        "t0": cfg.t0,
        "t1": cfg.t1,
        "samples": len(traj),
        "decay_residual": residual,
        "decay_tolerance": DECAY_TOLERANCE * args.tolerance_scale,
        "events": [{"t": t, "source": a, "target": b} for t, a, b in traj.events],
        "end": {"t": end_t, "chart": end.chart, "coords": list(end.coords)},
    }
    _write(os.path.join(out, "summary.json"), dumps(summary))
    print(f"simulate: {len(traj)} samples, {len(traj.events)} chart switches, decay residual {residual:.3e}")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args, cfg: RunConfig) -> int:
    model = cfg.require_model()
    report = run_suites(model, cfg.seed, args.tolerance_scale, cfg.verify)
    _write(os.path.join(_out_dir(args), "verify.json"), dumps(report))
    for name in sorted(report["suites"]):
        s = report["suites"][name]
        shown = s.get("max_residual", s.get("min_abs_cocycle"))
        print(f"{'PASS' if s['pass'] else 'FAIL'} {name} {shown:.3e}")
    return EXIT_PASS if report["pass"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# hj


def _hj_residual(args, cfg: RunConfig) -> int:
    model = cfg.require_model()
    section = cfg.require_section()
    if cfg.grid is None:
        raise ConfigError("hj residual mode needs 'grid'")
    report = hj_verify(model, section, cfg.grid_chart, cfg.grid, cfg.grid_times).to_dict()
    tol = HJ_RESIDUAL_TOLERANCE * args.tolerance_scale
    report["mode"] = "residual"
    report["tolerance"] = tol
    report["tangency_tolerance"] = HJ_TANGENCY_TOLERANCE * args.tolerance_scale
    report["pass"] = report["max_residual"] <= tol
    report["tangency_pass"] = report["max_tangency"] <= report["tangency_tolerance"]
    _write(os.path.join(_out_dir(args), "hj.json"), dumps(report))
    where = report["argmax"]
    print(
        f"hj residual: max {report['max_residual']:.3e} at q={where.get('q')} t={where.get('t')}; "
        f"max tangency {report['max_tangency']:.3e}; {'PASS' if report['pass'] else 'FAIL'}"
    )
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def _hj_characteristics(args, cfg: RunConfig) -> int:
    model = cfg.require_model()
    section = cfg.require_section()
    node = cfg.characteristics or {}
    chart_id = node.get("chart", cfg.grid_chart or cfg.atlas.charts[0].id)
    try:
        chart = cfg.atlas.chart(chart_id)
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    if "q0" in node:
        launches = [tuple(float(v) for v in q) for q in node["q0"]]
    elif cfg.grid is not None:
        launches = cfg.grid.points()
    else:
        raise ConfigError("characteristics mode needs 'characteristics.q0' or 'grid'")
    if any(len(q) != chart.n for q in launches):
        raise ConfigError(f"launch points must have {chart.n} coordinates")
    t0 = float(node.get("t0", cfg.t0))
    t1 = float(node.get("t1", cfg.t1))
    h = float(node.get("h", cfg.h))
    trajs = hj_characteristics(model, section, chart_id, launches, t0, t1, h)
    rows = characteristic_table(trajs)
    header = ["launch", "t", "chart"] + [f"coord_{i}" for i in range(chart.dim)]
    lines = [",".join(header)]
    for k, t, cid, *coords in rows:
        lines.append(",".join([str(k), _fmt(t), cid] + [_fmt(v) for v in coords]))
    out = _out_dir(args)
    _write(os.path.join(out, "characteristics.csv"), "\n".join(lines) + "\n")

    report = {
        "mode": "characteristics",
        "chart": chart_id,
        "t0": t0,
        "t1": t1,
        "h": h,
        "launches": [list(q) for q in launches],
        "end": [{"chart": tr.end.chart, "coords": list(tr.end.coords)} for tr in trajs],
        "pass": True,
    }
    exact = node.get("exact")
    if exact is not None:
        # compare z(t) against a closed-form S_t(q(t)) on every sample
        expr = as_expr(exact)
        worst = 0.0
        for tr in trajs:
            for t, p in tr.samples:
                c = cfg.atlas.chart(p.chart)
                env = dict(model.parameters)
                env.update(zip(c.q_names, p.coords[1 : c.n + 1]))
                env["t"] = t
                worst = max(worst, abs(p.coords[0] - evaluate(expr, env)))
        tol = CHARACTERISTIC_TOLERANCE * args.tolerance_scale
        report.update({"exact": exact, "max_z_error": worst, "tolerance": tol, "pass": worst <= tol})
        print(f"hj characteristics: max |z - S_t(q)| {worst:.3e}; {'PASS' if worst <= tol else 'FAIL'}")
    else:
        print(f"hj characteristics: {len(trajs)} launches, {len(rows)} rows")
    _write(os.path.join(out, "hj.json"), dumps(report))
    return EXIT_PASS if report["pass"] else EXIT_FAIL


def cmd_hj(args, cfg: RunConfig) -> int:
    if args.mode == "residual":
        return _hj_residual(args, cfg)
    return _hj_characteristics(args, cfg)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--tolerance-scale", type=float, default=1.0, metavar="X", help="multiply every tolerance by X")

    parser = argparse.ArgumentParser(prog="contactum", description="Contact Hamiltonian mechanics on Darboux atlases.")
    sub = parser.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", parents=[common], help="list builtin models")
    cat.add_argument("name", nargs="?", default=None, help="only this model")
    cat.add_argument("-v", "--verbose", action="store_true", help="include transition formulas")
    cat.add_argument("--n", type=int, default=1, help="base dimension for trivial-jet and projective")
    cat.set_defaults(out=None)

    sub.add_parser("simulate", parents=[common], help="integrate a trajectory")
    sub.add_parser("verify", parents=[common], help="run the identity suites")
    hj = sub.add_parser("hj", parents=[common], help="Hamilton-Jacobi residuals or characteristics")
    hj.add_argument("--mode", choices=("residual", "characteristics"), default="residual")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.tolerance_scale > 0:
        print("error: --tolerance-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "catalog":
            return cmd_catalog(args)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config PATH")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        log.info("loaded %s (atlas %s)", args.config, cfg.atlas.name)
        handler = {"simulate": cmd_simulate, "verify": cmd_verify, "hj": cmd_hj}[args.command]
        return handler(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, EscapeError, SymplecticError, GeometryError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
