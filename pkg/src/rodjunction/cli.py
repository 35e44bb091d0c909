"""Command line driver: ``rodjunction {section,solve,verify} --config CFG``.

Exit codes: 0 success, 1 usage or I/O error, 2 no convergence or a residual
above its threshold, 3 invalid input (including unbalanced loads).
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import post, reference
from .model import ConfigError, build_network, check_balance, parse_section
from .solver import SolverOptions, solve
from .xsection import Material, SectionError, compute_H

log = logging.getLogger("rodjunction")

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_INVALID = 0, 1, 2, 3
CONFIG_VERSION = 1

DEFAULT_THRESHOLDS = {
    "grad_tol": 1e-8,
    # relative to (load scale) * (max rod length)
    "junction_couple": 1e-5,
    "end_couple": 1e-5,
}

_SOLVER_KEYS = ("segments", "g_tol", "max_iter", "armijo_c1", "backtrack", "optimizer", "memory", "init", "seed", "amplitude", "pin_junction", "threads", "stall_iter", "precondition")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be an object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"version: expected {CONFIG_VERSION}, got {cfg.get('version')!r}")
    return cfg


def _parse_init(text):
    if text == "straight":
        return "straight", 0.0
    if text.startswith("perturbed:"):
        try:
            amp = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--init: bad amplitude in {text!r}") from None
        if not (amp >= 0 and math.isfinite(amp)):
            raise UsageError("--init: amplitude must be a finite number >= 0")
        return "perturbed", amp
    raise UsageError(f"--init: expected 'straight' or 'perturbed:AMP', got {text!r}")


def _solver_options(cfg, args):
    sc = dict(cfg.get("solver", {}) or {})
    unknown = set(sc) - set(_SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"solver: unknown keys {sorted(unknown)}")
    if getattr(args, "segments", None) is not None:
        sc["segments"] = args.segments
    if getattr(args, "seed", None) is not None:
        sc["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        sc["threads"] = args.threads
    if getattr(args, "init", None) is not None:
        sc["init"], sc["amplitude"] = _parse_init(args.init)
    if sc.get("init") == "provided":
        raise ConfigError("solver.init: 'provided' is library-only")
    try:
        return SolverOptions(**sc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None


def _thresholds(cfg):
    th = dict(DEFAULT_THRESHOLDS)
    extra = cfg.get("thresholds", {}) or {}
    unknown = set(extra) - set(th)
    if unknown:
        raise ConfigError(f"thresholds: unknown keys {sorted(unknown)}")
    for k, v in extra.items():
        try:
            th[k] = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"thresholds.{k}: expected a number") from None
    return th


def normalized_config(network, options, thresholds, allow_unbalanced):
    """Parsed config with resolved H and matrix frames; re-running it reproduces outputs."""
    rods = []
    for r in network.rods:
        rods.append({
            "length": r.length,
            "frame": {"matrix": r.frame.tolist()},
            "stiffness": {"H": r.stiffness.tolist()},
            "loads": {"distributed": r.load.to_json(), "end_force": r.end_force.tolist()},
        })
    # thread count is an execution detail and does not change any output
    solver = {k: getattr(options, k) for k in _SOLVER_KEYS if k != "threads"}
    return {
        "version": CONFIG_VERSION,
        "rods": rods,
        "solver": solver,
        "thresholds": thresholds,
        "allow_unbalanced": bool(allow_unbalanced),
    }


def _gate(report, network, thresholds):
    res = report.residuals
    scale = network.load_scale() * max(r.length for r in network.rods)
    checks = {
        "junction_couple": res["junction_couple_discrete"] <= thresholds["junction_couple"] * scale + 1e-12,
        "end_couple": max(res["end_couple_norms"]) <= thresholds["end_couple"] * scale + 1e-12,
        "junction_spreads": res["junction_rotation_spread"] <= 1e-12 and res["junction_position_spread"] <= 1e-12,
    }
    return checks


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------ subcommands


def cmd_section(args):
    cfg = _load_config(args.config)
    out = []
    if "section" in cfg:
        items = [("section", cfg)]
    else:
        items = [(f"rods[{i}].stiffness", rc.get("stiffness", {})) for i, rc in enumerate(cfg.get("rods", []))]
        items = [(w, s) for w, s in items if isinstance(s, dict) and "section" in s]
    if not items:
        raise ConfigError("section: config has no 'section' entry")
    for where, spec in items:
        geom = parse_section(spec["section"], f"{where}.section")
        m = spec.get("material")
        if not isinstance(m, dict):
            raise ConfigError(f"{where}.material: required")
        try:
            mat = Material(float(m["lambda"]), float(m["mu"]))
            size = float(spec.get("mesh_size", 0.05 * geom.diameter()))
            out.append(compute_H(geom, mat, size).to_json())
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    doc = out[0] if "section" in cfg else out
    text = _dump(doc)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "section.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args):
    cfg = _load_config(args.config)
    reports = []
    network = build_network(cfg, reports)
    options = _solver_options(cfg, args)
    thresholds = _thresholds(cfg)
    if "g_tol" not in (cfg.get("solver") or {}):
        options.g_tol = thresholds["grad_tol"]
    allow = bool(args.allow_unbalanced or cfg.get("allow_unbalanced", False))
    bal = check_balance(network)
    if not bal.passed and not allow:
        raise ConfigError(
            "loads violate force balance: sum_i p_i(0) = 0 fails, residual "
            f"{np.array2string(bal.residual, precision=6)} (use --allow-unbalanced to override)"
        )
    out = Path(args.out or cfg.get("output") or "out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    fld, trace = solve(network, options)
    report = post.residuals(fld, network)
    checks = _gate(report, network, thresholds)
    extra = {
        "converged": trace.converged,
        "termination": trace.reason,
        "iterations": len(trace.iterations) - 1,
        "gradient_norm": trace.iterations[-1][2],
        "checks": checks,
        "force_balance": {"residual": bal.residual.tolist(), "passed": bal.passed},
    }
    post.write_report(report, out, plot_data=args.emit_plot_data, extra=extra)
    (out / "trace.csv").write_text(trace.to_csv())
    (out / "config.normalized.json").write_text(_dump(normalized_config(network, options, thresholds, allow)))
    if any(r is not None for r in reports):
        (out / "sections.json").write_text(_dump(reports))
    if not trace.converged:
        print(f"solver did not converge: {trace.reason} after {len(trace.iterations) - 1} iterations", file=sys.stderr)
        return EXIT_FAIL
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        print(f"residual thresholds exceeded: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args):
    cfg = _load_config(args.config)
    network = build_network(cfg)
    thresholds = _thresholds(cfg)
    sol = Path(args.solution)
    try:
        fld = post.read_solution(sol, len(network))
    except (OSError, KeyError, ValueError, IndexError) as exc:
        raise UsageError(f"cannot read solution from {sol}: {exc}") from None
    try:
        report = post.residuals(fld, network)
    except ValueError as exc:
        raise ConfigError(f"solution does not match the config: {exc}") from None
    checks = _gate(report, network, thresholds)
    text = _dump({"energy": report.energy, "residuals": report.residuals, "checks": checks})
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_linref(args):
    cfg = _load_config(args.config)
    network = build_network(cfg)
    sol = reference.solve_linearized(network, args.segments or 200)
    rows = ["rod,x1,y1,y2,y3,w1,w2,w3"]
    for i, (x, y, w) in enumerate(zip(sol.x, sol.y, sol.omega)):
        for k in range(len(x)):
            rows.append(",".join([str(i)] + [f"{v:.17g}" for v in (x[k], *y[k], *w[k])]))
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "linref.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="rodjunction", description="Junction rod networks: stiffness, equilibrium and residual checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{section,solve,verify}", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("section", help="compute the stiffness form H of a cross-section")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_section)

    s = sub.add_parser("solve", help="minimize the energy and write the equilibrium report")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--init", help="straight | perturbed:AMP")
    s.add_argument("--segments", type=int)
    s.add_argument("--allow-unbalanced", action="store_true")
    s.add_argument("--emit-plot-data", action="store_true")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="recompute residuals of a written solution")
    s.add_argument("--config", required=True)
    s.add_argument("--solution", required=True, help="directory written by 'solve'")
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("linref")
    s.add_argument("--config", required=True)
    s.add_argument("--segments", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_linref)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SectionError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except reference.ReferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
