"""``bellsweep`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 sweep budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import lindblad, models
from . import simulate as sim
from .svg import heatmap_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4

OVERRIDES = ("kappa", "E", "gamma0", "gamma1", "gamma2", "N1", "N2")

DEFAULT_GRIDS = {
    "t": (0.0, 5.0, 51),
    "kappa": (0.05, 0.3, 26),
    "E": (0.02, 0.2, 19),
    "gamma0": (0.5, 2.0, 16),
    "varphi": (0.0, math.pi, 37),
    "N_thermal": (0.0, 0.2, 11),
}

AXIS_LABELS = {"t": "t gamma0 / kappa^2", "kappa": "kappa", "E": "E", "gamma0": "gamma0",
               "varphi": "varphi", "N_thermal": "N1 = N2"}


def parse_grid(text: str) -> np.ndarray:
    """``a:b:n`` -> n points from a to b inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise models.ConfigError(f"grid must look like a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise models.ConfigError(f"bad grid {text!r}") from exc
    if n < 1 or (n > 1 and not b > a):
        raise models.ConfigError(f"grid {text!r} must have n >= 1 and b > a")
    return np.linspace(a, b, n)


def build_spec(args, base: models.ModelSpec | None = None) -> models.ModelSpec:
    values = {}
    if args.config:
        try:
            values = models.parse_config(Path(args.config).read_text())
        except OSError as exc:
            raise models.ConfigError(f"cannot read config {args.config}: {exc}") from exc
    spec = base or models.ModelSpec()
    if values:
        # config entries replace the base field by field
        parsed = models.spec_from_mapping(values)
        spec = replace(spec, **{k: getattr(parsed, k) for k in values})
    over = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k) is not None}
    if args.dims is not None:
        over["dims"] = (args.dims, args.dims)
    try:
        return replace(spec, **over)
    except (TypeError, ValueError) as exc:
        raise models.ConfigError(str(exc)) from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value model file")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--dims", type=int, help="Fock truncation per mode")
    for name in OVERRIDES:
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--varphi", type=float, default=math.pi / 4,
                   help="Bell angle parameter (default pi/4)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellsweep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="steady state and its diagnostics")
    _common(p)
    p.add_argument("--strategy", choices=("null-space", "long-time"), default="null-space")
    p.add_argument("--theta", type=float, default=0.0, help="quadrature angle of mode 1")
    p.add_argument("--phi", type=float, default=0.0, help="quadrature angle of mode 2")
    p.add_argument("--grid", default="-4:4:81", help="phase-space grid a:b:n")

    p = sub.add_parser("transient", help="time series after the drive turns on")
    _common(p)
    p.add_argument("--tmax", type=float, default=5.0, help="horizon in units of gamma0/kappa^2")
    p.add_argument("--points", type=int, default=101)

    p = sub.add_parser("sweep", help="normalized Bell values over a 2D grid")
    _common(p)
    p.add_argument("--axes", default="t,kappa", help="two names from " + ",".join(sim.SWEEP_AXES))
    p.add_argument("--grid", action="append", default=[],
                   help="a:b:n for the first, then the second axis")
    p.add_argument("--tmax", type=float, help="shorthand for the t grid 0:tmax:51")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--budget", type=int, default=sim.DEFAULT_BUDGET)
    p.add_argument("--chsh-only", action="store_true", help="skip the CH column")

    p = sub.add_parser("optimal-r", help="r maximizing the ideal CHSH value")
    p.add_argument("--kappa", type=float, default=models.FIG3_DEFAULTS["kappa"])
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--out", help="also write the report as JSON here")

    p = sub.add_parser("validate-elimination", help="full three-mode model vs the effective model")
    _common(p)
    p.add_argument("--pump-dim", type=int, default=models.DEFAULT_PUMP_DIM)
    p.add_argument("--tmax", type=float, default=5.0)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--reference", choices=("effective", "consistent", "both"), default="both")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if the effective-model comparison exceeds 5%%")
    return parser


def _write_json(out: Path, name: str, payload: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=_jsonable))
    return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return str(v)


def cmd_steady(args) -> int:
    spec = build_spec(args)
    xs = parse_grid(args.grid)
    summary, fd, wig, pdf, _ = sim.steady(spec, args.strategy, args.varphi,
                                          args.theta, args.phi, xs)
    out = Path(args.out)
    _write_json(out, "steady_summary.json", {"summary": summary,
                                             "metadata": sim.provenance(spec, "steady")})
    fd.write(out, "fock_distribution", args.format)
    X, P = np.meshgrid(wig.xs, wig.ps)
    meta = sim.provenance(spec, "steady", theta=args.theta, phi=args.phi)
    sim.ResultTable({"x": X.ravel(), "p": P.ravel(), "W": wig.values.ravel()},
                    meta).write(out, "wigner_mode1", args.format)
    sim.ResultTable({"X1": X.ravel(), "X2": P.ravel(), "P": pdf.ravel()},
                    meta).write(out, "joint_pdf", args.format)
    for k in ("r", "n1", "n2", "var_diff", "E_N", "B_CHSH_norm", "B_CH_norm"):
        print(f"{k:12s} {summary[k]:.6g}")
    return EXIT_OK


def cmd_transient(args) -> int:
    spec = build_spec(args)
    s = np.linspace(0.0, args.tmax, args.points)
    table = sim.transient(spec, s, args.varphi)
    path = table.write(args.out, "transient", args.format)
    wins = table.metadata["violation_windows"]
    print(f"wrote {path}")
    if wins:
        for a, b in wins:
            print(f"violation window t gamma0/kappa^2 in [{a:.4g}, {b:.4g}]")
        if table.metadata["violation_to_end"]:
            print("violation persists to the end of the run")
    else:
        print("no violation")
    return EXIT_OK


def sweep_plan_from_args(args, spec) -> sim.SweepPlan:
    names = [n.strip() for n in args.axes.split(",")]
    if len(names) != 2:
        raise models.ConfigError("--axes needs exactly two names")
    grids = []
    for k, name in enumerate(names):
        if k < len(args.grid):
            grids.append(parse_grid(args.grid[k]))
        elif name == "t" and args.tmax is not None:
            grids.append(np.linspace(0.0, args.tmax, 51))
        elif name in DEFAULT_GRIDS:
            a, b, n = DEFAULT_GRIDS[name]
            grids.append(np.linspace(a, b, n))
        else:
            raise models.ConfigError(f"unknown sweep axis {name!r}")
    outputs = ("B_CHSH_norm",) if args.chsh_only else ("B_CHSH_norm", "B_CH_norm")
    try:
        return sim.SweepPlan(spec, (names[0], tuple(grids[0])), (names[1], tuple(grids[1])), outputs)
    except ValueError as exc:
        raise models.ConfigError(str(exc)) from exc


def cmd_sweep(args) -> int:
    spec = build_spec(args)
    plan = sweep_plan_from_args(args, spec)
    table = sim.sweep(plan, workers=args.workers, budget=args.budget)
    out = Path(args.out)
    path = table.write(out, "sweep", args.format)
    z = sim.grid_matrix(table, plan, "B_CHSH_norm")
    extra = {"CH": sim.grid_matrix(table, plan, "B_CH_norm")} if "B_CH_norm" in table.columns else None
    svg = heatmap_svg(plan.axis1[1], plan.axis2[1], z, level=1.0,
                      xlabel=AXIS_LABELS[plan.axis1[0]], ylabel=AXIS_LABELS[plan.axis2[0]],
                      title="normalized CHSH", extra_contours=extra)
    (out / "sweep.svg").write_text(svg)
    n_bad = len(table.metadata["errors"])
    print(f"wrote {path} and {out / 'sweep.svg'}; {plan.size} points, "
          f"{int(np.sum(z > 1))} violating, {n_bad} failed jobs")
    return EXIT_OK


def cmd_optimal_r(args) -> int:
    report = sim.optimal_r_report(args.kappa, args.tolerance)
    for k in ("r_opt", "E_opt", "r_grid_argmax", "abs_diff", "chsh_at_r_opt"):
        print(f"{k:14s} {report[k]:.10g}")
    if args.out:
        _write_json(Path(args.out), "optimal_r.json", report)
    return EXIT_OK


def cmd_validate(args) -> int:
    base = models.ModelSpec(**sim.ELIMINATION_DEFAULTS)
    spec = build_spec(args, base) if (args.config or any(
        getattr(args, k) is not None for k in OVERRIDES) or args.dims) else base
    if spec.gamma0 < 20 * spec.kappa:
        print(f"warning: gamma0 = {spec.gamma0} < 20 kappa = {20 * spec.kappa}", file=sys.stderr)
    refs = sim.ELIMINATION_REFERENCES if args.reference == "both" else (args.reference,)
    reports = {}
    for ref in refs:
        rep = sim.compare_elimination(spec, args.pump_dim, args.tmax, args.points, ref)
        reports[ref] = rep
        status = "PASS" if rep["passed"] else "FAIL"
        print(f"{ref:10s} n1 dev {rep['n1_rel_dev']:.3e}  var dev {rep['var_rel_dev']:.3e}  "
              f"pump tail {rep['pump_tail_max']:.1e}  {status}")
    _write_json(Path(args.out), "elimination.json",
                {"metadata": sim.provenance(spec, "validate-elimination", pump_dim=args.pump_dim),
                 "reports": reports})
    if args.strict and "effective" in reports and not reports["effective"]["passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {"steady": cmd_steady, "transient": cmd_transient, "sweep": cmd_sweep,
            "optimal-r": cmd_optimal_r, "validate-elimination": cmd_validate}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except models.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except sim.BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (lindblad.LindbladError, models.TruncationError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
